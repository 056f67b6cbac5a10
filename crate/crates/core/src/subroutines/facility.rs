use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{dijkstra, ShortestPaths};
use crate::instance::{Instance, NodeIx};

/// Approximation factor of add/drop/swap local search for metric facility location.
pub const FACILITY_RATIO: f64 = 3.0;

/// Load relaxation of the lower-bounded variant: every open facility serves at least `L / 3`.
pub const LBFL_LOAD_RELAXATION: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FacilitySolution {
    pub open: Vec<NodeIx>,
    /// Demand node → facility serving it.
    pub assignment: BTreeMap<NodeIx, NodeIx>,
    /// Facility opening costs plus weighted connection costs.
    pub cost: f64,
    pub min_load_achieved: f64,
}

/// Shortest paths from each of `sources`.
fn all_pairs(inst: &Instance, sources: &[NodeIx], weights: &[f64]) -> BTreeMap<NodeIx, ShortestPaths> {
    sources
        .iter()
        .map(|&s| (s, dijkstra(inst, &[s], weights, None)))
        .collect()
}

fn nearest(open: &[NodeIx], v: NodeIx, sp: &BTreeMap<NodeIx, ShortestPaths>) -> (NodeIx, f64) {
    let mut best = (open[0], sp[&open[0]].dist[v]);
    for &f in &open[1..] {
        let d = sp[&f].dist[v];
        if d < best.1 {
            best = (f, d);
        }
    }
    best
}

fn assemble(
    open: Vec<NodeIx>,
    demands: &[u64],
    opening: f64,
    sp: &BTreeMap<NodeIx, ShortestPaths>,
) -> FacilitySolution {
    let mut assignment = BTreeMap::new();
    let mut load: BTreeMap<NodeIx, u64> = open.iter().map(|&f| (f, 0)).collect();
    let mut cost = opening;
    for (v, &d) in demands.iter().enumerate().filter(|(_, &d)| d > 0) {
        let (f, dist) = nearest(&open, v, sp);
        assignment.insert(v, f);
        *load.get_mut(&f).expect("open") += d;
        cost += d as f64 * dist;
    }
    let min_load_achieved = load.values().copied().min().unwrap_or(0) as f64;
    FacilitySolution { open, assignment, cost, min_load_achieved }
}

/// Metric uncapacitated facility location by local search over add, drop and swap moves.
///
/// `facility_cost[v]` is `None` when `v` may not host a facility.
pub fn facility_location(
    inst: &Instance,
    demands: &[u64],
    facility_cost: &[Option<f64>],
    weights: &[f64],
) -> Result<FacilitySolution> {
    let candidates: Vec<NodeIx> = (0..inst.node_count()).filter(|&v| facility_cost[v].is_some()).collect();
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("facility_location needs a candidate facility".into()));
    }
    let sp = all_pairs(inst, &candidates, weights);
    let clients: Vec<NodeIx> = (0..inst.node_count()).filter(|&v| demands[v] > 0).collect();
    let total = |open: &[bool]| -> f64 {
        let opened: Vec<NodeIx> = candidates.iter().copied().filter(|&f| open[f]).collect();
        if opened.is_empty() {
            return f64::INFINITY;
        }
        let opening: f64 = opened.iter().map(|&f| facility_cost[f].unwrap()).sum();
        opening
            + clients
                .iter()
                .map(|&v| demands[v] as f64 * nearest(&opened, v, &sp).1)
                .sum::<f64>()
    };

    let mut open = vec![false; inst.node_count()];
    let first = candidates
        .iter()
        .copied()
        .min_by(|&a, &b| {
            let mut oa = vec![false; inst.node_count()];
            oa[a] = true;
            let mut ob = vec![false; inst.node_count()];
            ob[b] = true;
            total(&oa).total_cmp(&total(&ob)).then(a.cmp(&b))
        })
        .expect("candidate");
    open[first] = true;
    let mut current = total(&open);
    let step_cap = 100 * candidates.len() * candidates.len() + 100;
    for _ in 0..step_cap {
        let mut improved = false;
        let snapshot = open.clone();
        let toggles = candidates.iter().map(|&a| (a, a));
        let swaps = candidates
            .iter()
            .flat_map(|&a| candidates.iter().map(move |&b| (a, b)))
            .filter(|&(a, b)| a != b && snapshot[a] && !snapshot[b]);
        for (a, b) in toggles.chain(swaps) {
            let mut next = open.clone();
            next[a] = !next[a];
            if a != b {
                next[b] = true;
            }
            let c = total(&next);
            if c < current * (1.0 - 1e-12) {
                open = next;
                current = c;
                improved = true;
                break;
            }
        }
        if !improved {
            break;
        }
    }
    let opened: Vec<NodeIx> = candidates.iter().copied().filter(|&f| open[f]).collect();
    let opening = opened.iter().map(|&f| facility_cost[f].unwrap()).sum();
    Ok(assemble(opened, demands, opening, &sp))
}

/// Lower-bounded facility location by greedy ball aggregation.
///
/// Each demand node `u` gets the smallest radius `r_u` whose ball holds `L`
/// demand. Nodes are scanned by increasing radius and open a facility unless
/// one is already open within `2 r_u`. Facilities serving less than `L / 3`
/// are then closed one at a time, smallest load first. When the total demand
/// is below `L`, everything goes to the root.
pub fn lbfl(inst: &Instance, demands: &[u64], lower_bound: f64, weights: &[f64]) -> Result<FacilitySolution> {
    if !(lower_bound > 0.0) {
        return Err(Error::InvalidArgument(format!("lower bound {lower_bound} must be positive")));
    }
    let clients: Vec<NodeIx> = (0..inst.node_count()).filter(|&v| demands[v] > 0).collect();
    let total: u64 = clients.iter().map(|&v| demands[v]).sum();
    if clients.is_empty() || (total as f64) < lower_bound {
        let root = inst.root();
        let sp = all_pairs(inst, &[root], weights);
        let mut sol = assemble(vec![root], demands, 0.0, &sp);
        sol.min_load_achieved = total as f64;
        return Ok(sol);
    }
    let sp = all_pairs(inst, &clients, weights);

    let mut radius: Vec<(f64, NodeIx)> = Vec::with_capacity(clients.len());
    for &u in &clients {
        let mut by_dist: Vec<(f64, NodeIx)> = clients.iter().map(|&v| (sp[&u].dist[v], v)).collect();
        by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut gathered = 0u64;
        let mut r = f64::INFINITY;
        for (d, v) in by_dist {
            gathered += demands[v];
            if gathered as f64 >= lower_bound {
                r = d;
                break;
            }
        }
        radius.push((r, u));
    }
    radius.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut open: Vec<NodeIx> = Vec::new();
    for &(r, u) in &radius {
        if !open.iter().any(|&f| sp[&f].dist[u] <= 2.0 * r) {
            open.push(u);
        }
    }
    open.sort();

    let threshold = lower_bound / LBFL_LOAD_RELAXATION;
    loop {
        let sol = assemble(open.clone(), demands, 0.0, &sp);
        if open.len() <= 1 || sol.min_load_achieved >= threshold {
            return Ok(sol);
        }
        let mut load: BTreeMap<NodeIx, u64> = open.iter().map(|&f| (f, 0)).collect();
        for (&v, &f) in &sol.assignment {
            *load.get_mut(&f).expect("open") += demands[v];
        }
        let (weakest, _) = load
            .iter()
            .min_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(b.0)))
            .map(|(&f, &l)| (f, l))
            .expect("open facility");
        open.retain(|&f| f != weakest);
    }
}
