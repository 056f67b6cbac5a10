//! Stage-wise randomized tree construction for a γ-regular cost function.
//!
//! Stage `k` lays pipe type `k` in two steps: a Steiner step on the current
//! demand nodes, cut into subtrees carrying at least `u_k`, and a facility
//! step on the original demands with lower bound `b_k`. Each step ends with
//! a consolidation that moves all demand of a part to one randomly chosen
//! node, with probabilities proportional to demand.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::aggregation::{route_demands, route_with, RoutedTree};
use crate::error::{Error, Result};
use crate::graph::dijkstra;
use crate::instance::{EdgeIx, Instance, NodeIx};
use crate::pipes::{is_gamma_regular, thresholds, working_pipes, AlphaVector, PipeSchedule};
use crate::rational::{self, Rational};
use crate::regularize::regularize;
use crate::subroutines::{lbfl, steiner_tree};

const STEP_STEINER: u64 = 2;
const STEP_FACILITY: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StageCosts {
    /// `σ_k` times the length of the pipes kept by the Steiner step.
    pub p_sigma: f64,
    /// `δ_k` times the length-weighted current demand routed by the facility step.
    pub p_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub k: usize,
    pub sigma: f64,
    pub delta: f64,
    pub capacity: f64,
    /// `b_k`; absent for the last pipe.
    pub significance: Option<f64>,
    pub costs: StageCosts,
    pub cuts: usize,
    pub facilities: usize,
    /// The facility step was replaced by delivery of all current demand to the root.
    pub delivered: bool,
    /// Current demand per node id after the Steiner-step consolidation.
    pub demand_after_steiner: BTreeMap<String, u64>,
    /// Current demand per node id after the facility-step consolidation.
    pub demand_after_facility: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmOutcome {
    pub tree: RoutedTree,
    pub stages: Vec<StageRecord>,
    /// Stage whose facility step found less than `b_k` demand and sent everything to the root.
    pub fallback_stage: Option<usize>,
}

fn stream(seed: u64, k: usize, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((k as u64) << 8) | step);
    rng
}

fn demand_map(inst: &Instance, current: &[u64]) -> BTreeMap<String, u64> {
    current
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > 0)
        .map(|(v, &d)| (inst.id(v).to_string(), d))
        .collect()
}

/// Picks one of `nodes` with probability proportional to `weights[v]`.
fn choose(nodes: &[NodeIx], weights: &[u64], rng: &mut ChaCha8Rng) -> NodeIx {
    let w: Vec<u64> = nodes.iter().map(|&v| weights[v]).collect();
    match WeightedIndex::new(&w) {
        Ok(dist) => nodes[dist.sample(rng)],
        Err(_) => nodes[0],
    }
}

/// Cuts edges of `tree` bottom-up (post-order, children by node index) whenever the
/// residual flow below exceeds `cap`. Returns the component root of every tree node.
fn cut_forest(inst: &Instance, tree: &RoutedTree, current: &[u64], cap: &Rational) -> (Vec<Option<NodeIx>>, usize) {
    let n = inst.node_count();
    let root = inst.root();
    let mut children: Vec<Vec<NodeIx>> = vec![Vec::new(); n];
    for v in 0..n {
        if let Some((p, _)) = tree.parent(v) {
            children[p].push(v);
        }
    }
    let mut order = Vec::new();
    let mut stack = vec![(root, false)];
    while let Some((v, expanded)) = stack.pop() {
        if expanded {
            order.push(v);
        } else {
            stack.push((v, true));
            for &c in children[v].iter().rev() {
                stack.push((c, false));
            }
        }
    }
    let mut residual = current.to_vec();
    let mut is_cut = vec![false; n];
    let mut cuts = 0;
    for &v in &order {
        let below: u64 = children[v].iter().filter(|&&c| !is_cut[c]).map(|&c| residual[c]).sum();
        residual[v] = current[v] + below;
        if v != root && rational::int(residual[v] as i64) > *cap {
            is_cut[v] = true;
            cuts += 1;
        }
    }
    let mut component = vec![None; n];
    for &v in order.iter().rev() {
        component[v] = Some(if v == root || is_cut[v] {
            v
        } else {
            component[tree.parent(v).expect("non-root tree node has a parent").0].expect("parent visited first")
        });
    }
    (component, cuts)
}

/// Builds a tree for the γ-regular `alpha` by running one stage per working pipe.
pub fn gmm_tree(inst: &Instance, alpha: &AlphaVector, gamma: &Rational, seed: u64) -> Result<GmmOutcome> {
    let profile = inst.demand_profile();
    if alpha.d() != profile.d {
        return Err(Error::InvalidArgument(format!(
            "alpha has D = {} but the instance has D = {}",
            alpha.d(),
            profile.d
        )));
    }
    let report = is_gamma_regular(alpha, gamma);
    if !report.regular {
        return Err(Error::NotRegular(format!("{:?}", report.violation)));
    }
    let pipes = working_pipes(alpha);
    let schedule = PipeSchedule::new(alpha.d(), pipes.clone())?;
    let th = thresholds(&schedule, gamma)?;

    let n = inst.node_count();
    let root = inst.root();
    let lengths = inst.lengths();
    let hops = vec![1.0; lengths.len()];
    let original = inst.demands().to_vec();
    let mut current = original.clone();
    let mut laid: BTreeSet<EdgeIx> = BTreeSet::new();
    let mut stages = Vec::with_capacity(pipes.len());
    let mut fallback_stage = None;

    for (k, pipe) in pipes.iter().enumerate() {
        let sigma = rational::to_f64(&pipe.sigma);
        let delta = rational::to_f64(&pipe.delta);
        let last = k + 1 == pipes.len();
        let mut costs = StageCosts::default();

        // Steiner step.
        let mut terminals: Vec<NodeIx> = (0..n).filter(|&v| current[v] > 0).collect();
        terminals.push(root);
        let weights: Vec<f64> = if pipe.sigma.is_zero() {
            hops.clone()
        } else {
            lengths.iter().map(|l| l * sigma).collect()
        };
        let st = steiner_tree(inst, &terminals, &weights)?;
        let routed = route_with(inst, &st.edges, root, &current)?;
        let (component, cuts) = cut_forest(inst, &routed, &current, &th.u[k]);
        for &e in routed.edges() {
            let edge = inst.edge(e);
            let child = if routed.parent(edge.u).is_some_and(|(_, pe)| pe == e) { edge.u } else { edge.v };
            if component[child] == component[inst.edge(e).other(child)] {
                laid.insert(e);
                costs.p_sigma += sigma * edge.length;
            }
        }
        let mut parts: BTreeMap<NodeIx, Vec<NodeIx>> = BTreeMap::new();
        for v in (0..n).filter(|&v| current[v] > 0) {
            if let Some(c) = component[v].filter(|&c| c != root) {
                parts.entry(c).or_default().push(v);
            }
        }
        let mut rng = stream(seed, k, STEP_STEINER);
        for members in parts.values() {
            let chosen = choose(members, &current, &mut rng);
            let total: u64 = members.iter().map(|&v| current[v]).sum();
            for &v in members {
                current[v] = 0;
            }
            current[chosen] = total;
        }
        let demand_after_steiner = demand_map(inst, &current);

        // Facility step on the original demands, or delivery to the root.
        let significance = th.b.get(k).cloned();
        let deliver = match &significance {
            None => true,
            Some(b) => rational::int(profile.total as i64) < *b,
        };
        let mut facilities = 0;
        if deliver {
            if !last {
                fallback_stage = Some(k);
            }
            let sp = dijkstra(inst, &[root], &lengths, None);
            for v in (0..n).filter(|&v| current[v] > 0) {
                laid.extend(sp.path_edges(v));
                costs.p_delta += delta * current[v] as f64 * sp.dist[v];
            }
            let total: u64 = current.iter().sum();
            current = vec![0; n];
            current[root] = total;
        } else {
            let b = rational::to_f64(significance.as_ref().expect("not delivering"));
            let sol = lbfl(inst, &original, b, &lengths)?;
            facilities = sol.open.len();
            let mut served: BTreeMap<NodeIx, Vec<NodeIx>> = BTreeMap::new();
            for (&v, &f) in &sol.assignment {
                served.entry(f).or_default().push(v);
            }
            let mut rng = stream(seed, k, STEP_FACILITY);
            for (&f, members) in &served {
                let sp = dijkstra(inst, &[f], &lengths, None);
                for &v in members {
                    laid.extend(sp.path_edges(v));
                    costs.p_delta += delta * current[v] as f64 * sp.dist[v];
                }
                let chosen = choose(members, &original, &mut rng);
                let total: u64 = members.iter().map(|&v| current[v]).sum();
                for &v in members {
                    current[v] = 0;
                }
                current[chosen] = total;
            }
        }
        stages.push(StageRecord {
            k,
            sigma,
            delta,
            capacity: rational::to_f64(&th.u[k]),
            significance: significance.as_ref().map(rational::to_f64),
            costs,
            cuts,
            facilities,
            delivered: deliver,
            demand_after_steiner,
            demand_after_facility: demand_map(inst, &current),
        });
        if deliver {
            break;
        }
    }

    let mut allowed = vec![false; inst.edges().len()];
    for &e in &laid {
        allowed[e] = true;
    }
    let sp = dijkstra(inst, &[root], &lengths, Some(&allowed));
    let mut edges = BTreeSet::new();
    for v in inst.demand_nodes() {
        if !sp.reachable(v) {
            return Err(Error::Internal(format!("demand node {} not connected by laid pipes", inst.id(v))));
        }
        edges.extend(sp.path_edges(v));
    }
    let edges: Vec<EdgeIx> = edges.into_iter().collect();
    Ok(GmmOutcome { tree: route_demands(inst, &edges)?, stages, fallback_stage })
}

/// Regularizes an arbitrary nonzero `alpha` and runs [`gmm_tree`] on the result.
pub fn oracle_subroutine_a(inst: &Instance, alpha: &AlphaVector, gamma: &Rational, seed: u64) -> Result<RoutedTree> {
    if alpha.k() == 0 {
        return Err(Error::InvalidArgument("alpha must have a positive entry".into()));
    }
    let (regular, _) = regularize(alpha, gamma)?;
    Ok(gmm_tree(inst, &regular, gamma, seed)?.tree)
}
