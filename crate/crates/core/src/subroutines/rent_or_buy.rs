use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::aggregation::{atomic_cost, route_demands, RoutedTree};
use crate::error::{Error, Result};
use crate::graph::dijkstra;
use crate::instance::{EdgeIx, Instance, NodeIx};
use crate::subroutines::steiner::{steiner_tree, STEINER_RATIO};

/// Expected approximation factor of sample-and-augment with the Steiner heuristic.
pub const ROB_RATIO: f64 = 2.0 + STEINER_RATIO;

#[derive(Debug, Clone, PartialEq)]
pub struct RobSolution {
    pub tree: RoutedTree,
    /// `Σ_e l_e · min(x_e, M)`.
    pub cost_under_f: f64,
    pub marked: Vec<NodeIx>,
}

/// Single-sink rent-or-buy with buying cost `M`, by sample and augment.
///
/// Each demand node is marked with probability `min(1, d_v / M)`. A Steiner
/// tree is bought on the marked nodes and the root; the remaining demand
/// nodes are then attached, closest first, by a shortest path to the
/// component built so far.
pub fn rent_or_buy(inst: &Instance, m: f64, seed: u64) -> Result<RobSolution> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::InvalidArgument(format!("M = {m} must be positive")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let root = inst.root();
    let mut marked = Vec::new();
    for v in inst.demand_nodes().filter(|&v| v != root) {
        let p = (inst.demand(v) as f64 / m).min(1.0);
        if rng.gen::<f64>() < p {
            marked.push(v);
        }
    }
    let lengths = inst.lengths();
    let mut terminals = marked.clone();
    terminals.push(root);
    let bought = steiner_tree(inst, &terminals, &lengths)?;

    let mut edges: BTreeSet<EdgeIx> = bought.edges.iter().copied().collect();
    let mut in_component = vec![false; inst.node_count()];
    in_component[root] = true;
    for &e in &edges {
        in_component[inst.edge(e).u] = true;
        in_component[inst.edge(e).v] = true;
    }
    loop {
        let sources: Vec<NodeIx> = (0..inst.node_count()).filter(|&v| in_component[v]).collect();
        let sp = dijkstra(inst, &sources, &lengths, None);
        let next = inst
            .demand_nodes()
            .filter(|&v| !in_component[v])
            .min_by(|&a, &b| sp.dist[a].total_cmp(&sp.dist[b]).then(a.cmp(&b)));
        let Some(v) = next else { break };
        for w in sp.path_nodes(v) {
            in_component[w] = true;
        }
        edges.extend(sp.path_edges(v));
    }
    let edges: Vec<EdgeIx> = edges.into_iter().collect();
    let tree = route_demands(inst, &edges)?;
    let cost_under_f = tree
        .edge_pairs()
        .map(|(e, x)| inst.edge(e).length * (x as f64).min(m))
        .sum();
    Ok(RobSolution { tree, cost_under_f, marked })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobBound {
    pub i: u32,
    pub value: f64,
}

/// Derives the seed of trial `t` at level `i` from a master seed.
pub fn rob_seed(master: u64, i: u32, t: u32) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((i as u64) << 32) | t as u64);
    rng.gen()
}

/// `Ã_i = A_i(T̃_i)` for each level, where `T̃_i` is the best of `trials`
/// rent-or-buy runs with `M = 2^i`.
pub fn rob_lower_bounds_with_trees(
    inst: &Instance,
    seed: u64,
    trials: u32,
) -> Result<Vec<(RobBound, RoutedTree)>> {
    let levels = inst.demand_profile().levels as u32;
    let mut out = Vec::with_capacity(levels as usize);
    for i in 0..levels {
        let mut best: Option<(f64, RoutedTree)> = None;
        for t in 0..trials.max(1) {
            let sol = rent_or_buy(inst, (1u64 << i) as f64, rob_seed(seed, i, t))?;
            let value = atomic_cost(&sol.tree, inst, i)?;
            if best.as_ref().is_none_or(|(b, _)| value < *b) {
                best = Some((value, sol.tree));
            }
        }
        let (value, tree) = best.expect("at least one trial");
        out.push((RobBound { i, value }, tree));
    }
    Ok(out)
}

pub fn rob_lower_bounds(inst: &Instance, seed: u64, trials: u32) -> Result<Vec<RobBound>> {
    Ok(rob_lower_bounds_with_trees(inst, seed, trials)?
        .into_iter()
        .map(|(b, _)| b)
        .collect())
}
