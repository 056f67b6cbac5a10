use std::collections::BTreeSet;

use crate::aggregation::{route_with, RoutedTree};
use crate::error::{Error, Result};
use crate::graph::{dijkstra, shortest_paths_from, UnionFind};
use crate::instance::{EdgeIx, Instance, NodeIx};

/// Approximation factor of the metric-closure heuristic.
pub const STEINER_RATIO: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SteinerSolution {
    /// Sorted edge indices.
    pub edges: Vec<EdgeIx>,
    pub cost: f64,
    pub ratio_bound: f64,
}

fn kruskal(candidates: &mut [(f64, usize, usize, EdgeIx)], n: usize) -> Vec<EdgeIx> {
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2, a.3).cmp(&(b.1, b.2, b.3))));
    let mut uf = UnionFind::new(n);
    candidates
        .iter()
        .filter(|c| uf.union(c.1, c.2))
        .map(|c| c.3)
        .collect()
}

/// Steiner tree on `terminals` by MST of the metric closure, expanded, re-spanned and pruned.
pub fn steiner_tree(inst: &Instance, terminals: &[NodeIx], weights: &[f64]) -> Result<SteinerSolution> {
    let terms: Vec<NodeIx> = terminals.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if terms.is_empty() {
        return Err(Error::InvalidArgument("steiner_tree needs a terminal".into()));
    }
    if terms.len() == 1 {
        return Ok(SteinerSolution { edges: Vec::new(), cost: 0.0, ratio_bound: STEINER_RATIO });
    }
    let paths: Vec<_> = terms.iter().map(|&t| dijkstra(inst, &[t], weights, None)).collect();

    let mut closure = Vec::new();
    for a in 0..terms.len() {
        for b in a + 1..terms.len() {
            closure.push((paths[a].dist[terms[b]], a, b));
        }
    }
    closure.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let mut uf = UnionFind::new(terms.len());
    let mut union_edges = BTreeSet::new();
    for &(_, a, b) in &closure {
        if uf.union(a, b) {
            union_edges.extend(paths[a].path_edges(terms[b]));
        }
    }

    let mut candidates: Vec<(f64, usize, usize, EdgeIx)> = union_edges
        .iter()
        .map(|&e| {
            let edge = inst.edge(e);
            (weights[e], edge.u, edge.v, e)
        })
        .collect();
    let tree = kruskal(&mut candidates, inst.node_count());
    let edges = prune(inst, tree, &terms);
    let cost = edges.iter().map(|&e| weights[e]).sum();
    Ok(SteinerSolution { edges, cost, ratio_bound: STEINER_RATIO })
}

/// Repeatedly removes leaves that are not terminals.
pub fn prune(inst: &Instance, edges: Vec<EdgeIx>, terminals: &[NodeIx]) -> Vec<EdgeIx> {
    let mut keep: BTreeSet<EdgeIx> = edges.into_iter().collect();
    let is_terminal: BTreeSet<NodeIx> = terminals.iter().copied().collect();
    loop {
        let mut degree = vec![0usize; inst.node_count()];
        for &e in &keep {
            degree[inst.edge(e).u] += 1;
            degree[inst.edge(e).v] += 1;
        }
        let leaf_edges: Vec<EdgeIx> = keep
            .iter()
            .copied()
            .filter(|&e| {
                let edge = inst.edge(e);
                (degree[edge.u] == 1 && !is_terminal.contains(&edge.u))
                    || (degree[edge.v] == 1 && !is_terminal.contains(&edge.v))
            })
            .collect();
        if leaf_edges.is_empty() {
            return keep.into_iter().collect();
        }
        for e in leaf_edges {
            keep.remove(&e);
        }
    }
}

/// Union of shortest paths (by length) from `sources` to `sink`, carrying the sources' demands.
pub fn shortest_path_tree(inst: &Instance, sources: &[NodeIx], sink: NodeIx) -> Result<RoutedTree> {
    let sp = shortest_paths_from(inst, sink);
    let mut edges = BTreeSet::new();
    let mut demands = vec![0u64; inst.node_count()];
    for &s in sources {
        edges.extend(sp.path_edges(s));
        demands[s] = inst.demand(s);
    }
    let edges: Vec<EdgeIx> = edges.into_iter().collect();
    route_with(inst, &edges, sink, &demands)
}
