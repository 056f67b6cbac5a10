//! Atomic functions, routed trees, cost evaluation and tree distributions.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{EdgeIx, Instance, NodeIx};
use crate::pipes::{AlphaVector, PipeSchedule};
use crate::rational::{self, Rational};

/// A tree rooted at the instance root with the flow each edge carries toward it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RoutedTree {
    /// Sorted edge indices.
    edges: Vec<EdgeIx>,
    /// `flows[j]` is the flow on `edges[j]`.
    flows: Vec<u64>,
    /// Parent of each tree node toward the root, with the connecting edge.
    parent: Vec<Option<(NodeIx, EdgeIx)>>,
}

impl RoutedTree {
    pub fn edges(&self) -> &[EdgeIx] {
        &self.edges
    }

    pub fn flows(&self) -> &[u64] {
        &self.flows
    }

    pub fn flow_on(&self, e: EdgeIx) -> u64 {
        self.edges
            .binary_search(&e)
            .map(|j| self.flows[j])
            .unwrap_or(0)
    }

    pub fn parent(&self, v: NodeIx) -> Option<(NodeIx, EdgeIx)> {
        self.parent[v]
    }

    pub fn edge_pairs(&self) -> impl Iterator<Item = (EdgeIx, u64)> + '_ {
        self.edges.iter().copied().zip(self.flows.iter().copied())
    }

    /// Edges as `[u, v]` id pairs with `u < v`.
    pub fn edge_ids(&self, inst: &Instance) -> Vec<[String; 2]> {
        self.edges
            .iter()
            .map(|&e| {
                let edge = inst.edge(e);
                [inst.id(edge.u).to_string(), inst.id(edge.v).to_string()]
            })
            .collect()
    }
}

/// Orients `edges` toward the instance root and computes the flow of the instance demands.
pub fn route_demands(inst: &Instance, edges: &[EdgeIx]) -> Result<RoutedTree> {
    route_with(inst, edges, inst.root(), inst.demands())
}

/// Routes `demands` toward `root` over the tree formed by `edges`.
///
/// Demand sitting at the root is delivered without using any edge.
pub fn route_with(inst: &Instance, edges: &[EdgeIx], root: NodeIx, demands: &[u64]) -> Result<RoutedTree> {
    let set: BTreeSet<EdgeIx> = edges.iter().copied().collect();
    let n = inst.node_count();
    let mut in_set = vec![false; inst.edges().len()];
    for &e in &set {
        if e >= in_set.len() {
            return Err(Error::NotATree(format!("edge index {e} out of range")));
        }
        in_set[e] = true;
    }
    let mut parent: Vec<Option<(NodeIx, EdgeIx)>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut used_edge = vec![false; inst.edges().len()];
    let mut order = Vec::new();
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &(v, e) in inst.neighbors(u) {
            if !in_set[e] || used_edge[e] {
                continue;
            }
            used_edge[e] = true;
            if seen[v] {
                return Err(Error::NotATree(format!(
                    "edge {}-{} closes a cycle",
                    inst.id(u),
                    inst.id(v)
                )));
            }
            seen[v] = true;
            parent[v] = Some((u, e));
            queue.push_back(v);
        }
    }
    if let Some(&e) = set.iter().find(|&&e| !used_edge[e]) {
        let edge = inst.edge(e);
        return Err(Error::NotATree(format!(
            "edge {}-{} is not connected to the root",
            inst.id(edge.u),
            inst.id(edge.v)
        )));
    }
    if let Some(v) = (0..n).find(|&v| demands[v] > 0 && !seen[v]) {
        return Err(Error::NotATree(format!(
            "demand node {} is not connected to the root",
            inst.id(v)
        )));
    }

    let mut subtree = demands.to_vec();
    let mut edge_flow = BTreeMap::new();
    for &v in order.iter().rev() {
        if let Some((p, e)) = parent[v] {
            subtree[p] += subtree[v];
            edge_flow.insert(e, subtree[v]);
        }
    }
    let (edges, flows) = edge_flow.into_iter().unzip();
    Ok(RoutedTree { edges, flows, parent })
}

fn check_level(inst: &Instance, i: u32) -> Result<()> {
    let max = inst.demand_profile().log_d();
    if i > max {
        return Err(Error::LevelOutOfRange { level: i, max });
    }
    Ok(())
}

/// `A_i(T) = Σ_e l_e · min(x_e, 2^i)`.
pub fn atomic_cost(tree: &RoutedTree, inst: &Instance, i: u32) -> Result<f64> {
    check_level(inst, i)?;
    let cap = 1u64 << i;
    Ok(tree
        .edge_pairs()
        .map(|(e, x)| inst.edge(e).length * x.min(cap) as f64)
        .sum())
}

/// `A_i(T)` for every level `0..=log D`.
pub fn level_costs(tree: &RoutedTree, inst: &Instance) -> Vec<f64> {
    (0..inst.demand_profile().levels as u32)
        .map(|i| atomic_cost(tree, inst, i).expect("level in range"))
        .collect()
}

/// `A_i(T)` in exact arithmetic, with lengths read as their decimal values.
pub fn atomic_cost_exact(tree: &RoutedTree, inst: &Instance, i: u32) -> Result<Rational> {
    check_level(inst, i)?;
    let cap = 1u64 << i;
    let mut total = Rational::zero();
    for (e, x) in tree.edge_pairs() {
        total += rational::from_f64(inst.edge(e).length)? * rational::int(x.min(cap) as i64);
    }
    Ok(total)
}

/// A concave aggregation function in either representation.
#[derive(Debug, Clone, Copy)]
pub enum CostFunction<'a> {
    Alpha(&'a AlphaVector),
    Pipes(&'a PipeSchedule),
}

impl<'a> From<&'a AlphaVector> for CostFunction<'a> {
    fn from(a: &'a AlphaVector) -> Self {
        CostFunction::Alpha(a)
    }
}

impl<'a> From<&'a PipeSchedule> for CostFunction<'a> {
    fn from(p: &'a PipeSchedule) -> Self {
        CostFunction::Pipes(p)
    }
}

/// `Σ_e l_e f(x_e)`.
pub fn function_cost<'a>(tree: &RoutedTree, inst: &Instance, f: impl Into<CostFunction<'a>>) -> f64 {
    match f.into() {
        CostFunction::Alpha(alpha) => alpha
            .entries()
            .filter(|(i, _)| *i <= inst.demand_profile().log_d())
            .map(|(i, a)| rational::to_f64(a) * atomic_cost(tree, inst, i).expect("level in range"))
            .sum(),
        CostFunction::Pipes(pipes) => tree
            .edge_pairs()
            .map(|(e, x)| inst.edge(e).length * pipes.eval_f64(x))
            .sum(),
    }
}

/// A probability distribution over routed trees.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeDistribution {
    support: Vec<(RoutedTree, f64)>,
    theta: f64,
}

impl TreeDistribution {
    /// Validates weights and renormalizes them to sum to exactly one.
    ///
    /// Any surplus or deficit is absorbed by the largest weight.
    pub fn new(inst: &Instance, support: Vec<(RoutedTree, f64)>, theta: f64) -> Result<TreeDistribution> {
        if support.is_empty() {
            return Err(Error::Validation("distribution support must be nonempty".into()));
        }
        let max_support = inst.demand_profile().levels;
        if support.len() > max_support {
            return Err(Error::Validation(format!(
                "distribution support {} exceeds 1 + log D = {max_support}",
                support.len()
            )));
        }
        if let Some((_, w)) = support.iter().find(|(_, w)| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Validation(format!("weight {w} is not positive")));
        }
        let sum: f64 = support.iter().map(|(_, w)| w).sum();
        if sum < 1.0 - 1e-6 {
            return Err(Error::Validation(format!("weights sum to {sum} < 1")));
        }
        let mut support = support;
        let mut surplus = sum - 1.0;
        let mut order: Vec<usize> = (0..support.len()).collect();
        order.sort_by(|&a, &b| support[b].1.total_cmp(&support[a].1).then(a.cmp(&b)));
        for &j in &order {
            if surplus.abs() == 0.0 {
                break;
            }
            let take = surplus.min(support[j].1);
            support[j].1 -= take;
            surplus -= take;
        }
        support.retain(|(_, w)| *w > 0.0);
        Ok(TreeDistribution { support, theta })
    }

    pub fn support(&self) -> &[(RoutedTree, f64)] {
        &self.support
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

/// `Σ_T x_T · A_i(T)`.
pub fn distribution_cost(dist: &TreeDistribution, inst: &Instance, i: u32) -> Result<f64> {
    let mut total = 0.0;
    for (tree, w) in dist.support() {
        total += w * atomic_cost(tree, inst, i)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedTreeJson {
    pub weight: f64,
    pub edges: Vec<[String; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelDiagnostic {
    pub i: u32,
    pub expected_cost: f64,
    pub lower_bound: f64,
    pub ratio: f64,
}

/// On-disk form of a distribution with per-level diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionJson {
    pub schema_version: u32,
    pub theta: f64,
    pub support: Vec<WeightedTreeJson>,
    #[serde(default)]
    pub levels: Vec<LevelDiagnostic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

pub const DISTRIBUTION_SCHEMA_VERSION: u32 = 1;

/// Per-level diagnostics of `dist` against the given lower bounds.
pub fn level_diagnostics(dist: &TreeDistribution, inst: &Instance, lower_bounds: &[f64]) -> Vec<LevelDiagnostic> {
    lower_bounds
        .iter()
        .enumerate()
        .map(|(i, &lb)| {
            let expected = distribution_cost(dist, inst, i as u32).expect("level in range");
            LevelDiagnostic {
                i: i as u32,
                expected_cost: expected,
                lower_bound: lb,
                ratio: safe_ratio(expected, lb),
            }
        })
        .collect()
}

/// `a / b` with `0 / 0 = 1`.
pub fn safe_ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        a / b
    }
}

impl DistributionJson {
    pub fn from_distribution(dist: &TreeDistribution, inst: &Instance, levels: Vec<LevelDiagnostic>) -> Self {
        DistributionJson {
            schema_version: DISTRIBUTION_SCHEMA_VERSION,
            theta: dist.theta(),
            support: dist
                .support()
                .iter()
                .map(|(t, w)| WeightedTreeJson {
                    weight: *w,
                    edges: t.edge_ids(inst),
                })
                .collect(),
            levels,
            seed: None,
            config_hash: None,
        }
    }

    /// Resolves edge ids against `inst` and rebuilds the distribution.
    pub fn to_distribution(&self, inst: &Instance) -> Result<TreeDistribution> {
        let mut support = Vec::new();
        for tree in &self.support {
            let mut edges = Vec::new();
            for [u, v] in &tree.edges {
                let (a, b) = match (inst.node_index(u), inst.node_index(v)) {
                    (Some(a), Some(b)) => (a, b),
                    _ => return Err(Error::Validation(format!("unknown node in edge [{u:?}, {v:?}]"))),
                };
                let e = inst
                    .edge_between(a, b)
                    .ok_or_else(|| Error::Validation(format!("no edge [{u:?}, {v:?}] in the instance")))?;
                edges.push(e);
            }
            support.push((route_demands(inst, &edges)?, tree.weight));
        }
        TreeDistribution::new(inst, support, self.theta)
    }
}
