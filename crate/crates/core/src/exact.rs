//! Brute-force oracles over all candidate trees of small instances.

use std::collections::BTreeSet;

use num_traits::Zero;
use serde::Serialize;

use crate::aggregation::{
    atomic_cost_exact, distribution_cost, level_costs, route_demands, safe_ratio, RoutedTree, TreeDistribution,
};
use crate::error::{Error, Result};
use crate::instance::{EdgeIx, Instance, NodeIx};
use crate::pipes::AlphaVector;
use crate::rational::{self, Rational};
use crate::simplex::{minimize, Constraint, Relation};

pub const DEFAULT_NODE_CAP: usize = 8;

fn check_cap(inst: &Instance, node_cap: usize) -> Result<()> {
    if inst.node_count() > node_cap {
        return Err(Error::CapExceeded { nodes: inst.node_count(), cap: node_cap });
    }
    Ok(())
}

/// Appends every spanning tree of the graph `(nodes, edges)` to `out`.
fn spanning_trees(node_count: usize, edges: &[(usize, usize, EdgeIx)], out: &mut Vec<Vec<EdgeIx>>) {
    fn rec(
        idx: usize,
        needed: usize,
        edges: &[(usize, usize, EdgeIx)],
        label: &mut Vec<usize>,
        chosen: &mut Vec<EdgeIx>,
        out: &mut Vec<Vec<EdgeIx>>,
    ) {
        if chosen.len() == needed {
            out.push(chosen.clone());
            return;
        }
        if chosen.len() + (edges.len() - idx) < needed {
            return;
        }
        let (a, b, e) = edges[idx];
        let (la, lb) = (label[a], label[b]);
        if la != lb {
            let saved = label.clone();
            for l in label.iter_mut() {
                if *l == lb {
                    *l = la;
                }
            }
            chosen.push(e);
            rec(idx + 1, needed, edges, label, chosen, out);
            chosen.pop();
            *label = saved;
        }
        rec(idx + 1, needed, edges, label, chosen, out);
    }
    let mut label: Vec<usize> = (0..node_count).collect();
    rec(0, node_count.saturating_sub(1), edges, &mut label, &mut Vec::new(), out);
}

/// Every spanning tree of every node subset containing the demand nodes and
/// the root, deduplicated by edge set and sorted by edge list.
pub fn enumerate_candidate_trees(inst: &Instance, node_cap: usize) -> Result<Vec<RoutedTree>> {
    check_cap(inst, node_cap)?;
    let n = inst.node_count();
    let required: Vec<bool> = (0..n).map(|v| v == inst.root() || inst.demand(v) > 0).collect();
    let optional: Vec<NodeIx> = (0..n).filter(|&v| !required[v]).collect();
    let mut edge_sets = BTreeSet::new();
    for mask in 0u32..(1u32 << optional.len()) {
        let mut member = required.clone();
        for (j, &v) in optional.iter().enumerate() {
            if mask & (1 << j) != 0 {
                member[v] = true;
            }
        }
        let nodes: Vec<NodeIx> = (0..n).filter(|&v| member[v]).collect();
        let mut local = vec![usize::MAX; n];
        for (j, &v) in nodes.iter().enumerate() {
            local[v] = j;
        }
        let induced: Vec<(usize, usize, EdgeIx)> = inst
            .edges()
            .iter()
            .enumerate()
            .filter(|(_, e)| member[e.u] && member[e.v])
            .map(|(ix, e)| (local[e.u], local[e.v], ix))
            .collect();
        let mut trees = Vec::new();
        spanning_trees(nodes.len(), &induced, &mut trees);
        edge_sets.extend(trees.into_iter().map(|mut t| {
            t.sort_unstable();
            t
        }));
    }
    edge_sets.into_iter().map(|edges| route_demands(inst, &edges)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelOptimum {
    pub i: u32,
    #[serde(skip)]
    pub tree: RoutedTree,
    pub value: f64,
    #[serde(serialize_with = "serialize_rational")]
    pub exact: Rational,
}

fn serialize_rational<S: serde::Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&rational::display(r))
}

/// Optimal trees `T_i*` for every level.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactOptima {
    pub levels: Vec<LevelOptimum>,
    trees: Vec<RoutedTree>,
    costs: Vec<Vec<f64>>,
}

impl ExactOptima {
    pub fn compute(inst: &Instance, node_cap: usize) -> Result<ExactOptima> {
        let trees = enumerate_candidate_trees(inst, node_cap)?;
        let costs: Vec<Vec<f64>> = trees.iter().map(|t| level_costs(t, inst)).collect();
        let level_count = inst.demand_profile().levels;
        let mut levels = Vec::with_capacity(level_count);
        for i in 0..level_count {
            let min = costs.iter().map(|c| c[i]).fold(f64::INFINITY, f64::min);
            let slack = 1e-9 * min.abs().max(1.0);
            let mut best: Option<(Rational, usize)> = None;
            // Trees are sorted by edge list, so the first exact minimum wins ties.
            for (j, c) in costs.iter().enumerate() {
                if c[i] <= min + slack {
                    let exact = atomic_cost_exact(&trees[j], inst, i as u32)?;
                    if best.as_ref().is_none_or(|(b, _)| exact < *b) {
                        best = Some((exact, j));
                    }
                }
            }
            let (exact, j) = best.ok_or_else(|| Error::Internal("no candidate tree".into()))?;
            levels.push(LevelOptimum { i: i as u32, tree: trees[j].clone(), value: costs[j][i], exact });
        }
        Ok(ExactOptima { levels, trees, costs })
    }

    pub fn candidate_trees(&self) -> &[RoutedTree] {
        &self.trees
    }

    /// Level-cost vectors of the candidate trees, in the same order.
    pub fn candidate_costs(&self) -> &[Vec<f64>] {
        &self.costs
    }

    pub fn values(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.value).collect()
    }

    /// Multi-level cost `L = Σ_i α_i A_i(T_i*)` in exact arithmetic.
    pub fn multi_level_cost(&self, alpha: &AlphaVector) -> Rational {
        alpha
            .entries()
            .filter_map(|(i, a)| self.levels.get(i as usize).map(|l| a * &l.exact))
            .fold(Rational::zero(), |acc, x| acc + x)
    }

    /// Checks `A_i* ≤ A_{i+k}* ≤ 2^k A_i*` exactly for all pairs; returns the first failing pair.
    pub fn chain_violation(&self) -> Option<(u32, u32)> {
        for a in &self.levels {
            for b in self.levels.iter().filter(|b| b.i > a.i) {
                let k = b.i - a.i;
                if !(a.exact <= b.exact && b.exact <= rational::pow2(k) * &a.exact) {
                    return Some((a.i, b.i));
                }
            }
        }
        None
    }
}

/// `(T_i*, A_i(T_i*))` with ties broken by the lexicographically smallest edge list.
pub fn exact_optimum(inst: &Instance, i: u32, node_cap: usize) -> Result<(RoutedTree, f64)> {
    let max = inst.demand_profile().log_d();
    if i > max {
        return Err(Error::LevelOutOfRange { level: i, max });
    }
    let optima = ExactOptima::compute(inst, node_cap)?;
    let l = &optima.levels[i as usize];
    Ok((l.tree.clone(), l.value))
}

/// `max_i E[A_i(T)] / A_i(T_i*)` and the level attaining it.
pub fn oblivious_ratio_against(dist: &TreeDistribution, inst: &Instance, optima: &ExactOptima) -> Result<(f64, u32)> {
    let mut worst = (f64::NEG_INFINITY, 0);
    for l in &optima.levels {
        let r = safe_ratio(distribution_cost(dist, inst, l.i)?, l.value);
        if r > worst.0 {
            worst = (r, l.i);
        }
    }
    Ok(worst)
}

pub fn exact_oblivious_ratio(inst: &Instance, dist: &TreeDistribution, node_cap: usize) -> Result<(f64, u32)> {
    let optima = ExactOptima::compute(inst, node_cap)?;
    oblivious_ratio_against(dist, inst, &optima)
}

/// Indices of the columns not dominated componentwise by an earlier-kept or smaller column.
fn pareto_front(columns: &[Vec<f64>]) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for (j, c) in columns.iter().enumerate() {
        if kept.iter().any(|&k| columns[k].iter().zip(c).all(|(a, b)| a <= b)) {
            continue;
        }
        kept.retain(|&k| !c.iter().zip(&columns[k]).all(|(a, b)| a <= b));
        kept.push(j);
    }
    kept.sort_unstable();
    kept
}

/// The true optimal oblivious ratio `θ_opt` over all candidate trees, with an optimal distribution.
pub fn exact_lp_optimum(inst: &Instance, node_cap: usize) -> Result<(f64, TreeDistribution)> {
    let optima = ExactOptima::compute(inst, node_cap)?;
    lp_optimum_from(inst, &optima)
}

pub fn lp_optimum_from(inst: &Instance, optima: &ExactOptima) -> Result<(f64, TreeDistribution)> {
    let denominators = optima.values();
    if denominators.iter().any(|&v| v == 0.0) {
        // A_0* = 0 forces every A_i* = 0, and T_0* has zero cost at all levels.
        let tree = optima.levels[0].tree.clone();
        let dist = TreeDistribution::new(inst, vec![(tree, 1.0)], 1.0)?;
        return Ok((1.0, dist));
    }
    let ratios: Vec<Vec<f64>> = optima
        .candidate_costs()
        .iter()
        .map(|c| c.iter().zip(&denominators).map(|(a, b)| a / b).collect())
        .collect();
    let front = pareto_front(&ratios);
    let m = front.len();
    // Variables: x_T for the front, then θ.
    let mut objective = vec![0.0; m + 1];
    objective[m] = 1.0;
    let mut rows = vec![Constraint::new(
        (0..=m).map(|j| if j < m { 1.0 } else { 0.0 }).collect(),
        Relation::Ge,
        1.0,
    )];
    for i in 0..denominators.len() {
        let mut coeffs: Vec<f64> = front.iter().map(|&j| -ratios[j][i]).collect();
        coeffs.push(1.0);
        rows.push(Constraint::new(coeffs, Relation::Ge, 0.0));
    }
    let sol = minimize(&objective, &rows)?;
    let support: Vec<(RoutedTree, f64)> = front
        .iter()
        .zip(&sol.x)
        .filter(|(_, &x)| x > 1e-12)
        .map(|(&j, &x)| (optima.candidate_trees()[j].clone(), x))
        .collect();
    let theta = sol.x[m];
    let dist = TreeDistribution::new(inst, support, theta)?;
    Ok((theta, dist))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::shortest_paths_from;

    fn triangle() -> Instance {
        Instance::new(
            &["a", "b", "r"],
            &[("r", "a", 1.0), ("a", "b", 1.0), ("r", "b", 1.0)],
            &[("a", 1)],
            "r",
        )
        .unwrap()
    }

    fn wheel() -> Instance {
        Instance::new(
            &["h", "p", "q", "r", "s"],
            &[
                ("h", "p", 1.0),
                ("h", "q", 1.0),
                ("h", "r", 1.0),
                ("h", "s", 1.0),
                ("p", "q", 1.8),
                ("q", "r", 1.8),
                ("r", "s", 1.8),
                ("s", "p", 1.8),
            ],
            &[("p", 3), ("q", 1), ("s", 2)],
            "r",
        )
        .unwrap()
    }

    #[test]
    fn enumeration_hand_counts() {
        let path = Instance::new(&["r", "a", "b"], &[("r", "a", 1.0), ("a", "b", 1.0)], &[("a", 1), ("b", 1)], "r").unwrap();
        assert_eq!(enumerate_candidate_trees(&path, 8).unwrap().len(), 1);
        assert_eq!(enumerate_candidate_trees(&triangle(), 8).unwrap().len(), 4);
        // K4 with all nodes required has 4^2 = 16 spanning trees.
        let k4 = Instance::new(
            &["a", "b", "c", "r"],
            &[("a", "b", 1.0), ("a", "c", 1.0), ("a", "r", 1.0), ("b", "c", 1.0), ("b", "r", 1.0), ("c", "r", 1.0)],
            &[("a", 1), ("b", 1), ("c", 1)],
            "r",
        )
        .unwrap();
        assert_eq!(enumerate_candidate_trees(&k4, 8).unwrap().len(), 16);
    }

    #[test]
    fn cap_is_refused() {
        assert!(matches!(
            enumerate_candidate_trees(&wheel(), 4),
            Err(Error::CapExceeded { nodes: 5, cap: 4 })
        ));
    }

    #[test]
    fn top_level_is_shortest_path_cost() {
        let inst = wheel();
        let top = inst.demand_profile().log_d();
        let (_, value) = exact_optimum(&inst, top, 8).unwrap();
        let sp = shortest_paths_from(&inst, inst.root());
        let direct: f64 = inst.demand_nodes().map(|v| inst.demand(v) as f64 * sp.dist[v]).sum();
        assert!((value - direct).abs() < 1e-9);
    }

    #[test]
    fn wheel_levels_lie_between_extremes_and_chain_holds() {
        let inst = wheel();
        let optima = ExactOptima::compute(&inst, 8).unwrap();
        assert_eq!(optima.chain_violation(), None);
        // Level 0 is the minimum Steiner tree on {p, q, s, r}: hub plus four spokes.
        assert!((optima.levels[0].value - 4.0).abs() < 1e-9);
        let top = optima.levels.last().unwrap().value;
        for l in &optima.levels {
            assert!(l.value >= optima.levels[0].value - 1e-9 && l.value <= top + 1e-9);
        }
    }

    #[test]
    fn unique_tree_has_ratio_one() {
        let path = Instance::new(&["r", "a", "b"], &[("r", "a", 1.0), ("a", "b", 1.0)], &[("a", 1), ("b", 1)], "r").unwrap();
        let (theta, dist) = exact_lp_optimum(&path, 8).unwrap();
        assert!((theta - 1.0).abs() < 1e-9);
        let (ratio, _) = exact_oblivious_ratio(&path, &dist, 8).unwrap();
        assert!((ratio - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lp_optimum_is_at_most_every_single_tree() {
        let inst = wheel();
        let optima = ExactOptima::compute(&inst, 8).unwrap();
        let (theta, dist) = lp_optimum_from(&inst, &optima).unwrap();
        assert!(theta >= 1.0 - 1e-9);
        for tree in optima.candidate_trees() {
            let single = TreeDistribution::new(&inst, vec![(tree.clone(), 1.0)], 0.0).unwrap();
            let (r, _) = oblivious_ratio_against(&single, &inst, &optima).unwrap();
            assert!(theta <= r + 1e-9);
        }
        let (r, _) = oblivious_ratio_against(&dist, &inst, &optima).unwrap();
        assert!((r - theta).abs() < 1e-7);
    }

    #[test]
    fn level_zero_tree_distribution_ratio() {
        let inst = wheel();
        let optima = ExactOptima::compute(&inst, 8).unwrap();
        let t0 = optima.levels[0].tree.clone();
        let dist = TreeDistribution::new(&inst, vec![(t0.clone(), 1.0)], 0.0).unwrap();
        let (r, _) = oblivious_ratio_against(&dist, &inst, &optima).unwrap();
        let direct = level_costs(&t0, &inst)
            .iter()
            .zip(optima.values())
            .map(|(a, b)| a / b)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r, direct);
        assert!(r >= 1.0);
    }
}
