//! Tree distributions with bounded oblivious ratio via the ellipsoid method.
//!
//! Dual points are kept in normalized coordinates `a_i = α_i Ã_i`, where
//! `Ã_i` is the rent-or-buy estimate of the level-`i` optimum. In these
//! coordinates the rent-or-buy constraint reads `Σ a_i ≤ 1`, a tree `T`
//! contributes the constraint `Σ a_i ρ_i(T) ≥ β` with `ρ_i(T) = A_i(T) / Ã_i`,
//! and the search box is `[0, 1]^n`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::aggregation::{level_costs, level_diagnostics, LevelDiagnostic, RoutedTree, TreeDistribution};
use crate::error::{Error, Result};
use crate::exact::{lp_optimum_from, oblivious_ratio_against, ExactOptima, DEFAULT_NODE_CAP};
use crate::gmm::oracle_subroutine_a;
use crate::instance::{EdgeIx, Instance};
use crate::pipes::{gamma_from_f64, AlphaVector};
use crate::rational::Rational;
use crate::simplex::{minimize, Constraint, Relation};
use crate::subroutines::{rob_lower_bounds_with_trees, RobBound};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Widenings of `c` allowed after the oracle exhausts its invocation cap.
const MAX_C_WIDENINGS: u32 = 6;
const MAX_BETA_DOUBLINGS: u32 = 60;
const POLISH_ROUNDS: u32 = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameworkConfig {
    pub gamma: f64,
    pub seed: u64,
    pub beta_init: f64,
    pub beta_steps: u32,
    pub bit_budget: u32,
    pub c_target: f64,
    pub rob_trials: u32,
    /// Exact optima are added to the report for instances with at most this many nodes.
    pub exact_node_cap: Option<usize>,
}

impl Default for FrameworkConfig {
    fn default() -> Self {
        FrameworkConfig {
            gamma: 0.25,
            seed: 0,
            beta_init: 2.0,
            beta_steps: 6,
            bit_budget: 64,
            c_target: 4.0,
            rob_trials: 4,
            exact_node_cap: Some(DEFAULT_NODE_CAP),
        }
    }
}

impl FrameworkConfig {
    pub fn validate(&self) -> Result<()> {
        gamma_from_f64(self.gamma)?;
        if !(self.beta_init > 0.0 && self.beta_init.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta-init = {} must be positive", self.beta_init)));
        }
        if self.bit_budget == 0 {
            return Err(Error::InvalidArgument("bit-budget must be positive".into()));
        }
        if !(self.c_target >= 1.0 && self.c_target.is_finite()) {
            return Err(Error::InvalidArgument(format!("c-target = {} must be at least 1", self.c_target)));
        }
        if self.rob_trials == 0 {
            return Err(Error::InvalidArgument("rob-trials must be positive".into()));
        }
        Ok(())
    }
}

/// `R_max = 16 ⌈log2(n + 2)⌉`.
pub fn r_max(node_count: usize) -> usize {
    16 * ((node_count + 2) as f64).log2().ceil() as usize
}

/// A dual point in original coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualPoint {
    pub alpha: Vec<f64>,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeConstraint {
    pub tree: RoutedTree,
    /// `A_i(T)` for every level.
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    /// `Ã_i`.
    pub rob: Vec<f64>,
    pub trees: Vec<TreeConstraint>,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleOutcome {
    /// `Σ α_i Ã_i > 1`.
    ViolatedRob,
    ViolatedTree(TreeConstraint),
    Feasible(TreeConstraint),
    FeasibleAtZero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationResult {
    pub outcome: OracleOutcome,
    /// Invocations of the tree oracle made by this call.
    pub invocations: usize,
}

fn derive_seed(master: u64, stream: u64, counter: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.set_word_pos(counter as u128 * 16);
    rng.gen()
}

fn normalize(alpha: &[f64], tilde: &[f64]) -> Vec<f64> {
    alpha.iter().zip(tilde).map(|(a, t)| a * t).collect()
}

fn ratios(costs: &[f64], tilde: &[f64]) -> Vec<f64> {
    costs.iter().zip(tilde).map(|(a, t)| a / t).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Converts a normalized point to an α-vector; `None` when every coordinate is zero.
fn alpha_vector(inst: &Instance, point: &[f64], tilde: &[f64]) -> Result<Option<AlphaVector>> {
    let d = inst.demand_profile().d;
    let entries: Vec<(u32, f64)> = point
        .iter()
        .zip(tilde)
        .enumerate()
        .filter(|(_, (a, _))| **a > 0.0)
        .map(|(i, (a, t))| (i as u32, a / t))
        .collect();
    if entries.is_empty() {
        return Ok(None);
    }
    AlphaVector::from_f64(d, &entries).map(Some)
}

/// Separation at a normalized point `a` with retries seeded by `seed_of(attempt)`.
fn separate_normalized(
    inst: &Instance,
    a: &[f64],
    beta: f64,
    tilde: &[f64],
    c_target: f64,
    gamma: &Rational,
    cap: usize,
    seed_of: &mut dyn FnMut(usize) -> u64,
) -> Result<SeparationResult> {
    let mass: f64 = a.iter().sum();
    if mass > 1.0 {
        return Ok(SeparationResult { outcome: OracleOutcome::ViolatedRob, invocations: 0 });
    }
    let Some(alpha) = alpha_vector(inst, a, tilde)? else {
        return Ok(SeparationResult { outcome: OracleOutcome::FeasibleAtZero, invocations: 0 });
    };
    for attempt in 0..cap {
        let tree = oracle_subroutine_a(inst, &alpha, gamma, seed_of(attempt))?;
        let costs = level_costs(&tree, inst);
        let value = dot(a, &ratios(&costs, tilde));
        if value < 2.0 * c_target * mass {
            let tc = TreeConstraint { tree, costs };
            let outcome = if value < beta { OracleOutcome::ViolatedTree(tc) } else { OracleOutcome::Feasible(tc) };
            return Ok(SeparationResult { outcome, invocations: attempt + 1 });
        }
    }
    Err(Error::OracleCapExceeded { invocations: cap })
}

/// Approximate separation for the dual polytope `𝒫_β` at `point`.
pub fn separation_oracle(
    point: &DualPoint,
    tilde: &[f64],
    c_target: f64,
    inst: &Instance,
    gamma: &Rational,
    seed: u64,
) -> Result<SeparationResult> {
    check_tilde(inst, tilde)?;
    if point.alpha.len() != tilde.len() || point.alpha.iter().any(|a| !(*a >= 0.0)) {
        return Err(Error::InvalidArgument("dual point must be nonnegative with one entry per level".into()));
    }
    let a = normalize(&point.alpha, tilde);
    let mut seed_of = |t: usize| derive_seed(seed, 0, t as u64);
    separate_normalized(inst, &a, point.beta, tilde, c_target, gamma, r_max(inst.node_count()), &mut seed_of)
}

fn check_tilde(inst: &Instance, tilde: &[f64]) -> Result<()> {
    if tilde.len() != inst.demand_profile().levels {
        return Err(Error::InvalidArgument(format!(
            "expected {} rent-or-buy bounds, got {}",
            inst.demand_profile().levels,
            tilde.len()
        )));
    }
    if tilde.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidArgument("rent-or-buy bounds must be positive".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallPrimal {
    pub theta: f64,
    pub distribution: TreeDistribution,
}

/// Columns not dominated by another column, as indices in increasing order.
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

/// Optimal `(θ, x)` of `min θ` s.t. `Σ x_T ≥ 1`, `θ ≥ Σ_T x_T ρ_i(T)` as a vertex solution.
fn primal_weights(columns: &[Vec<f64>]) -> Result<(f64, Vec<(usize, f64)>)> {
    let front = pareto_front(columns);
    let m = front.len();
    let levels = columns[0].len();
    let mut objective = vec![0.0; m + 1];
    objective[m] = 1.0;
    let mut rows = vec![Constraint::new(
        (0..=m).map(|j| if j < m { 1.0 } else { 0.0 }).collect(),
        Relation::Ge,
        1.0,
    )];
    for i in 0..levels {
        let mut coeffs: Vec<f64> = front.iter().map(|&j| -columns[j][i]).collect();
        coeffs.push(1.0);
        rows.push(Constraint::new(coeffs, Relation::Ge, 0.0));
    }
    let sol = minimize(&objective, &rows)?;
    let weights = front
        .iter()
        .zip(&sol.x)
        .filter(|(_, &x)| x > 1e-12)
        .map(|(&j, &x)| (j, x))
        .collect();
    Ok((sol.x[m], weights))
}

/// Worst normalized dual point `argmax_{a ≥ 0, Σ a = 1} min_T ρ(T) · a`.
fn dual_point(columns: &[Vec<f64>]) -> Result<Vec<f64>> {
    let front = pareto_front(columns);
    let n = columns[0].len();
    let mut objective = vec![0.0; n + 1];
    objective[n] = -1.0;
    let mut rows = vec![Constraint::new(
        (0..=n).map(|i| if i < n { 1.0 } else { 0.0 }).collect(),
        Relation::Eq,
        1.0,
    )];
    for &j in &front {
        let mut coeffs = columns[j].clone();
        coeffs.push(-1.0);
        rows.push(Constraint::new(coeffs, Relation::Ge, 0.0));
    }
    Ok(minimize(&objective, &rows)?.x[..n].to_vec())
}

/// Solves the small primal over the harvested trees and returns its vertex optimum.
pub fn solve_small_primal(inst: &Instance, cs: &ConstraintSet) -> Result<SmallPrimal> {
    if cs.trees.is_empty() {
        return Err(Error::Lp("no harvested trees".into()));
    }
    check_tilde(inst, &cs.rob)?;
    let columns: Vec<Vec<f64>> = cs.trees.iter().map(|t| ratios(&t.costs, &cs.rob)).collect();
    let (theta, weights) = primal_weights(&columns)?;
    let support = weights.into_iter().map(|(j, x)| (cs.trees[j].tree.clone(), x)).collect();
    Ok(SmallPrimal { theta, distribution: TreeDistribution::new(inst, support, theta)? })
}

#[derive(Debug, Clone, PartialEq)]
pub enum EllipsoidOutcome {
    Infeasible(ConstraintSet),
    Feasible(DualPoint),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaStep {
    pub beta: f64,
    pub c: f64,
    pub feasible: bool,
    /// The harvested trees alone prove infeasibility.
    pub certified: bool,
    pub iterations: usize,
    pub oracle_calls: usize,
    pub pool_size: usize,
    pub theta_pool: Option<f64>,
}

/// Harvested tree constraints shared across ellipsoid runs, deduplicated by edge set.
struct Pool {
    trees: Vec<TreeConstraint>,
    ratios: Vec<Vec<f64>>,
    index: BTreeMap<Vec<EdgeIx>, usize>,
    theta: Option<f64>,
}

impl Pool {
    fn new() -> Pool {
        Pool { trees: Vec::new(), ratios: Vec::new(), index: BTreeMap::new(), theta: None }
    }

    /// Adds a tree; true when it was new.
    fn add(&mut self, tc: TreeConstraint, tilde: &[f64]) -> bool {
        if self.index.contains_key(tc.tree.edges()) {
            return false;
        }
        self.index.insert(tc.tree.edges().to_vec(), self.trees.len());
        self.ratios.push(ratios(&tc.costs, tilde));
        self.trees.push(tc);
        self.theta = None;
        true
    }

    fn theta(&mut self) -> Result<Option<f64>> {
        if self.trees.is_empty() {
            return Ok(None);
        }
        if self.theta.is_none() {
            self.theta = Some(primal_weights(&self.ratios)?.0);
        }
        Ok(self.theta)
    }

    /// Most violated stored constraint at `a`, if any.
    fn violated(&self, a: &[f64], beta: f64) -> Option<usize> {
        self.ratios
            .iter()
            .enumerate()
            .map(|(j, r)| (j, dot(a, r)))
            .filter(|&(_, v)| v < beta)
            .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)))
            .map(|(j, _)| j)
    }

    fn constraint_set(&self, tilde: &[f64], beta: f64) -> ConstraintSet {
        ConstraintSet { rob: tilde.to_vec(), trees: self.trees.clone(), beta }
    }
}

struct Context<'a> {
    inst: &'a Instance,
    tilde: Vec<f64>,
    gamma: Rational,
    seed: u64,
    bit_budget: u32,
    r_max: usize,
    pool: Pool,
    runs: u64,
    events: Vec<String>,
}

struct RunStats {
    outcome: EllipsoidOutcome,
    step: BetaStep,
}

impl Context<'_> {
    fn ellipsoid(&mut self, beta: f64, c: f64) -> Result<RunStats> {
        let n = self.tilde.len();
        let run = self.runs;
        self.runs += 1;
        let mut step = BetaStep {
            beta,
            c,
            feasible: false,
            certified: false,
            iterations: 0,
            oracle_calls: 0,
            pool_size: self.pool.trees.len(),
            theta_pool: None,
        };
        if beta <= 0.0 {
            step.feasible = true;
            let point = DualPoint { alpha: vec![0.0; n], beta };
            return Ok(RunStats { outcome: EllipsoidOutcome::Feasible(point), step });
        }
        let finish_infeasible = |ctx: &mut Self, mut step: BetaStep| -> Result<RunStats> {
            step.theta_pool = ctx.pool.theta()?;
            step.certified = step.theta_pool.is_some_and(|t| t < beta);
            step.pool_size = ctx.pool.trees.len();
            Ok(RunStats { outcome: EllipsoidOutcome::Infeasible(ctx.pool.constraint_set(&ctx.tilde, beta)), step })
        };
        if self.pool.theta()?.is_some_and(|t| t < beta) {
            return finish_infeasible(self, step);
        }

        let nf = n as f64;
        let mut center: Vec<f64> = vec![0.5; n];
        let mut p = vec![vec![0.0; n]; n];
        for (i, row) in p.iter_mut().enumerate() {
            row[i] = nf / 4.0;
        }
        let threshold = -((n * n) as f64) * self.bit_budget as f64 * std::f64::consts::LN_2;
        let cap = 10 * n * n * self.bit_budget as usize;
        let mut log_volume = 0.0;
        let mut oracle_counter = 0u64;
        for iteration in 0..cap {
            step.iterations = iteration;
            if log_volume < threshold {
                return finish_infeasible(self, step);
            }
            let mut g = vec![0.0; n];
            if let Some(i) = (0..n).filter(|&i| center[i] < 0.0).min_by(|&x, &y| center[x].total_cmp(&center[y])) {
                g[i] = -1.0;
            } else if center.iter().sum::<f64>() > 1.0 {
                g.iter_mut().for_each(|v| *v = 1.0);
            } else if let Some(j) = self.pool.violated(&center, beta) {
                g = self.pool.ratios[j].iter().map(|r| -r).collect();
            } else {
                let seed = self.seed;
                let mut seed_of = |t: usize| derive_seed(seed, run + 1, (oracle_counter << 16) | t as u64);
                let result =
                    separate_normalized(self.inst, &center, beta, &self.tilde, c, &self.gamma, self.r_max, &mut seed_of)?;
                oracle_counter += 1;
                step.oracle_calls += result.invocations;
                match result.outcome {
                    OracleOutcome::ViolatedRob => g.iter_mut().for_each(|v| *v = 1.0),
                    OracleOutcome::ViolatedTree(tc) => {
                        g = ratios(&tc.costs, &self.tilde).iter().map(|r| -r).collect();
                        if self.pool.add(tc, &self.tilde) && self.pool.theta()?.is_some_and(|t| t < beta) {
                            step.iterations = iteration + 1;
                            return finish_infeasible(self, step);
                        }
                    }
                    OracleOutcome::Feasible(tc) => {
                        self.pool.add(tc, &self.tilde);
                        step.feasible = true;
                        step.iterations = iteration + 1;
                        step.pool_size = self.pool.trees.len();
                        let alpha = center.iter().zip(&self.tilde).map(|(a, t)| a / t).collect();
                        return Ok(RunStats { outcome: EllipsoidOutcome::Feasible(DualPoint { alpha, beta }), step });
                    }
                    OracleOutcome::FeasibleAtZero => {
                        self.events.push(format!("zero cut direction at beta={beta}; cutting along coordinate 0"));
                        g[0] = -1.0;
                    }
                }
            }
            if g.iter().all(|v| *v == 0.0) {
                self.events.push(format!("zero cut direction at beta={beta}; cutting along coordinate 0"));
                g[0] = -1.0;
            }
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            g.iter_mut().for_each(|v| *v /= norm);

            let pg: Vec<f64> = p.iter().map(|row| dot(row, &g)).collect();
            let gpg = dot(&g, &pg);
            if !(gpg > 1e-300 && gpg.is_finite()) {
                self.events.push(format!("ellipsoid degenerated numerically at beta={beta} after {iteration} iterations"));
                step.iterations = iteration;
                return finish_infeasible(self, step);
            }
            let b: Vec<f64> = pg.iter().map(|v| v / gpg.sqrt()).collect();
            if n == 1 {
                center[0] -= b[0] / 2.0;
                p[0][0] /= 4.0;
                log_volume += 0.5f64.ln();
            } else {
                let shift = 1.0 / (nf + 1.0);
                let scale = nf * nf / (nf * nf - 1.0);
                for i in 0..n {
                    center[i] -= shift * b[i];
                }
                for i in 0..n {
                    for j in 0..n {
                        p[i][j] = scale * (p[i][j] - 2.0 * shift * b[i] * b[j]);
                    }
                }
                log_volume += 0.5 * nf * scale.ln() + 0.5 * ((nf - 1.0) / (nf + 1.0)).ln();
            }
        }
        Err(Error::Numeric(format!("ellipsoid iteration cap {cap} exceeded at beta={beta}")))
    }

    /// Runs the ellipsoid at `beta`, widening `c` whenever the oracle hits its invocation cap.
    fn run(&mut self, beta: f64, c: &mut f64, history: &mut Vec<BetaStep>) -> Result<EllipsoidOutcome> {
        for _ in 0..=MAX_C_WIDENINGS {
            match self.ellipsoid(beta, *c) {
                Ok(stats) => {
                    history.push(stats.step);
                    return Ok(stats.outcome);
                }
                Err(Error::OracleCapExceeded { invocations }) => {
                    self.events.push(format!(
                        "oracle cap of {invocations} invocations hit at beta={beta} c={c}; widening c to {}",
                        *c * 2.0
                    ));
                    *c *= 2.0;
                }
                Err(e) => return Err(e),
            }
        }
        Err(Error::OracleCapExceeded { invocations: self.r_max })
    }

    /// Column generation at the dual optimum of the harvested trees.
    fn polish(&mut self, c: f64) -> Result<()> {
        for round in 0..POLISH_ROUNDS {
            let Some(theta) = self.pool.theta()? else { return Ok(()) };
            let a = dual_point(&self.pool.ratios)?;
            let Some(alpha) = alpha_vector(self.inst, &a, &self.tilde)? else { return Ok(()) };
            let mut improved = false;
            for t in 0..self.r_max {
                let seed = derive_seed(self.seed, u64::MAX - round as u64, t as u64);
                let tree = oracle_subroutine_a(self.inst, &alpha, &self.gamma, seed)?;
                let costs = level_costs(&tree, self.inst);
                let value = dot(&a, &ratios(&costs, &self.tilde));
                if value < theta * (1.0 - 1e-9) && self.pool.add(TreeConstraint { tree, costs }, &self.tilde) {
                    improved = true;
                }
            }
            let _ = c;
            if !improved {
                return Ok(());
            }
        }
        Ok(())
    }
}

/// Central-cut ellipsoid feasibility test of `𝒫_β` with a fresh constraint pool.
pub fn ellipsoid_feasibility(
    inst: &Instance,
    beta: f64,
    c: f64,
    gamma: &Rational,
    seed: u64,
    tilde: &[f64],
    bit_budget: u32,
) -> Result<(EllipsoidOutcome, BetaStep)> {
    check_tilde(inst, tilde)?;
    let mut ctx = Context {
        inst,
        tilde: tilde.to_vec(),
        gamma: gamma.clone(),
        seed,
        bit_budget,
        r_max: r_max(inst.node_count()),
        pool: Pool::new(),
        runs: 0,
        events: Vec::new(),
    };
    let stats = ctx.ellipsoid(beta, c)?;
    Ok((stats.outcome, stats.step))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactSummary {
    pub levels: Vec<LevelDiagnostic>,
    pub oblivious_ratio: f64,
    pub worst_level: u32,
    pub theta_opt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub schema_version: u32,
    pub seed: u64,
    pub gamma: f64,
    pub c_initial: f64,
    pub c_final: f64,
    pub r_max: usize,
    pub tilde: Vec<RobBound>,
    pub beta_history: Vec<BetaStep>,
    /// Smallest β found infeasible.
    pub beta_final: f64,
    pub theta_star: f64,
    pub support_size: usize,
    pub pool_size: usize,
    /// Ratios against the rent-or-buy bounds.
    pub levels: Vec<LevelDiagnostic>,
    pub exact: Option<ExactSummary>,
    pub events: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub distribution: TreeDistribution,
    pub report: SolveReport,
}

/// Exact summary of `dist` when the instance is small enough.
pub fn exact_summary(inst: &Instance, dist: &TreeDistribution, node_cap: usize) -> Result<Option<ExactSummary>> {
    if inst.node_count() > node_cap {
        return Ok(None);
    }
    let optima = ExactOptima::compute(inst, node_cap)?;
    let (oblivious_ratio, worst_level) = oblivious_ratio_against(dist, inst, &optima)?;
    let (theta_opt, _) = lp_optimum_from(inst, &optima)?;
    Ok(Some(ExactSummary {
        levels: level_diagnostics(dist, inst, &optima.values()),
        oblivious_ratio,
        worst_level,
        theta_opt,
    }))
}

/// End-to-end solve: rent-or-buy bounds, β search with the ellipsoid, small primal.
pub fn solve_oblivious(inst: &Instance, config: &FrameworkConfig) -> Result<Solution> {
    config.validate()?;
    let gamma = gamma_from_f64(config.gamma)?;
    let bounds = rob_lower_bounds_with_trees(inst, config.seed, config.rob_trials)?;
    let tilde: Vec<f64> = bounds.iter().map(|(b, _)| b.value).collect();
    let rob: Vec<RobBound> = bounds.iter().map(|(b, _)| b.clone()).collect();
    let mut events = Vec::new();

    let finish = |distribution: TreeDistribution, report_base: SolveReport| -> Result<Solution> {
        let mut report = report_base;
        report.support_size = distribution.support().len();
        report.levels = level_diagnostics(&distribution, inst, &tilde);
        if let Some(cap) = config.exact_node_cap {
            report.exact = exact_summary(inst, &distribution, cap)?;
        }
        Ok(Solution { distribution, report })
    };
    let mut report = SolveReport {
        schema_version: REPORT_SCHEMA_VERSION,
        seed: config.seed,
        gamma: config.gamma,
        c_initial: config.c_target,
        c_final: config.c_target,
        r_max: r_max(inst.node_count()),
        tilde: rob.clone(),
        beta_history: Vec::new(),
        beta_final: 0.0,
        theta_star: 1.0,
        support_size: 0,
        pool_size: 0,
        levels: Vec::new(),
        exact: None,
        events: Vec::new(),
    };

    if let Some((_, tree)) = bounds.iter().find(|(b, _)| b.value == 0.0) {
        // A tree with zero cost at one level routes only over zero-length edges, so it costs zero everywhere.
        events.push("zero-cost instance; returning a zero-cost tree".to_string());
        report.events = events;
        let dist = TreeDistribution::new(inst, vec![(tree.clone(), 1.0)], 1.0)?;
        return finish(dist, report);
    }

    let mut ctx = Context {
        inst,
        tilde: tilde.clone(),
        gamma,
        seed: config.seed,
        bit_budget: config.bit_budget,
        r_max: r_max(inst.node_count()),
        pool: Pool::new(),
        runs: 0,
        events: Vec::new(),
    };
    for (_, tree) in &bounds {
        let costs = level_costs(tree, inst);
        ctx.pool.add(TreeConstraint { tree: tree.clone(), costs }, &tilde);
    }

    let mut c = config.c_target;
    let mut history = Vec::new();
    let mut beta = config.beta_init;
    let mut lo = 0.0;
    let mut hi = None;
    for _ in 0..MAX_BETA_DOUBLINGS {
        match ctx.run(beta, &mut c, &mut history)? {
            EllipsoidOutcome::Feasible(_) => {
                lo = beta;
                beta *= 2.0;
            }
            EllipsoidOutcome::Infeasible(_) => {
                hi = Some(beta);
                break;
            }
        }
    }
    let mut hi = hi.ok_or_else(|| Error::Numeric("no infeasible beta found while doubling".into()))?;
    if let Some(t) = ctx.pool.theta()? {
        hi = hi.min(t.max(lo));
    }
    for _ in 0..config.beta_steps {
        let mid = 0.5 * (lo + hi);
        match ctx.run(mid, &mut c, &mut history)? {
            EllipsoidOutcome::Feasible(_) => lo = mid,
            EllipsoidOutcome::Infeasible(_) => {
                hi = mid;
                if let Some(t) = ctx.pool.theta()? {
                    hi = hi.min(t.max(lo));
                }
            }
        }
    }
    ctx.polish(c)?;
    let cs = ctx.pool.constraint_set(&tilde, hi);
    let primal = solve_small_primal(inst, &cs)?;
    if primal.theta > hi + 1e-7 {
        ctx.events.push(format!(
            "small primal theta {} exceeds the smallest infeasible beta {hi}; the harvested trees do not certify it",
            primal.theta
        ));
    }
    events.append(&mut ctx.events);
    report.c_final = c;
    report.beta_history = history;
    report.beta_final = hi;
    report.theta_star = primal.theta;
    report.pool_size = ctx.pool.trees.len();
    report.events = events;
    finish(primal.distribution, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::distribution_cost;
    use crate::instance::{generate_instance, Model};
    use crate::rational::ratio;

    fn path() -> Instance {
        Instance::new(&["r", "a", "b"], &[("r", "a", 1.0), ("a", "b", 1.0)], &[("a", 1), ("b", 1)], "r").unwrap()
    }

    #[test]
    fn r_max_values() {
        assert_eq!(r_max(2), 32);
        assert_eq!(r_max(6), 48);
        assert_eq!(r_max(7), 64);
    }

    #[test]
    fn path_gives_single_tree_with_unit_ratios() {
        let inst = path();
        let sol = solve_oblivious(&inst, &FrameworkConfig::default()).unwrap();
        assert_eq!(sol.distribution.support().len(), 1);
        for l in &sol.report.levels {
            assert!((l.ratio - 1.0).abs() < 1e-9);
        }
        let exact = sol.report.exact.unwrap();
        assert!((exact.oblivious_ratio - 1.0).abs() < 1e-9);
    }

    #[test]
    fn star_respects_support_bound_and_theta() {
        let inst = generate_instance(Model::Star, 6, 4, 2).unwrap();
        let sol = solve_oblivious(&inst, &FrameworkConfig::default()).unwrap();
        assert!(sol.distribution.support().len() <= inst.demand_profile().levels);
        let tilde: Vec<f64> = sol.report.tilde.iter().map(|b| b.value).collect();
        for (i, t) in tilde.iter().enumerate() {
            let e = distribution_cost(&sol.distribution, &inst, i as u32).unwrap();
            assert!(e / t <= sol.report.theta_star + 1e-7);
        }
    }

    #[test]
    fn oracle_branches() {
        let inst = path();
        let tilde = vec![2.0, 3.0];
        let q = ratio(1, 4);
        let rob = separation_oracle(&DualPoint { alpha: vec![1.0, 0.0], beta: 1.0 }, &tilde, 4.0, &inst, &q, 0).unwrap();
        assert_eq!(rob.outcome, OracleOutcome::ViolatedRob);
        let zero = separation_oracle(&DualPoint { alpha: vec![0.0, 0.0], beta: 1.0 }, &tilde, 4.0, &inst, &q, 0).unwrap();
        assert_eq!(zero.outcome, OracleOutcome::FeasibleAtZero);
        let tree = separation_oracle(&DualPoint { alpha: vec![0.1, 0.1], beta: 100.0 }, &tilde, 4.0, &inst, &q, 0).unwrap();
        assert!(matches!(tree.outcome, OracleOutcome::ViolatedTree(_)));
        assert_eq!(tree.invocations, 1);
    }

    #[test]
    fn ellipsoid_extremes() {
        let inst = generate_instance(Model::Grid, 6, 3, 1).unwrap();
        let cfg = FrameworkConfig::default();
        let bounds = rob_lower_bounds_with_trees(&inst, 0, cfg.rob_trials).unwrap();
        let tilde: Vec<f64> = bounds.iter().map(|(b, _)| b.value).collect();
        let q = ratio(1, 4);
        let (zero, _) = ellipsoid_feasibility(&inst, 0.0, 4.0, &q, 0, &tilde, 64).unwrap();
        assert!(matches!(zero, EllipsoidOutcome::Feasible(_)));
        // In normalized coordinates every tree satisfies ρ(T)·a ≤ max_i ρ_i(T) on the simplex.
        let big = 1e6;
        let (out, step) = ellipsoid_feasibility(&inst, big, 4.0, &q, 0, &tilde, 64).unwrap();
        match out {
            EllipsoidOutcome::Infeasible(cs) => assert!(cs.trees.len() <= step.iterations.max(1)),
            _ => panic!("expected infeasible"),
        }
    }

    #[test]
    fn small_primal_examples() {
        let inst = path();
        let t = crate::aggregation::route_demands(&inst, &[0, 1]).unwrap();
        let costs = level_costs(&t, &inst);
        let rob = vec![costs[0] * 2.0, costs[1]];
        let cs = ConstraintSet { rob: rob.clone(), trees: vec![TreeConstraint { tree: t, costs: costs.clone() }], beta: 1.0 };
        let sp = solve_small_primal(&inst, &cs).unwrap();
        assert!((sp.theta - 1.0).abs() < 1e-9);
        assert_eq!(sp.distribution.support().len(), 1);
    }

    #[test]
    fn solve_is_deterministic() {
        let inst = generate_instance(Model::RandomGeometric, 6, 3, 5).unwrap();
        let cfg = FrameworkConfig { seed: 9, ..FrameworkConfig::default() };
        let a = solve_oblivious(&inst, &cfg).unwrap();
        let b = solve_oblivious(&inst, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
