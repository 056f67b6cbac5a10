//! α-vectors and pipe schedules: two exact representations of the same
//! piecewise-linear concave cost function.
//!
//! An α-vector `{i: α_i}` denotes `f(x) = Σ_i α_i · min(x, 2^i)`. A pipe
//! schedule `[(σ_k, δ_k)]` denotes `f(x) = min_k (σ_k + δ_k x)`.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, pow2, Rational};

/// Sparse nonnegative coefficients over levels `0..=log D`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlphaVector {
    d: u64,
    /// Only strictly positive entries are stored.
    entries: BTreeMap<u32, Rational>,
}

fn check_d(d: u64) -> Result<u32> {
    if d == 0 || !d.is_power_of_two() {
        return Err(Error::Validation(format!("D = {d} must be a positive power of two")));
    }
    Ok(d.trailing_zeros())
}

impl AlphaVector {
    pub fn new(d: u64, entries: impl IntoIterator<Item = (u32, Rational)>) -> Result<AlphaVector> {
        let log_d = check_d(d)?;
        let mut map = BTreeMap::new();
        for (i, a) in entries {
            if i > log_d {
                return Err(Error::LevelOutOfRange { level: i, max: log_d });
            }
            if a.is_negative() {
                return Err(Error::Validation(format!("alpha_{i} = {} is negative", rational::display(&a))));
            }
            if !a.is_zero() {
                if map.insert(i, a).is_some() {
                    return Err(Error::Validation(format!("duplicate level {i}")));
                }
            }
        }
        if map.is_empty() {
            return Err(Error::Validation("alpha vector must have a positive entry".into()));
        }
        Ok(AlphaVector { d, entries: map })
    }

    /// Converts floats through their decimal representation.
    pub fn from_f64(d: u64, entries: &[(u32, f64)]) -> Result<AlphaVector> {
        let mut exact = Vec::with_capacity(entries.len());
        for &(i, a) in entries {
            exact.push((i, rational::from_f64(a)?));
        }
        AlphaVector::new(d, exact)
    }

    /// Dense form: `values[i]` is `α_i`.
    pub fn from_dense_f64(d: u64, values: &[f64]) -> Result<AlphaVector> {
        let pairs: Vec<(u32, f64)> = values.iter().enumerate().map(|(i, &a)| (i as u32, a)).collect();
        AlphaVector::from_f64(d, &pairs)
    }

    pub fn d(&self) -> u64 {
        self.d
    }

    pub fn log_d(&self) -> u32 {
        self.d.trailing_zeros()
    }

    /// Positive entries in ascending level order.
    pub fn entries(&self) -> impl Iterator<Item = (u32, &Rational)> {
        self.entries.iter().map(|(&i, a)| (i, a))
    }

    pub fn get(&self, i: u32) -> Rational {
        self.entries.get(&i).cloned().unwrap_or_else(Rational::zero)
    }

    /// Number of positive entries.
    pub fn k(&self) -> usize {
        self.entries.len()
    }

    /// Levels `p(0) < p(1) < ...` of the positive entries.
    pub fn levels(&self) -> Vec<u32> {
        self.entries.keys().copied().collect()
    }

    pub fn eval(&self, x: u64) -> Rational {
        let mut total = Rational::zero();
        for (&i, a) in &self.entries {
            total += a * rational::int(x.min(1u64 << i) as i64);
        }
        total
    }

    /// Dense `[α_0, ..., α_{log D}]` as floats.
    pub fn dense_f64(&self) -> Vec<f64> {
        (0..=self.log_d()).map(|i| rational::to_f64(&self.get(i))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pipe {
    pub sigma: Rational,
    pub delta: Rational,
}

impl Pipe {
    pub fn new(sigma: Rational, delta: Rational) -> Pipe {
        Pipe { sigma, delta }
    }

    pub fn at(&self, x: &Rational) -> Rational {
        &self.sigma + &self.delta * x
    }
}

/// Indifference point of two pipes with `a.delta > b.delta`.
pub fn indifference(a: &Pipe, b: &Pipe) -> Rational {
    (&b.sigma - &a.sigma) / (&a.delta - &b.delta)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipeSchedule {
    d: u64,
    pipes: Vec<Pipe>,
}

impl PipeSchedule {
    pub fn new(d: u64, pipes: Vec<Pipe>) -> Result<PipeSchedule> {
        check_d(d)?;
        if pipes.is_empty() {
            return Err(Error::MalformedPipes("schedule must contain a pipe".into()));
        }
        for (k, p) in pipes.iter().enumerate() {
            if p.sigma.is_negative() || p.delta.is_negative() {
                return Err(Error::MalformedPipes(format!("pipe {k} has a negative coefficient")));
            }
        }
        for k in 1..pipes.len() {
            if pipes[k].sigma < pipes[k - 1].sigma || pipes[k].delta > pipes[k - 1].delta {
                return Err(Error::MalformedPipes(format!(
                    "pipes {} and {k} are not ordered by increasing sigma and decreasing delta",
                    k - 1
                )));
            }
        }
        Ok(PipeSchedule { d, pipes })
    }

    /// Convenience constructor from `(σ, δ)` pairs of integers.
    pub fn from_ints(d: u64, pairs: &[(i64, i64)]) -> Result<PipeSchedule> {
        PipeSchedule::new(
            d,
            pairs
                .iter()
                .map(|&(s, t)| Pipe::new(rational::int(s), rational::int(t)))
                .collect(),
        )
    }

    pub fn d(&self) -> u64 {
        self.d
    }

    pub fn pipes(&self) -> &[Pipe] {
        &self.pipes
    }

    pub fn len(&self) -> usize {
        self.pipes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pipes.is_empty()
    }

    pub fn eval(&self, x: &Rational) -> Rational {
        self.pipes
            .iter()
            .map(|p| p.at(x))
            .min()
            .expect("nonempty schedule")
    }

    pub fn eval_f64(&self, x: u64) -> f64 {
        rational::to_f64(&self.eval(&rational::int(x as i64)))
    }
}

/// Converts an α-vector into its `K + 1` pipes, the last one flat.
pub fn alpha_to_pipes(alpha: &AlphaVector) -> PipeSchedule {
    let entries: Vec<(u32, Rational)> = alpha.entries().map(|(i, a)| (i, a.clone())).collect();
    let mut pipes = Vec::with_capacity(entries.len() + 1);
    let mut delta: Rational = entries.iter().map(|(_, a)| a.clone()).sum();
    let mut sigma = Rational::zero();
    for (i, a) in &entries {
        pipes.push(Pipe::new(sigma.clone(), delta.clone()));
        sigma += a * pow2(*i);
        delta -= a;
    }
    pipes.push(Pipe::new(sigma, Rational::zero()));
    PipeSchedule::new(alpha.d(), pipes).expect("conversion yields an ordered schedule")
}

/// Inverts [`alpha_to_pipes`].
///
/// Requires `σ_0 = 0`, a flat last pipe, and power-of-two breakpoints `g_k`.
pub fn pipes_to_alpha(schedule: &PipeSchedule) -> Result<AlphaVector> {
    let pipes = schedule.pipes();
    let log_d = schedule.d().trailing_zeros();
    if !pipes[0].sigma.is_zero() {
        return Err(Error::MalformedPipes(format!(
            "sigma_0 must be 0, found {}",
            rational::display(&pipes[0].sigma)
        )));
    }
    if !pipes.last().expect("nonempty").delta.is_zero() {
        return Err(Error::MalformedPipes("last pipe must have delta = 0".into()));
    }
    let mut entries = Vec::new();
    let mut prev_level: Option<u32> = None;
    for k in 0..pipes.len() - 1 {
        let drop = &pipes[k].delta - &pipes[k + 1].delta;
        if !drop.is_positive() {
            return Err(Error::MalformedPipes(format!("pipes {k} and {} have equal delta", k + 1)));
        }
        let g = indifference(&pipes[k], &pipes[k + 1]);
        let level = rational::log2_exact(&g).ok_or_else(|| Error::NotPowerOfTwo {
            k,
            value: rational::display(&g),
        })?;
        if level > log_d {
            return Err(Error::LevelOutOfRange { level, max: log_d });
        }
        if prev_level.is_some_and(|p| p >= level) {
            return Err(Error::MalformedPipes(format!("breakpoint {k} does not increase")));
        }
        prev_level = Some(level);
        entries.push((level, drop));
    }
    AlphaVector::new(schedule.d(), entries)
}

/// The pipes that realize `f` on `[0, D]`.
///
/// The flat pipe only ties at `D` when `α_{log D} > 0`, so it is dropped then.
pub fn working_pipes(alpha: &AlphaVector) -> Vec<Pipe> {
    let mut pipes = alpha_to_pipes(alpha).pipes;
    if !alpha.get(alpha.log_d()).is_zero() {
        pipes.pop();
    }
    pipes
}

/// Rebuilds the α-vector from working pipes, closing with a flat pipe at `D`.
pub fn alpha_from_working(d: u64, mut pipes: Vec<Pipe>) -> Result<AlphaVector> {
    let last = pipes.last().ok_or_else(|| Error::MalformedPipes("no pipes".into()))?.clone();
    if last.delta.is_positive() {
        let flat = last.at(&rational::int(d as i64));
        pipes.push(Pipe::new(flat, Rational::zero()));
    }
    pipes_to_alpha(&PipeSchedule::new(d, pipes)?)
}

/// Validates `0 < γ < 1/2` and converts it exactly.
pub fn gamma_from_f64(gamma: f64) -> Result<Rational> {
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(Error::InvalidArgument(format!("gamma = {gamma} must lie in (0, 1/2)")));
    }
    rational::from_f64(gamma)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Thresholds {
    /// Capacities `σ_k / δ_k`; `u_0 = 0` and a flat pipe reports `D`.
    pub u: Vec<Rational>,
    /// Indifference points between consecutive pipes.
    pub g: Vec<Rational>,
    /// Significance points between consecutive pipes.
    pub b: Vec<Rational>,
    pub gamma: Rational,
}

/// Flow at which pipe `c` costs `2γ` times pipe `a`; `None` unless `2γ δ_a > δ_c`.
pub fn significance(a: &Pipe, c: &Pipe, gamma: &Rational) -> Option<Rational> {
    let two_gamma = gamma * rational::int(2);
    let denom = &two_gamma * &a.delta - &c.delta;
    if !denom.is_positive() {
        return None;
    }
    Some((&c.sigma - &two_gamma * &a.sigma) / denom)
}

pub fn thresholds(schedule: &PipeSchedule, gamma: &Rational) -> Result<Thresholds> {
    if !(gamma.is_positive() && *gamma < rational::ratio(1, 2)) {
        return Err(Error::InvalidArgument(format!(
            "gamma = {} must lie in (0, 1/2)",
            rational::display(gamma)
        )));
    }
    let pipes = schedule.pipes();
    let d = rational::int(schedule.d() as i64);
    let mut u = Vec::with_capacity(pipes.len());
    for (k, p) in pipes.iter().enumerate() {
        u.push(if k == 0 {
            Rational::zero()
        } else if p.delta.is_zero() {
            d.clone()
        } else {
            &p.sigma / &p.delta
        });
    }
    let mut g = Vec::new();
    let mut b = Vec::new();
    for k in 0..pipes.len().saturating_sub(1) {
        let (a, c) = (&pipes[k], &pipes[k + 1]);
        if !(&a.delta - &c.delta).is_positive() {
            return Err(Error::MalformedPipes(format!("pipes {k} and {} have equal delta", k + 1)));
        }
        g.push(indifference(a, c));
        b.push(significance(a, c, gamma).ok_or(Error::SignificanceUndefined { k })?);
    }
    Ok(Thresholds {
        u,
        g,
        b,
        gamma: gamma.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RegularityConstraint {
    Delta,
    Sigma,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegularityViolation {
    pub k: usize,
    pub constraint: RegularityConstraint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegularityReport {
    pub regular: bool,
    pub violation: Option<RegularityViolation>,
}

/// First violation of `δ_{k+1} < γ δ_k` or `σ_k < γ σ_{k+1}` among consecutive pipes.
pub fn first_violation(pipes: &[Pipe], gamma: &Rational) -> Option<RegularityViolation> {
    for k in 0..pipes.len().saturating_sub(1) {
        if pipes[k + 1].delta >= gamma * &pipes[k].delta {
            return Some(RegularityViolation { k, constraint: RegularityConstraint::Delta });
        }
        if pipes[k].sigma >= gamma * &pipes[k + 1].sigma {
            return Some(RegularityViolation { k, constraint: RegularityConstraint::Sigma });
        }
    }
    None
}

/// Checks γ-regularity of the working pipes of `alpha`.
pub fn is_gamma_regular(alpha: &AlphaVector, gamma: &Rational) -> RegularityReport {
    let violation = first_violation(&working_pipes(alpha), gamma);
    RegularityReport {
        regular: violation.is_none(),
        violation,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    pub d: u64,
    /// Level → coefficient, as a JSON number or an exact `"p/q"` string.
    pub alpha: BTreeMap<String, serde_json::Value>,
}

impl AlphaJson {
    pub fn from_alpha(alpha: &AlphaVector) -> AlphaJson {
        AlphaJson {
            schema_version: Some(1),
            d: alpha.d(),
            alpha: alpha
                .entries()
                .map(|(i, a)| (i.to_string(), serde_json::Value::String(rational::display(a))))
                .collect(),
        }
    }

    pub fn to_alpha(&self) -> Result<AlphaVector> {
        let mut entries = Vec::new();
        for (key, value) in &self.alpha {
            let level: u32 = key
                .parse()
                .map_err(|_| Error::Validation(format!("alpha key {key:?} is not a level index")))?;
            let a = match value {
                serde_json::Value::Number(n) => rational::parse(&n.to_string())?,
                serde_json::Value::String(s) => rational::parse(s)?,
                other => return Err(Error::Validation(format!("alpha_{key} = {other} is not a number"))),
            };
            entries.push((level, a));
        }
        AlphaVector::new(self.d, entries)
    }
}

pub fn alpha_from_json_str(text: &str) -> Result<AlphaVector> {
    let parsed: AlphaJson = serde_json::from_str(text)?;
    parsed.to_alpha()
}
