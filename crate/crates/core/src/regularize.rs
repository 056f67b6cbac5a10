//! Turns an arbitrary α-vector into a γ-regular one whose function is within
//! a constant factor of the original.
//!
//! Three stages run in a fixed order: capacity cap (factor 1), δ-separation
//! (factor 3) and σ-separation (factor 5/2). Each stage works on the pipes
//! that realize `f` on `[0, D]` and checks its own certificates as it goes.

use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pipes::{alpha_from_working, first_violation, indifference, working_pipes, AlphaVector, Pipe, RegularityConstraint};
use crate::rational::{self, int, pow2, ratio, Rational};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RotationRecord {
    /// Position of the rotated pipe after deletions.
    pub pipe: usize,
    pub sigma_before: String,
    pub delta_before: String,
    pub sigma_after: String,
    pub delta_after: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub name: String,
    pub pipes_removed: usize,
    pub rotations: Vec<RotationRecord>,
    pub iterations: usize,
    pub certified_factor: f64,
    /// `max_x f(x) / f'(x)` over integers in `[1, D]`.
    pub measured_distortion: f64,
}

impl StageReport {
    fn new(name: &str, certified_factor: f64) -> StageReport {
        StageReport {
            name: name.to_string(),
            pipes_removed: 0,
            rotations: Vec::new(),
            iterations: 0,
            certified_factor,
            measured_distortion: 1.0,
        }
    }

    pub fn changed(&self) -> bool {
        self.pipes_removed > 0 || !self.rotations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularizationReport {
    pub stages: Vec<StageReport>,
    /// Product of the certified factors of the stages that changed the vector.
    pub total_f_lower_factor: f64,
    pub measured_total_distortion: f64,
    pub gamma: f64,
}

/// `max_x f(x) / g(x)` over integers `x` in `[1, D]`.
///
/// Both functions are linear between consecutive powers of two, and a ratio
/// of positive affine functions is monotone on an interval, so powers of two
/// suffice.
pub fn max_distortion(f: &AlphaVector, g: &AlphaVector) -> Rational {
    let mut best = Rational::zero();
    let mut x = 1u64;
    while x <= f.d() {
        let r = f.eval(x) / g.eval(x);
        if r > best {
            best = r;
        }
        x *= 2;
    }
    best
}

fn left_end(pipes: &[Pipe], k: usize) -> Rational {
    if k == 0 {
        Rational::zero()
    } else {
        indifference(&pipes[k - 1], &pipes[k])
    }
}

fn right_end(pipes: &[Pipe], k: usize, d: &Rational) -> Rational {
    if k + 1 < pipes.len() {
        indifference(&pipes[k], &pipes[k + 1])
    } else {
        d.clone()
    }
}

/// True when `σ/δ ≥ D` (a flat pipe counts as unbounded capacity).
fn over_capacity(p: &Pipe, d: &Rational) -> bool {
    p.delta.is_zero() || p.sigma >= d * &p.delta
}

fn cap_holds(pipes: &[Pipe], d: &Rational) -> bool {
    let last = pipes.last().expect("nonempty");
    !last.delta.is_zero() && last.sigma <= d * &last.delta
}

fn record(k: usize, before: &Pipe, after: &Pipe) -> RotationRecord {
    RotationRecord {
        pipe: k,
        sigma_before: rational::display(&before.sigma),
        delta_before: rational::display(&before.delta),
        sigma_after: rational::display(&after.sigma),
        delta_after: rational::display(&after.delta),
    }
}

fn certificate(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Internal(format!("certificate violated: {what}")))
    }
}

fn finish(input: &AlphaVector, pipes: Vec<Pipe>, mut report: StageReport) -> Result<(AlphaVector, StageReport)> {
    if !report.changed() {
        return Ok((input.clone(), report));
    }
    let out = alpha_from_working(input.d(), pipes)?;
    let distortion = max_distortion(input, &out);
    report.measured_distortion = rational::to_f64(&distortion);
    let factor = rational::from_f64(report.certified_factor)?;
    certificate(distortion <= factor, &format!("{} distortion {} > {}", report.name, report.measured_distortion, report.certified_factor))?;
    Ok((out, report))
}

/// Caps the capacity of the last used pipe at `D`, keeping `f ≤ f'`.
pub fn cap_capacity(alpha: &AlphaVector) -> Result<(AlphaVector, StageReport)> {
    let d = int(alpha.d() as i64);
    let mut pipes = working_pipes(alpha);
    let mut report = StageReport::new("cap_capacity", 1.0);
    let Some(k) = pipes.iter().position(|p| over_capacity(p, &d)) else {
        return Ok((alpha.clone(), report));
    };
    // δ_0 = Σα > 0 and σ_0 = 0, so pipe 0 is never over capacity.
    debug_assert!(k > 0);
    report.iterations = 1;
    report.pipes_removed = pipes.len() - k - 1;
    pipes.truncate(k + 1);
    let x0 = left_end(&pipes, k);
    let y0 = pipes[k].at(&x0);
    let delta = &y0 / (&d + &x0);
    let rotated = Pipe::new(&d * &delta, delta);
    certificate(rotated.delta >= pipes[k].delta, "cap rotation must not lower delta")?;
    if rotated != pipes[k] {
        report.rotations.push(record(k, &pipes[k], &rotated));
        pipes[k] = rotated;
    }
    finish(alpha, pipes, report)
}

/// Enforces `δ_{k+1} < γ δ_k` with `f ≤ 3 f'`.
pub fn regularize_delta(alpha: &AlphaVector, gamma: &Rational) -> Result<(AlphaVector, StageReport)> {
    let d = int(alpha.d() as i64);
    let mut pipes = working_pipes(alpha);
    if !cap_holds(&pipes, &d) {
        return Err(Error::Precondition("regularize_delta needs the capacity cap; run cap_capacity first".into()));
    }
    let mut report = StageReport::new("regularize_delta", 3.0);
    let cap = 4 * alpha.k().max(1);
    let third = ratio(1, 3);
    loop {
        let m = pipes.len();
        let Some(k) = (0..m - 1).find(|&k| pipes[k + 1].delta >= gamma * &pipes[k].delta) else {
            break;
        };
        report.iterations += 1;
        if report.iterations > cap {
            return Err(Error::Internal(format!("regularize_delta exceeded {cap} iterations")));
        }
        let threshold = gamma * &third * &pipes[k].delta;
        let x0 = left_end(&pipes, k);
        match (k + 2..m).find(|&j| pipes[j].delta < threshold) {
            Some(j) => {
                pipes.drain(k + 1..j);
                report.pipes_removed += j - k - 1;
                let g = indifference(&pipes[k], &pipes[k + 1]);
                if rational::log2_exact(&g).is_none() {
                    let p = pow2(rational::ceil_log2(&g));
                    let y0 = pipes[k].at(&x0);
                    let delta = (pipes[k + 1].at(&p) - &y0) / (&p - &x0);
                    let sigma = &y0 - &delta * &x0;
                    let rotated = Pipe::new(sigma, delta);
                    certificate(rotated.delta >= &pipes[k].delta * &third, "delta rotation keeps delta' >= delta/3")?;
                    certificate(rotated.delta <= pipes[k].delta, "delta rotation is clockwise")?;
                    report.rotations.push(record(k, &pipes[k], &rotated));
                    pipes[k] = rotated;
                }
            }
            None => {
                report.pipes_removed += m - k - 1;
                pipes.truncate(k + 1);
            }
        }
    }
    certificate(cap_holds(&pipes, &d), "regularize_delta preserves the capacity cap")?;
    certificate(pipes[0].sigma.is_zero(), "sigma_0 stays 0")?;
    finish(alpha, pipes, report)
}

/// Enforces `σ_k < γ σ_{k+1}` with `f ≤ (5/2) f'`, keeping δ-separation.
pub fn regularize_sigma(alpha: &AlphaVector, gamma: &Rational) -> Result<(AlphaVector, StageReport)> {
    let d = int(alpha.d() as i64);
    let mut pipes = working_pipes(alpha);
    if !cap_holds(&pipes, &d) {
        return Err(Error::Precondition("regularize_sigma needs the capacity cap".into()));
    }
    if let Some(v) = first_violation(&pipes, gamma).filter(|v| v.constraint == RegularityConstraint::Delta) {
        return Err(Error::Precondition(format!(
            "regularize_sigma needs delta-separated pipes; violated at k = {}",
            v.k
        )));
    }
    let mut report = StageReport::new("regularize_sigma", 2.5);
    let cap = 4 * alpha.k().max(1);
    let bound_factor = gamma * ratio(2, 5);
    loop {
        let m = pipes.len();
        let Some(k) = (1..m).rev().find(|&k| pipes[k - 1].sigma >= gamma * &pipes[k].sigma) else {
            break;
        };
        report.iterations += 1;
        if report.iterations > cap {
            return Err(Error::Internal(format!("regularize_sigma exceeded {cap} iterations")));
        }
        let bound = &bound_factor * &pipes[k].sigma;
        let Some(i) = (0..k.saturating_sub(1)).rev().find(|&i| pipes[i].sigma < bound) else {
            return Err(Error::Internal(format!("no pipe below pipe {k} has small enough sigma")));
        };
        let x1 = right_end(&pipes, k, &d);
        pipes.drain(i + 1..k);
        report.pipes_removed += k - i - 1;
        let kk = i + 1;
        let g = indifference(&pipes[i], &pipes[kk]);
        if rational::log2_exact(&g).is_none() {
            let p = pow2(rational::floor_log2(&g).ok_or_else(|| Error::Internal("indifference point below 1".into()))?);
            let y1 = pipes[kk].at(&x1);
            let delta = (&y1 - pipes[i].at(&p)) / (&x1 - &p);
            let sigma = &y1 - &delta * &x1;
            let rotated = Pipe::new(sigma, delta);
            certificate(rotated.sigma >= ratio(2, 5) * &pipes[kk].sigma, "sigma rotation keeps sigma' >= (2/5) sigma")?;
            certificate(rotated.delta <= ratio(8, 5) * &pipes[kk].delta, "sigma rotation keeps delta' <= (8/5) delta")?;
            report.rotations.push(record(kk, &pipes[kk], &rotated));
            pipes[kk] = rotated;
        }
    }
    certificate(first_violation(&pipes, gamma).is_none(), "regularize_sigma output is gamma-regular")?;
    certificate(cap_holds(&pipes, &d), "regularize_sigma preserves the capacity cap")?;
    certificate(pipes[0].sigma.is_zero(), "sigma_0 stays 0")?;
    finish(alpha, pipes, report)
}

/// Runs the three stages in order and returns a γ-regular vector.
pub fn regularize(alpha: &AlphaVector, gamma: &Rational) -> Result<(AlphaVector, RegularizationReport)> {
    let (a1, s1) = cap_capacity(alpha)?;
    let (a2, s2) = regularize_delta(&a1, gamma)?;
    let (a3, s3) = regularize_sigma(&a2, gamma)?;
    let stages = vec![s1, s2, s3];
    let total = stages
        .iter()
        .filter(|s| s.changed())
        .map(|s| s.certified_factor)
        .product();
    let measured = if a3 == *alpha { Rational::one() } else { max_distortion(alpha, &a3) };
    Ok((
        a3,
        RegularizationReport {
            stages,
            total_f_lower_factor: total,
            measured_total_distortion: rational::to_f64(&measured),
            gamma: rational::to_f64(gamma),
        },
    ))
}
