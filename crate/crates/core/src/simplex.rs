//! Dense two-phase simplex with Bland's rule.
//!
//! Returns basic (vertex) optimal solutions, which bounds the number of
//! nonzero variables by the number of constraints.

use crate::error::{Error, Result};

const EPS: f64 = 1e-10;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Constraint {
        Constraint { coeffs, relation, rhs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.rows[r][self.width]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
        }
        self.basis[r] = c;
    }

    /// Bland's rule iterations over columns `allowed`; false when unbounded.
    fn optimize(&mut self, allowed: &[bool]) -> Result<bool> {
        for _ in 0..MAX_PIVOTS {
            let Some(c) = (0..self.width).find(|&j| allowed[j] && self.obj[j] < -EPS) else {
                return Ok(true);
            };
            let mut best: Option<(f64, usize, usize)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][c];
                if a > EPS {
                    let ratio = self.rhs(r) / a;
                    let better = match best {
                        None => true,
                        Some((br, _, bb)) => {
                            ratio < br - EPS * br.abs().max(1.0)
                                || (ratio <= br + EPS * br.abs().max(1.0) && self.basis[r] < bb)
                        }
                    };
                    if better {
                        best = Some((ratio, r, self.basis[r]));
                    }
                }
            }
            match best {
                Some((_, r, _)) => self.pivot(r, c),
                None => return Ok(false),
            }
        }
        Err(Error::Lp(format!("no convergence within {MAX_PIVOTS} pivots")))
    }
}

/// Minimizes `c · x` subject to `constraints` and `x ≥ 0`.
pub fn minimize(c: &[f64], constraints: &[Constraint]) -> Result<LpSolution> {
    let n = c.len();
    let m = constraints.len();
    if let Some(bad) = constraints.iter().find(|k| k.coeffs.len() != n) {
        return Err(Error::Lp(format!("constraint has {} coefficients, expected {n}", bad.coeffs.len())));
    }
    let rows_in: Vec<(Vec<f64>, Relation, f64)> = constraints
        .iter()
        .map(|k| {
            if k.rhs < 0.0 {
                let flipped = match k.relation {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
                (k.coeffs.iter().map(|v| -v).collect(), flipped, -k.rhs)
            } else {
                (k.coeffs.clone(), k.relation, k.rhs)
            }
        })
        .collect();
    let slack_count = rows_in.iter().filter(|r| r.1 != Relation::Eq).count();
    let art_count = rows_in.iter().filter(|r| r.1 != Relation::Le).count();
    let width = n + slack_count + art_count;
    let art_start = n + slack_count;

    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let (mut s, mut a) = (n, art_start);
    for (coeffs, rel, rhs) in &rows_in {
        let mut row = vec![0.0; width + 1];
        row[..n].copy_from_slice(coeffs);
        row[width] = *rhs;
        match rel {
            Relation::Le => {
                row[s] = 1.0;
                basis.push(s);
                s += 1;
            }
            Relation::Ge => {
                row[s] = -1.0;
                s += 1;
                row[a] = 1.0;
                basis.push(a);
                a += 1;
            }
            Relation::Eq => {
                row[a] = 1.0;
                basis.push(a);
                a += 1;
            }
        }
        rows.push(row);
    }

    let mut t = Tableau { rows, obj: vec![0.0; width + 1], basis, width };
    let scale = 1.0 + rows_in.iter().map(|r| r.2.abs()).fold(0.0, f64::max);

    if art_count > 0 {
        for j in art_start..width {
            t.obj[j] = 1.0;
        }
        for r in 0..m {
            if t.basis[r] >= art_start {
                let row = t.rows[r].clone();
                for (v, rv) in t.obj.iter_mut().zip(&row) {
                    *v -= rv;
                }
            }
        }
        let all = vec![true; width];
        t.optimize(&all)?;
        let infeasibility = -t.obj[width];
        if infeasibility > 1e-8 * scale {
            return Err(Error::Lp(format!("infeasible (phase one residual {infeasibility})")));
        }
        let mut r = 0;
        while r < t.rows.len() {
            if t.basis[r] >= art_start {
                match (0..art_start).find(|&j| t.rows[r][j].abs() > 1e-9) {
                    Some(j) => {
                        t.pivot(r, j);
                        r += 1;
                    }
                    None => {
                        t.rows.remove(r);
                        t.basis.remove(r);
                    }
                }
            } else {
                r += 1;
            }
        }
    }

    t.obj = vec![0.0; width + 1];
    t.obj[..n].copy_from_slice(c);
    for r in 0..t.rows.len() {
        let cb = if t.basis[r] < n { c[t.basis[r]] } else { 0.0 };
        if cb != 0.0 {
            let row = t.rows[r].clone();
            for (v, rv) in t.obj.iter_mut().zip(&row) {
                *v -= cb * rv;
            }
        }
    }
    let allowed: Vec<bool> = (0..width).map(|j| j < art_start).collect();
    if !t.optimize(&allowed)? {
        return Err(Error::Lp("unbounded".into()));
    }
    let mut x = vec![0.0; n];
    for (r, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] = t.rhs(r).max(0.0);
        }
    }
    let objective = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    Ok(LpSolution { x, objective })
}
