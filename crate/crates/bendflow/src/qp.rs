//! Bound-constrained convex quadratic programs with a banded SPD Hessian:
//!
//! ```text
//! minimize ½ xᵀ M x − bᵀ x   subject to   x_i ≥ l_i
//! ```
//!
//! Bounds may be `-inf`. The primal-dual active set iteration is tried first
//! (it usually finishes in a handful of banded solves); if it revisits an
//! active set or runs out of iterations, a primal active-set method takes
//! over, which terminates finitely for strictly convex problems.

use std::collections::HashSet;

use crate::banded::SymBanded;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpMethod {
    PrimalDual,
    PrimalActiveSet,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// `(Mx − b)_i` on active indices, zero elsewhere.
    pub multipliers: Vec<f64>,
    pub active: Vec<bool>,
    pub iterations: usize,
    pub method: QpMethod,
}

/// Solves the QP. `warm` seeds the primal-dual iteration with an active set.
pub fn solve_bound_qp(
    m: &SymBanded,
    b: &[f64],
    lower: &[f64],
    warm: Option<&[bool]>,
) -> Result<QpSolution> {
    let n = m.dim();
    assert_eq!(b.len(), n);
    assert_eq!(lower.len(), n);
    if let Some(sol) = primal_dual(m, b, lower, warm)? {
        return Ok(sol);
    }
    primal_active_set(m, b, lower)
}

/// Solves the equality-constrained subproblem with `x_i = l_i` on `active`.
fn solve_fixed(m: &SymBanded, b: &[f64], lower: &[f64], active: &[bool]) -> Result<Vec<f64>> {
    let n = m.dim();
    let bw = m.bandwidth();
    let free: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();
    let mut x: Vec<f64> = (0..n).map(|i| if active[i] { lower[i] } else { 0.0 }).collect();
    if free.is_empty() {
        return Ok(x);
    }
    let mut rhs: Vec<f64> = free
        .iter()
        .map(|&i| {
            let mut r = b[i];
            let lo = i.saturating_sub(bw);
            let hi = (i + bw).min(n - 1);
            for j in lo..=hi {
                if active[j] {
                    r -= m.get(i, j) * lower[j];
                }
            }
            r
        })
        .collect();
    m.principal(&free).cholesky()?.solve_in_place(&mut rhs);
    for (k, &i) in free.iter().enumerate() {
        x[i] = rhs[k];
    }
    Ok(x)
}

fn gradient(m: &SymBanded, b: &[f64], x: &[f64]) -> Vec<f64> {
    m.mul_vec(x).iter().zip(b).map(|(a, c)| a - c).collect()
}

fn scale_of(m: &SymBanded, b: &[f64], x: &[f64]) -> f64 {
    let bmax = b.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let xmax = x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let dmax = (0..m.dim()).fold(0.0_f64, |a, i| a.max(m.get(i, i).abs()));
    bmax.max(dmax * xmax).max(f64::MIN_POSITIVE)
}

/// Relative KKT residual of `x`: stationarity on free indices, multiplier
/// sign on active ones, and bound violation, divided by the problem scale.
pub fn kkt_residual(m: &SymBanded, b: &[f64], lower: &[f64], x: &[f64]) -> f64 {
    let g = gradient(m, b, x);
    let scale = scale_of(m, b, x);
    let mut r: f64 = 0.0;
    for i in 0..x.len() {
        let d = m.get(i, i);
        let gap = x[i] - lower[i];
        let viol = (-gap).max(0.0) * d;
        let stat = if gap * d <= 1e-12 * scale {
            (-g[i]).max(0.0)
        } else {
            g[i].abs()
        };
        r = r.max(viol).max(stat);
    }
    r / scale
}

fn finish(
    m: &SymBanded,
    b: &[f64],
    x: Vec<f64>,
    active: Vec<bool>,
    iterations: usize,
    method: QpMethod,
) -> QpSolution {
    let g = gradient(m, b, &x);
    let multipliers = (0..x.len())
        .map(|i| if active[i] { g[i] } else { 0.0 })
        .collect();
    QpSolution {
        x,
        multipliers,
        active,
        iterations,
        method,
    }
}

fn primal_dual(
    m: &SymBanded,
    b: &[f64],
    lower: &[f64],
    warm: Option<&[bool]>,
) -> Result<Option<QpSolution>> {
    let n = m.dim();
    let mut active: Vec<bool> = match warm {
        Some(w) => (0..n).map(|i| w[i] && lower[i].is_finite()).collect(),
        None => vec![false; n],
    };
    let mut seen: HashSet<Vec<bool>> = HashSet::new();
    let max_iter = 2 * n + 20;
    for it in 1..=max_iter {
        if !seen.insert(active.clone()) {
            return Ok(None);
        }
        let x = match solve_fixed(m, b, lower, &active) {
            Ok(x) => x,
            Err(Error::NotPositiveDefinite { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let g = gradient(m, b, &x);
        let next: Vec<bool> = (0..n)
            .map(|i| {
                if !lower[i].is_finite() {
                    return false;
                }
                let lam = if active[i] { g[i] } else { 0.0 };
                lam + m.get(i, i) * (lower[i] - x[i]) > 0.0
            })
            .collect();
        if next == active {
            let scale = scale_of(m, b, &x);
            let ok = (0..n).all(|i| {
                let d = m.get(i, i);
                (x[i] - lower[i]) * d >= -1e-12 * scale && (!active[i] || g[i] >= -1e-12 * scale)
            });
            if !ok {
                return Ok(None);
            }
            return Ok(Some(finish(m, b, x, active, it, QpMethod::PrimalDual)));
        }
        active = next;
    }
    Ok(None)
}

fn primal_active_set(m: &SymBanded, b: &[f64], lower: &[f64]) -> Result<QpSolution> {
    let n = m.dim();
    let mut active: Vec<bool> = lower.iter().map(|l| l.is_finite()).collect();
    let mut x: Vec<f64> = lower
        .iter()
        .map(|&l| if l.is_finite() { l } else { 0.0 })
        .collect();
    let max_iter = 10 * n + 100;
    for it in 1..=max_iter {
        let target = solve_fixed(m, b, lower, &active)?;
        // Largest feasible step toward the subproblem solution.
        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..n {
            if !active[i] && lower[i].is_finite() && target[i] < lower[i] {
                let a = (x[i] - lower[i]) / (x[i] - target[i]);
                if a < alpha {
                    alpha = a.max(0.0);
                    blocking = Some(i);
                }
            }
        }
        if let Some(j) = blocking {
            for i in 0..n {
                x[i] += alpha * (target[i] - x[i]);
            }
            x[j] = lower[j];
            active[j] = true;
            continue;
        }
        x = target;
        let g = gradient(m, b, &x);
        let scale = scale_of(m, b, &x);
        let mut worst = None;
        let mut worst_val = -1e-13 * scale;
        for i in 0..n {
            if active[i] && g[i] < worst_val {
                worst_val = g[i];
                worst = Some(i);
            }
        }
        match worst {
            Some(i) => active[i] = false,
            None => return Ok(finish(m, b, x, active, it, QpMethod::PrimalActiveSet)),
        }
    }
    Err(Error::QpNonconvergence {
        iterations: max_iter,
    })
}
