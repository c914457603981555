//! Dense brute-force oracles shared by the integration tests.
//!
//! Everything here is written from the definitions with plain `Vec<f64>`
//! matrices so it does not share code paths with the library solvers.

#![allow(dead_code)]

use rand::Rng;

/// `A = h D2ᵀ D2` on the `n − 1` interior unknowns, built entry by entry.
pub fn dense_gram(n: usize) -> Vec<Vec<f64>> {
    let m = n - 1;
    let h = 1.0 / n as f64;
    // rows of D2 are indexed by interior nodes i = 1..n-1, columns by unknowns j = 1..n-1
    let mut d2 = vec![vec![0.0; m]; m];
    for i in 1..n {
        for (j, c) in [(i - 1, 1.0), (i, -2.0), (i + 1, 1.0)] {
            if (1..n).contains(&j) {
                d2[i - 1][j - 1] = c / (h * h);
            }
        }
    }
    let mut a = vec![vec![0.0; m]; m];
    for r in 0..m {
        for c in 0..m {
            a[r][c] = h * (0..m).map(|k| d2[k][r] * d2[k][c]).sum::<f64>();
        }
    }
    a
}

pub fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[p][k].abs() < 1e-300 {
            return None;
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    Some(x)
}

fn with_ends(x: &[f64]) -> Vec<f64> {
    let mut u = Vec::with_capacity(x.len() + 2);
    u.push(0.0);
    u.extend_from_slice(x);
    u.push(0.0);
    u
}

/// Elastic energy `h Σ q²(1+p²)^{-5/2}` with centered `p` and second differences `q`.
pub fn elastic_energy(x: &[f64]) -> f64 {
    let u = with_ends(x);
    let n = u.len() - 1;
    let h = 1.0 / n as f64;
    (1..n)
        .map(|i| {
            let p = (u[i + 1] - u[i - 1]) / (2.0 * h);
            let q = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (h * h);
            q * q * (1.0 + p * p).powf(-2.5)
        })
        .sum::<f64>()
        * h
}

/// Gradient of [`elastic_energy`] by the chain rule, one node at a time.
pub fn elastic_gradient(x: &[f64]) -> Vec<f64> {
    let u = with_ends(x);
    let n = u.len() - 1;
    let h = 1.0 / n as f64;
    let mut g = vec![0.0; n - 1];
    for (j, gj) in g.iter_mut().enumerate() {
        let j = j + 1;
        for i in j.saturating_sub(1).max(1)..=(j + 1).min(n - 1) {
            let p = (u[i + 1] - u[i - 1]) / (2.0 * h);
            let q = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (h * h);
            let dp = if j == i + 1 {
                1.0 / (2.0 * h)
            } else if j + 1 == i {
                -1.0 / (2.0 * h)
            } else {
                0.0
            };
            let dq = if j == i { -2.0 / (h * h) } else { 1.0 / (h * h) };
            let s = 1.0 + p * p;
            *gj += h * (2.0 * q * dq * s.powf(-2.5) - 5.0 * p * dp * q * q * s.powf(-3.5));
        }
    }
    g
}

/// Every KKT point of `min f(x)` over `x ≥ lower`, found by solving the
/// reduced stationarity system for each of the `2^m` active sets.
/// `grad` and `hess` describe `f`; the reduced system is solved by Newton
/// down to gradient entries of size `gtol`.
pub fn enumerate_kkt(
    lower: &[f64],
    gtol: f64,
    start: &[f64],
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    hess: &dyn Fn(&[f64]) -> Vec<Vec<f64>>,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let m = lower.len();
    let mut found = Vec::new();
    for mask in 0u32..(1 << m) {
        let active: Vec<bool> = (0..m).map(|i| mask >> i & 1 == 1).collect();
        let free: Vec<usize> = (0..m).filter(|&i| !active[i]).collect();
        let mut x: Vec<f64> = (0..m).map(|i| if active[i] { lower[i] } else { start[i] }).collect();
        let mut ok = false;
        for _ in 0..100 {
            let g = grad(&x);
            let gf: Vec<f64> = free.iter().map(|&i| g[i]).collect();
            if gf.iter().all(|v| v.abs() <= gtol) {
                ok = true;
                break;
            }
            if free.is_empty() {
                ok = true;
                break;
            }
            let hm = hess(&x);
            let hff: Vec<Vec<f64>> = free.iter().map(|&r| free.iter().map(|&c| hm[r][c]).collect()).collect();
            let Some(step) = dense_solve(hff, gf.iter().map(|v| -v).collect()) else {
                break;
            };
            // backtrack on the size of the reduced gradient
            let norm = |x: &[f64]| -> f64 {
                let g = grad(x);
                free.iter().map(|&i| g[i] * g[i]).sum::<f64>()
            };
            let n0 = gf.iter().map(|v| v * v).sum::<f64>();
            let mut t = 1.0;
            let mut trial = x.clone();
            for _ in 0..30 {
                for (k, &i) in free.iter().enumerate() {
                    trial[i] = x[i] + t * step[k];
                }
                if norm(&trial) < n0 {
                    break;
                }
                t *= 0.5;
            }
            x = trial;
        }
        if !ok {
            continue;
        }
        let g = grad(&x);
        let primal = free.iter().all(|&i| x[i] >= lower[i] - 1e-12);
        let dual = (0..m).filter(|&i| active[i]).all(|i| g[i] >= -gtol);
        if primal && dual {
            let mu: Vec<f64> = (0..m).map(|i| if active[i] { g[i].max(0.0) } else { 0.0 }).collect();
            found.push((x, mu));
        }
    }
    found
}

/// Size of the terms summed in `A(x − v)/τ`, which sets the gradient noise.
fn roundoff_scale(a: &[Vec<f64>], v: &[f64], tau: f64) -> f64 {
    let norm = a.iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    norm / tau * (1.0 + v.iter().fold(0.0f64, |m, x| m.max(x.abs())))
}

/// Brute-force H projection of `v` onto `{x ≥ lower}`.
pub fn oracle_projection(a: &[Vec<f64>], v: &[f64], lower: &[f64]) -> Vec<f64> {
    let av = mat_vec(a, v);
    let grad = |x: &[f64]| -> Vec<f64> { mat_vec(a, x).iter().zip(&av).map(|(p, q)| p - q).collect() };
    let hess = |_: &[f64]| a.to_vec();
    let pts = enumerate_kkt(lower, 1e-13 * roundoff_scale(a, v, 1.0), v, &grad, &hess);
    assert!(!pts.is_empty(), "no KKT point found");
    pts.into_iter().next().unwrap().0
}

/// `(x − v)ᵀA(x − v)/2τ + E(x)`.
pub fn step_objective(a: &[Vec<f64>], v: &[f64], tau: f64, x: &[f64]) -> f64 {
    let d: Vec<f64> = x.iter().zip(v).map(|(p, q)| p - q).collect();
    mat_vec(a, &d).iter().zip(&d).map(|(p, q)| p * q).sum::<f64>() / (2.0 * tau) + elastic_energy(x)
}

/// Gradient of [`step_objective`].
pub fn step_gradient(a: &[Vec<f64>], v: &[f64], tau: f64, x: &[f64]) -> Vec<f64> {
    let d: Vec<f64> = x.iter().zip(v).map(|(p, q)| p - q).collect();
    mat_vec(a, &d)
        .iter()
        .zip(elastic_gradient(x))
        .map(|(p, q)| p / tau + q)
        .collect()
}

/// Brute-force minimizer of [`step_objective`] over `{x ≥ lower}` with the
/// KKT multipliers; the lowest-objective KKT point wins.
pub fn oracle_step(a: &[Vec<f64>], v: &[f64], lower: &[f64], tau: f64) -> (Vec<f64>, Vec<f64>) {
    let phi = |x: &[f64]| step_objective(a, v, tau, x);
    step_kkt_points(a, v, lower, tau)
        .into_iter()
        .min_by(|p, q| phi(&p.0).total_cmp(&phi(&q.0)))
        .unwrap()
}

/// Every KKT point of the step problem, with multipliers.
pub fn step_kkt_points(a: &[Vec<f64>], v: &[f64], lower: &[f64], tau: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let grad = |x: &[f64]| step_gradient(a, v, tau, x);
    let hess = |x: &[f64]| -> Vec<Vec<f64>> {
        let m = x.len();
        let eps = 1e-6;
        let mut hm = vec![vec![0.0; m]; m];
        for j in 0..m {
            let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
            xp[j] += eps;
            xm[j] -= eps;
            let (gp, gm) = (elastic_gradient(&xp), elastic_gradient(&xm));
            for i in 0..m {
                hm[i][j] = a[i][j] / tau + (gp[i] - gm[i]) / (2.0 * eps);
            }
        }
        hm
    };
    let start: Vec<f64> = v.iter().zip(lower).map(|(p, q)| p.max(*q)).collect();
    let pts = enumerate_kkt(lower, 1e-13 * roundoff_scale(a, v, tau), &start, &grad, &hess);
    assert!(!pts.is_empty(), "no KKT point found");
    pts
}

/// A cone `slope·(min(x, 1 − x) − offset) − shift` on the `n + 1` nodes.
pub fn cone_samples(n: usize, slope: f64, offset: f64, shift: f64) -> Vec<f64> {
    (0..=n)
        .map(|i| {
            let x = i as f64 / n as f64;
            slope * (x.min(1.0 - x) - offset) - shift
        })
        .collect()
}

/// Random oracle instance: obstacle nodes, an admissible start and τ from
/// `taus`. With `rough` set, a third of the nodes are pinned to the obstacle
/// and the rest carry node-to-node noise.
pub fn random_instance(rng: &mut impl Rng, n: usize, taus: &[f64], rough: bool) -> (Vec<f64>, Vec<f64>, f64) {
    let slope = rng.gen_range(0.5..1.5);
    let offset = rng.gen_range(0.1..0.35);
    let shift = rng.gen_range(0.02..0.3);
    let psi = cone_samples(n, slope, offset, shift);
    let mut v = vec![0.0; n + 1];
    // negative amplitudes let the obstacle poke through the data
    let amp = rng.gen_range(-0.3..0.1);
    for i in 1..n {
        let x = i as f64 / n as f64;
        if rough {
            let raw = amp * (std::f64::consts::PI * x).sin() + rng.gen_range(-0.05..0.05);
            v[i] = if rng.gen_bool(0.3) { psi[i] } else { raw.max(psi[i]) };
        } else {
            v[i] = (amp * (std::f64::consts::PI * x).sin() + rng.gen_range(-0.005..0.005)).max(psi[i]);
        }
    }
    let tau = taus[rng.gen_range(0..taus.len())];
    (psi, v, tau)
}
