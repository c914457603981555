//! Energies `E(u) = ∫ G′(u′)² u″² + 2K(u′)` on grid functions.
//!
//! The discrete energy samples `u′` by centered differences collocated with
//! the second differences, `E = h Σ_i [W(p_i) q_i² + 2K(p_i)]` with
//! `W = G′²`, `p_i = (u_{i+1} − u_{i−1})/2h`, `q_i = D²u_i`. Gradients and
//! Hessians below are exact derivatives of this sum.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::banded::SymBanded;
use crate::elastica;
use crate::error::{Error, Result};
use crate::grid::{centered_diff, h_inner, second_diff, GridFunction, HMetric};

/// `G′, G″, G‴` and `K, K′, K″`.
pub trait Profile: Send + Sync {
    fn g1(&self, z: f64) -> f64;
    fn g2(&self, z: f64) -> f64;
    fn g3(&self, z: f64) -> f64;
    fn k(&self, _z: f64) -> f64 {
        0.0
    }
    fn k1(&self, _z: f64) -> f64 {
        0.0
    }
    fn k2(&self, _z: f64) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyKind {
    General,
    Elastic,
    QuadraticTest,
}

impl EnergyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnergyKind::General => "general",
            EnergyKind::Elastic => "elastic",
            EnergyKind::QuadraticTest => "quadratic-test",
        }
    }
}

struct ElasticProfile;

impl Profile for ElasticProfile {
    fn g1(&self, z: f64) -> f64 {
        (1.0 + z * z).powf(-1.25)
    }
    fn g2(&self, z: f64) -> f64 {
        -2.5 * z * (1.0 + z * z).powf(-2.25)
    }
    fn g3(&self, z: f64) -> f64 {
        let s = 1.0 + z * z;
        -2.5 * s.powf(-2.25) + 11.25 * z * z * s.powf(-3.25)
    }
}

struct QuadraticProfile;

impl Profile for QuadraticProfile {
    fn g1(&self, _z: f64) -> f64 {
        1.0
    }
    fn g2(&self, _z: f64) -> f64 {
        0.0
    }
    fn g3(&self, _z: f64) -> f64 {
        0.0
    }
}

#[derive(Clone)]
pub struct EnergySpec {
    kind: EnergyKind,
    profile: Arc<dyn Profile>,
}

impl fmt::Debug for EnergySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnergySpec").field("kind", &self.kind).finish()
    }
}

impl EnergySpec {
    /// `G′(z) = (1 + z²)^{-5/4}`, `K = 0`.
    pub fn elastic() -> Self {
        Self {
            kind: EnergyKind::Elastic,
            profile: Arc::new(ElasticProfile),
        }
    }

    /// `G(z) = z`, `K = 0`, so that `E(u) = (u, u)_H`.
    pub fn quadratic_test() -> Self {
        Self {
            kind: EnergyKind::QuadraticTest,
            profile: Arc::new(QuadraticProfile),
        }
    }

    /// A user-supplied profile; `G′ > 0` and `K ≥ 0` are checked on samples.
    pub fn general(profile: Arc<dyn Profile>) -> Result<Self> {
        for k in 0..=2000 {
            let z = -50.0 + 0.05 * k as f64;
            if !(profile.g1(z) > 0.0) {
                return Err(Error::InvalidParameter(format!("G'({z}) is not positive")));
            }
            if !(profile.k(z) >= 0.0) {
                return Err(Error::InvalidParameter(format!("K({z}) is negative")));
            }
        }
        Ok(Self {
            kind: EnergyKind::General,
            profile,
        })
    }

    pub fn from_kind(kind: EnergyKind) -> Result<Self> {
        match kind {
            EnergyKind::Elastic => Ok(Self::elastic()),
            EnergyKind::QuadraticTest => Ok(Self::quadratic_test()),
            EnergyKind::General => Err(Error::InvalidParameter(
                "a general energy needs an explicit profile".into(),
            )),
        }
    }

    pub fn kind(&self) -> EnergyKind {
        self.kind
    }

    pub fn profile(&self) -> &dyn Profile {
        self.profile.as_ref()
    }

    fn w(&self, p: f64) -> (f64, f64, f64) {
        let (a, b, c) = (self.profile.g1(p), self.profile.g2(p), self.profile.g3(p));
        (a * a, 2.0 * a * b, 2.0 * (b * b + a * c))
    }
}

pub fn energy(spec: &EnergySpec, u: &GridFunction) -> Result<f64> {
    let h = u.grid().h();
    let p = centered_diff(u);
    let q = second_diff(u);
    let mut sum = 0.0;
    for i in 0..q.len() {
        let g1 = spec.profile.g1(p[i]);
        let f = g1 * g1 * q[i] * q[i] + 2.0 * spec.profile.k(p[i]);
        if !f.is_finite() {
            return Err(Error::Overflow { node: i + 1 });
        }
        sum += f;
    }
    Ok(h * sum)
}

/// `DE(u)(φ)` from the general (G, K) formula.
pub fn first_variation(spec: &EnergySpec, u: &GridFunction, phi: &GridFunction) -> Result<f64> {
    if spec.kind == EnergyKind::Elastic {
        return first_variation_elastic_form(u, phi);
    }
    first_variation_general_form(spec, u, phi)
}

pub fn first_variation_general_form(
    spec: &EnergySpec,
    u: &GridFunction,
    phi: &GridFunction,
) -> Result<f64> {
    check_grids(u, phi)?;
    let h = u.grid().h();
    let (p, q) = (centered_diff(u), second_diff(u));
    let (dp, dq) = (centered_diff(phi), second_diff(phi));
    let mut sum = 0.0;
    for i in 0..q.len() {
        let pf = &spec.profile;
        let (g1, g2) = (pf.g1(p[i]), pf.g2(p[i]));
        sum += 2.0 * q[i] * dq[i] * g1 * g1
            + 2.0 * pf.k1(p[i]) * dp[i]
            + 2.0 * g1 * g2 * q[i] * q[i] * dp[i];
    }
    Ok(h * sum)
}

/// `∫ 2u″φ″/(1+u′²)^{5/2} − 5 u″² u′ φ′/(1+u′²)^{7/2}`.
pub fn first_variation_elastic_form(u: &GridFunction, phi: &GridFunction) -> Result<f64> {
    check_grids(u, phi)?;
    let h = u.grid().h();
    let (p, q) = (centered_diff(u), second_diff(u));
    let (dp, dq) = (centered_diff(phi), second_diff(phi));
    let mut sum = 0.0;
    for i in 0..q.len() {
        let s = 1.0 + p[i] * p[i];
        sum += 2.0 * q[i] * dq[i] * s.powf(-2.5) - 5.0 * q[i] * q[i] * p[i] * dp[i] * s.powf(-3.5);
    }
    Ok(h * sum)
}

fn check_grids(u: &GridFunction, v: &GridFunction) -> Result<()> {
    if u.grid() != v.grid() {
        return Err(Error::GridMismatch {
            left: u.grid().n(),
            right: v.grid().n(),
        });
    }
    Ok(())
}

/// `∂E/∂u_j` for interior nodes `j = 1..n-1` (index `j - 1`).
pub fn nodal_gradient(spec: &EnergySpec, u: &GridFunction) -> Vec<f64> {
    let grid = u.grid();
    let n = grid.n();
    let h = grid.h();
    let (p, q) = (centered_diff(u), second_diff(u));
    let mut g = vec![0.0; n + 1];
    for i in 1..n {
        let (pi, qi) = (p[i - 1], q[i - 1]);
        let (w, w1, _) = spec.w(pi);
        let a = (w1 * qi * qi + 2.0 * spec.profile.k1(pi)) / (2.0 * h);
        let b = 2.0 * w * qi / (h * h);
        g[i - 1] += h * (b - a);
        g[i] += h * (-2.0 * b);
        g[i + 1] += h * (b + a);
    }
    g[1..n].to_vec()
}

/// Hessian of the discrete energy on interior unknowns.
pub fn hessian(spec: &EnergySpec, u: &GridFunction) -> SymBanded {
    let grid = u.grid();
    let n = grid.n();
    let h = grid.h();
    let (p, q) = (centered_diff(u), second_diff(u));
    let dp = [-1.0 / (2.0 * h), 0.0, 1.0 / (2.0 * h)];
    let dq = [1.0 / (h * h), -2.0 / (h * h), 1.0 / (h * h)];
    let mut m = SymBanded::zeros(n - 1, 2);
    for i in 1..n {
        let (pi, qi) = (p[i - 1], q[i - 1]);
        let (w, w1, w2) = spec.w(pi);
        let cpp = w2 * qi * qi + 2.0 * spec.profile.k2(pi);
        let cpq = 2.0 * w1 * qi;
        let cqq = 2.0 * w;
        for a in 0..3 {
            let na = i + a - 1;
            if na == 0 || na == n {
                continue;
            }
            for b in 0..=a {
                let nb = i + b - 1;
                if nb == 0 || nb == n {
                    continue;
                }
                let v = cpp * dp[a] * dp[b] + cpq * (dp[a] * dq[b] + dq[a] * dp[b]) + cqq * dq[a] * dq[b];
                m.add(na - 1, nb - 1, h * v);
            }
        }
    }
    m
}

/// The H-gradient together with the nodal first variation it represents.
#[derive(Debug, Clone)]
pub struct GradientReport {
    pub grad: GridFunction,
    pub dual: Vec<f64>,
}

impl GradientReport {
    /// `DE(u)(φ)`.
    pub fn dual_action(&self, phi: &GridFunction) -> f64 {
        self.dual.iter().zip(phi.interior()).map(|(a, b)| a * b).sum()
    }
}

pub fn h_gradient(spec: &EnergySpec, metric: &HMetric, u: &GridFunction) -> GradientReport {
    let dual = nodal_gradient(spec, u);
    let grad = metric.riesz(&dual);
    GradientReport { grad, dual }
}

/// `(‖∇E(u)‖, (1 + 2.5 C_P) E(u) + 1)` for the elastic energy.
pub fn gradient_norm_bound_check(metric: &HMetric, u: &GridFunction) -> Result<(f64, f64)> {
    let spec = EnergySpec::elastic();
    let e = energy(&spec, u)?;
    let dual = nodal_gradient(&spec, u);
    let lhs = metric.dual_norm(&dual);
    Ok((lhs, (1.0 + 2.5 * metric.embedding_constant()) * e + 1.0))
}

/// `max_{i<j} (G(u′_j) − G(u′_i))² / |x_j − x_i|` over interior nodes.
pub fn pairwise_energy_bound(u: &GridFunction) -> f64 {
    let h = u.grid().h();
    let g: Vec<f64> = centered_diff(u).into_iter().map(elastica::g).collect();
    let mut best: f64 = 0.0;
    for i in 0..g.len() {
        for j in i + 1..g.len() {
            let d = g[j] - g[i];
            best = best.max(d * d / ((j - i) as f64 * h));
        }
    }
    best
}

/// Growth modulus of the gradient: `‖∇E(u) − ∇E(v)‖ ≤ ζ(‖u‖ + ‖v‖) ‖u − v‖`.
pub fn zeta(spec: &EnergySpec, c_p: f64, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::Domain { what: "zeta", value: r });
    }
    let pf = &spec.profile;
    let rad = c_p * r;
    let samples = 10_000;
    let (mut s_g1sq, mut s_g1g2, mut s_k2, mut s_mix) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for k in 0..=samples {
        let z = -rad + 2.0 * rad * k as f64 / samples as f64;
        let (g1, g2, g3) = (pf.g1(z), pf.g2(z), pf.g3(z));
        s_g1sq = s_g1sq.max(g1 * g1);
        s_g1g2 = s_g1g2.max((g1 * g2).abs());
        s_k2 = s_k2.max(pf.k2(z).abs());
        s_mix = s_mix.max((g2 * g2 + g1 * g3).abs());
    }
    Ok(2.0 * s_g1sq
        + 2.0 * r * s_g1g2
        + 2.0 * c_p * c_p * s_k2
        + c_p * c_p * r * r * s_mix
        + 3.0 * c_p * r * s_g1g2)
}

/// `E(u) = (u, u)_H` for the quadratic test energy; used as a cross-check.
pub fn quadratic_energy(u: &GridFunction) -> f64 {
    h_inner(u, u).expect("same grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn elastic_parabola_energy() {
        let g = Grid::new(512).unwrap();
        let u = GridFunction::from_fn(g, |x| x * (1.0 - x)).unwrap();
        let e = energy(&EnergySpec::elastic(), &u).unwrap();
        let exact = 4.0 * 5.0 / (3.0 * 2f64.powf(1.5));
        assert!((e - exact).abs() < 0.01, "{e} vs {exact}");
    }

    #[test]
    fn quadratic_energy_is_inner_product() {
        let g = Grid::new(32).unwrap();
        let u = GridFunction::from_fn(g, |x| (2.0 * x).sin() * x * (1.0 - x)).unwrap();
        let e = energy(&EnergySpec::quadratic_test(), &u).unwrap();
        assert!((e - quadratic_energy(&u)).abs() <= 1e-12 * e);
    }

    #[test]
    fn overflow_names_node() {
        let g = Grid::new(8).unwrap();
        let mut v = vec![0.0; 9];
        v[4] = 1e300;
        let u = GridFunction::new(g, v).unwrap();
        let err = energy(&EnergySpec::quadratic_test(), &u).unwrap_err();
        assert!(matches!(err, Error::Overflow { .. }));
    }

    #[test]
    fn zeta_quadratic_is_two() {
        for r in [0.0, 0.5, 3.0, 100.0] {
            assert_eq!(zeta(&EnergySpec::quadratic_test(), 1.7, r).unwrap(), 2.0);
        }
        assert!(zeta(&EnergySpec::quadratic_test(), 1.0, -1.0).is_err());
    }
}
