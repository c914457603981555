//! Trajectory-level checks: energy dissipation, Hölder and growth bounds,
//! variational-inequality residuals, contact measures, boundary behaviour,
//! symmetry, and the long-time classifier.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{self, gradient_norm_bound_check, nodal_gradient, pairwise_energy_bound, EnergyKind, EnergySpec};
use crate::error::Result;
use crate::grid::{first_diff_sup, h_norm, Grid, GridFunction, HMetric};
use crate::mms::{interpolate, pairing_min, run_flow, FlowConfig, InterpolationKind, Trajectory};
use crate::obstacle::{active_set, hpr_pairing, metric_slope, project_c, projection_residual, ActiveSet, Obstacle, ObstacleKind};

/// Name of the random generator used for probes and sampled times.
pub const PROBE_RNG: &str = "ChaCha8";

pub fn probe_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One-sided second-order estimates of `u″(0)` and `u″(1)`.
pub fn navier_check(u: &GridFunction) -> (f64, f64) {
    let v = u.values();
    let n = v.len() - 1;
    let h = u.grid().h();
    let b0 = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / (h * h);
    let b1 = (2.0 * v[n] - 5.0 * v[n - 1] + 4.0 * v[n - 2] - v[n - 3]) / (h * h);
    (b0, b1)
}

/// Largest forward third difference over the first and last four cells,
/// a proxy for `sup |u‴|` next to each end.
pub fn end_third_diff(u: &GridFunction) -> (f64, f64) {
    let v = u.values();
    let n = v.len() - 1;
    let h3 = u.grid().h().powi(3);
    let d3 = |a: f64, b: f64, c: f64, d: f64| ((d - 3.0 * c + 3.0 * b - a) / h3).abs();
    let left = (0..2).map(|i| d3(v[i], v[i + 1], v[i + 2], v[i + 3])).fold(0.0, f64::max);
    let right = (0..2)
        .map(|i| d3(v[n - i], v[n - i - 1], v[n - i - 2], v[n - i - 3]))
        .fold(0.0, f64::max);
    (left, right)
}

/// Tolerance for the Navier indicators of `u`: `h (c + 7 M)` with `M` the
/// end third-difference proxy. When `u″` vanishes at an end, Taylor
/// expansion bounds the one-sided estimate by `7 h sup |u‴|` there; the
/// `c h` part covers the discretization of the flow itself.
pub fn navier_tolerance(u: &GridFunction) -> f64 {
    let (l, r) = end_third_diff(u);
    u.grid().h() * (NAVIER_C + 7.0 * l.max(r))
}

/// `max |u_{i+2} − 2u_{i+1} + 2u_{i−1} − u_{i−2}| / 2h³`.
pub fn third_diff_sup(u: &GridFunction) -> f64 {
    let v = u.values();
    let h = u.grid().h();
    v.windows(5)
        .map(|w| ((w[4] - 2.0 * w[3] + 2.0 * w[1] - w[0]) / (2.0 * h * h * h)).abs())
        .fold(0.0, f64::max)
}

pub fn symmetry_error(u: &GridFunction) -> f64 {
    let v = u.values();
    let n = v.len() - 1;
    (0..=n).map(|i| (v[i] - v[n - i]).abs()).fold(0.0, f64::max)
}

/// `Σ a_k sin(kπx)/k²` with `a_k` uniform in `[−amp, amp]`.
pub fn random_smooth(grid: Grid, rng: &mut impl Rng, amp: f64, modes: usize) -> GridFunction {
    let coeffs: Vec<f64> = (1..=modes)
        .map(|k| rng.gen_range(-amp..=amp) / (k * k) as f64)
        .collect();
    GridFunction::from_fn(grid, |x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, a)| a * ((k + 1) as f64 * std::f64::consts::PI * x).sin())
            .sum()
    })
    .expect("finite samples")
}

/// `π_C(base + r)` for random smooth `r` of several amplitudes.
pub fn projected_probes(
    metric: &HMetric,
    psi: &Obstacle,
    base: &GridFunction,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<GridFunction>> {
    let scale = 1.0 + base.sup_norm();
    let amps = [1e-3, 1e-2, 1e-1, 1.0];
    (0..count)
        .map(|j| {
            let r = random_smooth(metric.grid(), rng, amps[j % amps.len()] * scale, 8);
            project_c(metric, &base.add(&r)?, psi)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub passed: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    pub step_range: (usize, usize),
}

impl CheckRecord {
    fn new(name: &str, lhs: f64, rhs: f64, tolerance: f64, step_range: (usize, usize)) -> Self {
        Self {
            name: name.to_string(),
            passed: lhs <= rhs + tolerance,
            lhs,
            rhs,
            tolerance,
            step_range,
        }
    }
}

/// Keeps the instance with the largest `lhs − rhs − tol`.
struct Worst {
    name: &'static str,
    rec: Option<CheckRecord>,
    first: usize,
    last: usize,
}

impl Worst {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            rec: None,
            first: usize::MAX,
            last: 0,
        }
    }

    fn push(&mut self, k: usize, lhs: f64, rhs: f64, tol: f64) {
        self.first = self.first.min(k);
        self.last = self.last.max(k);
        let margin = lhs - rhs - tol;
        let replace = match &self.rec {
            None => true,
            Some(r) => margin > r.lhs - r.rhs - r.tolerance || margin.is_nan(),
        };
        if replace {
            self.rec = Some(CheckRecord::new(self.name, lhs, rhs, tol, (k, k)));
        }
    }

    fn finish(self) -> Option<CheckRecord> {
        let (first, last) = (self.first, self.last);
        self.rec.map(|mut r| {
            r.step_range = (first, last);
            r
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DissipationRow {
    pub k: usize,
    pub t: f64,
    pub energy: f64,
    /// `(E_{k−1} − E_k) / τ`.
    pub energy_rate: f64,
    /// `‖u_k − u_{k−1}‖² / τ²`.
    pub velocity_sq: f64,
    pub discrepancy: f64,
    pub bound: f64,
}

/// Per-step energy rate against squared velocity. The bound is
/// `2·inner_tol/τ + C·τ` with `C` the largest second difference quotient of
/// the energies touching step `k`.
pub fn dissipation_report(traj: &Trajectory) -> Vec<DissipationRow> {
    let e = traj.energies();
    let tau = traj.tau;
    let kmax = traj.len();
    let second = |k: usize| -> f64 {
        if k == 0 || k >= kmax {
            0.0
        } else {
            (e[k + 1] - 2.0 * e[k] + e[k - 1]).abs() / (tau * tau)
        }
    };
    (1..=kmax)
        .map(|k| {
            let rate = (e[k - 1] - e[k]) / tau;
            let step = traj.diagnostics[k].step_norm;
            let vel = step * step / (tau * tau);
            let c = second(k - 1).max(second(k)).max(second(k + 1));
            DissipationRow {
                k,
                t: k as f64 * tau,
                energy: e[k],
                energy_rate: rate,
                velocity_sq: vel,
                discrepancy: (rate - vel).abs(),
                bound: 2.0 * traj.inner_tol / tau + c * tau,
            }
        })
        .collect()
}

/// `min` over probes of the flow variational inequality at step `k` with
/// the backward difference velocity.
pub fn fvi_residual(spec: &EnergySpec, traj: &Trajectory, k: usize, probes: &[GridFunction]) -> Result<f64> {
    assert!(k >= 1 && k <= traj.len(), "step {k} out of range");
    let u = traj.iterate(k);
    let vel = u.sub(traj.iterate(k - 1))?.scale(1.0 / traj.tau);
    pairing_min(spec, u, &vel, &traj.obstacle, probes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactMeasure {
    pub masses: Vec<f64>,
    pub total_mass: f64,
    pub support: ActiveSet,
    /// `m_i = μ([x_i, 1])`.
    pub cumulative: Vec<f64>,
}

pub fn extract_contact_measure(traj: &Trajectory, k: usize) -> Result<ContactMeasure> {
    assert!(k >= 1 && k <= traj.len(), "step {k} out of range");
    let masses = traj.steps[k - 1].multiplier.clone();
    let support = active_set(&traj.steps[k - 1].w, &traj.obstacle)?;
    let mut cumulative = vec![0.0; masses.len()];
    let mut acc = 0.0;
    for i in (0..masses.len()).rev() {
        acc += masses[i];
        cumulative[i] = acc;
    }
    Ok(ContactMeasure {
        total_mass: acc,
        masses,
        support,
        cumulative,
    })
}

/// Cutoff equal to one on `[δ, 1 − δ]`, rising by a quintic smoothstep.
pub fn cutoff(grid: Grid, delta: f64) -> GridFunction {
    let s = |t: f64| {
        let t = t.clamp(0.0, 1.0);
        (t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)).min(1.0)
    };
    GridFunction::from_fn(grid, |x| s(x.min(1.0 - x) / delta)).expect("finite")
}

/// `2‖η_δ‖ ((1 + 2.5 C_P) E0 + 1)`.
pub fn contact_mass_bound(metric: &HMetric, e0: f64, delta: f64) -> f64 {
    let eta = cutoff(metric.grid(), delta);
    2.0 * h_norm(&eta) * ((1.0 + 2.5 * metric.embedding_constant()) * e0 + 1.0)
}

/// Largest `δ ≤ 1/4` such that all contact along the run lies in `[δ, 1 − δ]`.
pub fn contact_margin(traj: &Trajectory) -> Result<f64> {
    let grid = traj.u0.grid();
    let mut delta: f64 = 0.25;
    for k in 1..=traj.len() {
        let act = active_set(traj.iterate(k), &traj.obstacle)?;
        for &i in &act.indices {
            let x = grid.node(i);
            delta = delta.min(x.min(1.0 - x));
        }
        for (i, m) in traj.steps[k - 1].multiplier.iter().enumerate() {
            if *m > 0.0 {
                let x = grid.node(i);
                delta = delta.min(x.min(1.0 - x));
            }
        }
    }
    Ok(delta)
}

/// `E(u(T)) + ½ Σ ‖Δu/τ‖² τ + ½ Σ |∂E|(u_k)² τ − E(u0)` over the first
/// `⌈T/τ⌉` steps.
pub fn ede_residual(traj: &Trajectory, t_end: f64) -> f64 {
    let kmax = ((t_end / traj.tau - 1e-9).ceil().max(0.0) as usize).min(traj.len());
    let tau = traj.tau;
    let d = &traj.diagnostics;
    let mut acc = d[kmax].energy - d[0].energy;
    for row in &d[1..=kmax] {
        acc += 0.5 * (row.step_norm / tau).powi(2) * tau + 0.5 * row.slope * row.slope * tau;
    }
    acc
}

/// `(dist(∇E(u_k), C), dist(−Δu/τ, C))`.
pub fn gradient_distance_check(
    spec: &EnergySpec,
    metric: &HMetric,
    traj: &Trajectory,
    k: usize,
) -> Result<(f64, f64)> {
    let psi = &traj.obstacle;
    let u = traj.iterate(k);
    let grad = metric.riesz(&nodal_gradient(spec, u));
    let lhs = h_norm(&projection_residual(metric, &grad, psi)?);
    let vel = traj.iterate(k - 1).sub(u)?.scale(1.0 / traj.tau);
    let rhs = h_norm(&projection_residual(metric, &vel, psi)?);
    Ok((lhs, rhs))
}

/// Runs the flow from `u0` and from `u0 + δ` and compares them at every
/// step against `‖δ‖ exp(t ζ(‖u0‖ + ‖v0‖ + 2√(max E) √t))`.
pub fn continuous_dependence_check(
    config: &FlowConfig,
    metric: &HMetric,
    delta: &GridFunction,
) -> Result<CheckRecord> {
    let mut other = config.clone();
    other.u0 = config.u0.add(delta)?;
    let a = run_flow(config, metric)?;
    let b = run_flow(&other, metric)?;
    let c_p = metric.embedding_constant();
    let r0 = h_norm(&config.u0) + h_norm(&other.u0);
    let e_max = a.diagnostics[0].energy.max(b.diagnostics[0].energy);
    let d0 = h_norm(delta);
    let mut worst = Worst::new("continuous-dependence");
    for k in 0..=a.len().min(b.len()) {
        let t = k as f64 * config.tau;
        let lhs = h_norm(&a.iterate(k).sub(b.iterate(k))?);
        let zeta = energy::zeta(&config.spec, c_p, r0 + 2.0 * e_max.sqrt() * t.sqrt())?;
        // capped so the record stays finite when written as JSON
        worst.push(k, lhs, (d0 * (t * zeta).exp()).min(f64::MAX), 1e-9);
    }
    Ok(worst.finish().expect("step 0 is always recorded"))
}

/// True iff every step's contact set lies in `[δ, 1 − δ]`.
pub fn contact_trap_check(traj: &Trajectory, delta: f64) -> Result<bool> {
    let grid = traj.u0.grid();
    for k in 1..=traj.len() {
        let act = active_set(traj.iterate(k), &traj.obstacle)?;
        if act
            .indices
            .iter()
            .any(|&i| grid.node(i) < delta || grid.node(i) > 1.0 - delta)
        {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictTag {
    SubconvergentCandidate,
    VerticalBlowupCandidate,
    Undecided,
}

impl std::fmt::Display for VerdictTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VerdictTag::SubconvergentCandidate => "subconvergent-candidate",
            VerdictTag::VerticalBlowupCandidate => "vertical-blowup-candidate",
            VerdictTag::Undecided => "undecided",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierThresholds {
    pub slope_tol: f64,
    pub deriv_cap: f64,
    pub growth_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DichotomyVerdict {
    pub tag: VerdictTag,
    pub thresholds: ClassifierThresholds,
    pub min_slope: f64,
    pub final_slope: f64,
    pub initial_sup_du: f64,
    pub max_sup_du: f64,
    pub final_sup_du: f64,
    /// `max_sup_du / initial_sup_du`.
    pub growth_ratio: f64,
    /// Least-squares slope of `sup_du` against `t` over the second half.
    pub late_sup_du_trend: f64,
    /// `max(0, −min_v (∇E(u_∞), v − u_∞) / ‖v − u_∞‖)` over probes.
    pub critical_residual: f64,
}

/// Finite-horizon reading of the long-time alternative.
pub fn classify(
    spec: &EnergySpec,
    metric: &HMetric,
    traj: &Trajectory,
    probes: &[GridFunction],
) -> Result<DichotomyVerdict> {
    let d = &traj.diagnostics;
    let e0 = d[0].energy;
    let thresholds = ClassifierThresholds {
        slope_tol: 1e-4 * (1.0 + e0),
        deriv_cap: 50.0,
        growth_factor: 2.0,
    };
    let last = d.len() - 1;
    let final_slope = d[last].slope;
    let min_slope = d.iter().map(|r| r.slope).fold(f64::INFINITY, f64::min);
    let initial = d[0].sup_du;
    let max_du = d.iter().map(|r| r.sup_du).fold(0.0, f64::max);
    let growth_ratio = if initial > 0.0 { max_du / initial } else { f64::INFINITY };
    let late = &d[last / 2..];
    let late_sup_du_trend = {
        let m = late.len() as f64;
        let tm = late.iter().map(|r| r.t).sum::<f64>() / m;
        let ym = late.iter().map(|r| r.sup_du).sum::<f64>() / m;
        let num: f64 = late.iter().map(|r| (r.t - tm) * (r.sup_du - ym)).sum();
        let den: f64 = late.iter().map(|r| (r.t - tm).powi(2)).sum();
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    };
    let u = traj.iterate(traj.len());
    let g = nodal_gradient(spec, u);
    let mut worst: f64 = 0.0;
    for v in probes {
        let dv = v.sub(u)?;
        let norm = h_norm(&dv);
        if norm > 0.0 {
            let val: f64 = g.iter().zip(dv.interior()).map(|(a, b)| a * b).sum();
            worst = worst.max(-val / norm);
        }
    }
    let critical_residual = worst.max(metric_slope(spec, metric, u, &traj.obstacle)?);
    // Derivative growth is checked first: along a slow blow-up the slope
    // decays too, so a small final slope alone does not separate the cases.
    let tag = if max_du > thresholds.deriv_cap || growth_ratio >= thresholds.growth_factor {
        VerdictTag::VerticalBlowupCandidate
    } else if final_slope <= thresholds.slope_tol {
        VerdictTag::SubconvergentCandidate
    } else {
        VerdictTag::Undecided
    };
    Ok(DichotomyVerdict {
        tag,
        thresholds,
        min_slope,
        final_slope,
        initial_sup_du: initial,
        max_sup_du: max_du,
        final_sup_du: d[last].sup_du,
        growth_ratio,
        late_sup_du_trend,
        critical_residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monitor {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub checks: Vec<CheckRecord>,
    pub monitors: Vec<Monitor>,
    pub verdict: Option<DichotomyVerdict>,
}

impl DiagnosticReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &CheckRecord> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Constant `c` in the boundary tolerance `c·h` for the Navier indicators.
pub const NAVIER_C: f64 = 1.0;

/// True when the end curvature estimates of `u0` already meet the Navier
/// tolerance, so the flow is expected to keep them small.
pub fn meets_navier_tolerance(u0: &GridFunction) -> bool {
    let (b0, b1) = navier_check(u0);
    b0.abs().max(b1.abs()) <= navier_tolerance(u0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub seed: u64,
    pub probes: usize,
    pub probe_steps: usize,
    pub holder_pairs: usize,
    pub hpr_pairs: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            probes: 20,
            probe_steps: 10,
            holder_pairs: 100,
            hpr_pairs: 100,
        }
    }
}

fn sampled_steps(kmax: usize, count: usize) -> Vec<usize> {
    if kmax == 0 {
        return Vec::new();
    }
    let count = count.clamp(1, kmax);
    let mut ks: Vec<usize> = (1..=count).map(|j| (j * kmax).div_ceil(count)).collect();
    ks.dedup();
    ks
}

/// Runs every applicable check over the trajectory.
pub fn run_checks(
    spec: &EnergySpec,
    metric: &HMetric,
    traj: &Trajectory,
    opts: &CheckOptions,
) -> Result<DiagnosticReport> {
    let mut rng = probe_rng(opts.seed);
    let psi = &traj.obstacle;
    let tau = traj.tau;
    let tol = traj.inner_tol;
    let kmax = traj.len();
    let d = &traj.diagnostics;
    let e0 = d[0].energy;
    let elastic = spec.kind() == EnergyKind::Elastic;
    let mut checks = Vec::new();
    let mut monitors = Vec::new();
    let mut monitor = |name: &str, value: f64| {
        monitors.push(Monitor {
            name: name.to_string(),
            value,
        })
    };

    // Per-step descent and its telescoped sum.
    let mut descent = Worst::new("energy-descent");
    let mut dissipated = 0.0;
    for k in 1..=kmax {
        let s = d[k].step_norm;
        let lhs = s * s / (2.0 * tau);
        dissipated += lhs;
        descent.push(k, lhs, d[k - 1].energy - d[k].energy, tol);
    }
    checks.extend(descent.finish());
    if kmax > 0 {
        checks.push(CheckRecord::new(
            "telescoping-dissipation",
            dissipated,
            e0 - d[kmax].energy,
            kmax as f64 * tol,
            (1, kmax),
        ));
        checks.push(CheckRecord::new("dissipation-below-initial-energy", dissipated, e0, kmax as f64 * tol, (1, kmax)));
    }

    // Hölder and growth bounds on the linear interpolant.
    let t_end = traj.final_time();
    if kmax > 0 {
        let mut holder = Worst::new("holder-bound");
        for _ in 0..opts.holder_pairs {
            let t = rng.gen_range(0.0..=t_end);
            let s = rng.gen_range(0.0..=t_end);
            let a = interpolate(traj, t, InterpolationKind::Linear)?;
            let b = interpolate(traj, s, InterpolationKind::Linear)?;
            let lhs = h_norm(&a.sub(&b)?);
            let rhs = 3.0 * 2f64.sqrt() * e0.sqrt() * (t - s).abs().sqrt();
            holder.push(((t.max(s) / tau).ceil() as usize).min(kmax), lhs, rhs, 1e-12);
        }
        checks.extend(holder.finish());
    }
    let u0_norm = h_norm(&traj.u0);
    let r_t = u0_norm + 3.0 * 2f64.sqrt() * e0.sqrt() * t_end.sqrt();
    let mut growth = Worst::new("growth-bound");
    for k in 0..=kmax {
        growth.push(k, h_norm(traj.iterate(k)), r_t, 1e-12);
    }
    checks.extend(growth.finish());

    // Energy-specific estimates along the iterates.
    if elastic {
        let mut grad_bound = Worst::new("gradient-norm-bound");
        let mut pairwise = Worst::new("pairwise-energy-bound");
        for k in 0..=kmax {
            let u = traj.iterate(k);
            let (lhs, rhs) = gradient_norm_bound_check(metric, u)?;
            grad_bound.push(k, lhs, rhs, 1e-8);
            let e = d[k].energy;
            pairwise.push(k, pairwise_energy_bound(u), e, 1e-6 * e + 1e-8);
        }
        checks.extend(grad_bound.finish());
        checks.extend(pairwise.finish());

        if kmax > 0 {
            let delta = contact_margin(traj)?;
            let bound = contact_mass_bound(metric, e0, delta);
            let mut mass = Worst::new("contact-mass-bound");
            for k in 1..=kmax {
                mass.push(k, d[k].mu_mass, bound, 0.0);
            }
            checks.extend(mass.finish());
            monitor("contact-mass-cutoff-delta", delta);
        }
    }

    // Complementarity and multiplier sign.
    if kmax > 0 {
        let mut comp = Worst::new("complementarity");
        for k in 1..=kmax {
            let st = &traj.steps[k - 1];
            let total: f64 = st.multiplier.iter().sum();
            let worst = st
                .multiplier
                .iter()
                .zip(st.w.values().iter().zip(psi.samples()))
                .map(|(m, (w, p))| m * (w - p))
                .fold(0.0, f64::max);
            comp.push(k, worst, 0.0, tol * (1.0 + total));
        }
        checks.extend(comp.finish());
    }

    // Descent rate against the sampled ball sup.
    if kmax > 0 {
        let mut sup_grad_sq: f64 = 0.0;
        for k in 1..=kmax {
            let (a, b) = (traj.iterate(k - 1), traj.iterate(k));
            for theta in [0.0, 0.5, 1.0] {
                let u = a.scale(1.0 - theta).axpy(theta, b)?;
                let g = metric.dual_norm(&nodal_gradient(spec, &u));
                sup_grad_sq = sup_grad_sq.max(g * g);
            }
        }
        let c_t = 2.0 * sup_grad_sq;
        let mut rate = Worst::new("descent-rate");
        let mut max_ratio: f64 = 0.0;
        for k in 1..=kmax {
            let r = (d[k - 1].energy - d[k].energy) / tau;
            rate.push(k, r, c_t, tol / tau);
            if c_t > 0.0 {
                max_ratio = max_ratio.max(r / c_t);
            }
        }
        checks.extend(rate.finish());
        monitor("descent-rate-ratio", max_ratio);
    }

    // Gradient distance estimate at every step.
    if kmax > 0 {
        let mut gd = Worst::new("gradient-distance");
        for k in 1..=kmax {
            let (lhs, rhs) = gradient_distance_check(spec, metric, traj, k)?;
            gd.push(k, lhs, rhs, 1e-6);
        }
        checks.extend(gd.finish());
    }

    // HPR pairings of iterates perturbed by random smooth functions.
    {
        let mut hpr = Worst::new("hpr-pairing");
        for _ in 0..opts.hpr_pairs {
            let k1 = rng.gen_range(0..=kmax);
            let k2 = rng.gen_range(0..=kmax);
            let s1 = 1.0 + traj.iterate(k1).sup_norm();
            let s2 = 1.0 + traj.iterate(k2).sup_norm();
            let w1 = traj.iterate(k1).add(&random_smooth(metric.grid(), &mut rng, s1, 8))?;
            let w2 = traj.iterate(k2).add(&random_smooth(metric.grid(), &mut rng, s2, 8))?;
            let p = hpr_pairing(metric, &w1, &w2, psi)?;
            hpr.push(k1.max(k2), -p, 0.0, 1e-9);
        }
        checks.extend(hpr.finish());
    }

    // FVI residual with projected random probes plus the previous iterate.
    if kmax > 0 {
        let mut fvi = Worst::new("fvi-residual");
        for k in sampled_steps(kmax, opts.probe_steps) {
            let u = traj.iterate(k);
            let mut probes = projected_probes(metric, psi, u, opts.probes, &mut rng)?;
            probes.push(traj.iterate(k - 1).clone());
            let dist = probes
                .iter()
                .map(|p| p.sub(u).map(|x| h_norm(&x)))
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(1.0, f64::max);
            let grad = metric.dual_norm(&nodal_gradient(spec, u));
            let scale = (1.0 + d[k].step_norm / tau + grad) * dist;
            let val = fvi_residual(spec, traj, k, &probes)?;
            fvi.push(k, -val, 0.0, 1e-6 * scale);
        }
        checks.extend(fvi.finish());
    }

    // Boundary behaviour for data with vanishing end curvature.
    let h = metric.grid().h();
    if meets_navier_tolerance(&traj.u0) {
        let mut nav = Worst::new("navier-boundary");
        for row in d {
            let rhs = navier_tolerance(traj.iterate(row.k));
            nav.push(row.k, row.navier0.abs().max(row.navier1.abs()), rhs, 0.0);
        }
        checks.extend(nav.finish());
    }
    monitor(
        "navier-max-over-h",
        d.iter().map(|r| r.navier0.abs().max(r.navier1.abs())).fold(0.0, f64::max) / h,
    );

    if symmetry_error(&traj.u0) <= 1e-12 && is_symmetric_obstacle(psi) {
        let mut sym = Worst::new("symmetry");
        for row in d {
            sym.push(row.k, row.symmetry_err, 1e-8, 0.0);
        }
        checks.extend(sym.finish());
    }

    if let ObstacleKind::Cone { offset, .. } = psi.kind() {
        if elastic && kmax > 0 {
            let ok = contact_trap_check(traj, 0.5 * offset)?;
            checks.push(CheckRecord::new(
                "contact-trap",
                if ok { 0.0 } else { 1.0 },
                0.0,
                0.0,
                (1, kmax),
            ));
        }
    }

    // Reported quantities with no known constant to assert against.
    let mut running_sup: f64 = 0.0;
    let mut ratio_max: f64 = 0.0;
    let mut ratio0 = f64::NAN;
    for row in d {
        running_sup = running_sup.max(row.sup_du);
        let r = row.sup_d3u / (1.0 + running_sup * running_sup).powf(7.5);
        if ratio0.is_nan() {
            ratio0 = r;
        }
        ratio_max = ratio_max.max(r);
    }
    monitor("third-derivative-ratio-growth", if ratio0 > 0.0 { ratio_max / ratio0 } else { 0.0 });
    if kmax > 0 {
        let rows = dissipation_report(traj);
        let worst = rows
            .iter()
            .map(|r| if r.bound > 0.0 { r.discrepancy / r.bound } else { 0.0 })
            .fold(0.0, f64::max);
        monitor("dissipation-rate-discrepancy-over-bound", worst);
        monitor("ede-residual", ede_residual(traj, t_end));
    }
    monitor("embedding-constant", metric.embedding_constant());
    monitor("initial-energy", e0);
    monitor("final-energy", d[kmax].energy);

    let verdict = if elastic && kmax > 0 {
        let u = traj.iterate(kmax);
        let probes = projected_probes(metric, psi, u, opts.probes, &mut rng)?;
        Some(classify(spec, metric, traj, &probes)?)
    } else {
        None
    };
    Ok(DiagnosticReport {
        checks,
        monitors,
        verdict,
    })
}

fn is_symmetric_obstacle(psi: &Obstacle) -> bool {
    let s = psi.samples();
    let n = s.len() - 1;
    (0..=n).all(|i| (s[i] - s[n - i]).abs() <= 1e-12 * (1.0 + s[i].abs()))
}

/// Largest `first_diff_sup` along the trajectory.
pub fn max_first_diff_sup(traj: &Trajectory) -> f64 {
    (0..=traj.len())
        .map(|k| first_diff_sup(traj.iterate(k)))
        .fold(0.0, f64::max)
}
