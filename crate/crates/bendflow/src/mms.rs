//! Minimizing movements: each step minimizes
//! `Φ(u) = ‖u − v‖²_H / 2τ + E(u)` over `C`.
//!
//! The step solver is an active-set Newton (SQP) iteration. Each outer
//! iteration solves the bound-constrained quadratic model
//! `½ dᵀ J d + F·d, d ≥ ψ − w` with `J = A/τ + ∇²E(w)` (shifted towards
//! `A/τ` if indefinite) and `F = A(w − v)/τ + ∇̂E(w)`, followed by an Armijo
//! line search on `Φ`. If that stalls, projected H-gradient descent takes
//! over. Convergence is measured by the KKT residual in the dual H norm.

use serde::{Deserialize, Serialize};

use crate::banded::SymBanded;
use crate::diagnostics::{navier_check, symmetry_error, third_diff_sup};
use crate::energy::{energy, hessian, nodal_gradient, EnergyKind, EnergySpec};
use crate::error::{Error, Result};
use crate::grid::{first_diff_sup, h_inner, h_norm, second_diff, GridFunction, HMetric};
use crate::obstacle::{admissible, first_violation, metric_slope_from_dual, project_c, Obstacle};
use crate::qp::solve_bound_qp;

#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub spec: EnergySpec,
    pub obstacle: Obstacle,
    pub u0: GridFunction,
    pub tau: f64,
    pub horizon: f64,
    pub inner_tol: f64,
    pub max_steps: usize,
}

impl FlowConfig {
    pub fn new(spec: EnergySpec, obstacle: Obstacle, u0: GridFunction, tau: f64, horizon: f64) -> Self {
        Self {
            spec,
            obstacle,
            u0,
            tau,
            horizon,
            inner_tol: 1e-10,
            max_steps: 1_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !(self.inner_tol > 0.0) {
            return Err(Error::InvalidParameter("inner_tol must be positive".into()));
        }
        if self.u0.grid() != self.obstacle.grid() {
            return Err(Error::GridMismatch {
                left: self.u0.grid().n(),
                right: self.obstacle.grid().n(),
            });
        }
        if let Some((node, gap)) = first_violation(&self.u0, &self.obstacle) {
            return Err(Error::Inadmissible { node, gap });
        }
        Ok(())
    }

    /// Number of steps the run will take.
    pub fn step_count(&self) -> usize {
        let k = (self.horizon / self.tau - 1e-9).ceil().max(1.0) as usize;
        k.min(self.max_steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSolver {
    ActiveSetNewton,
    ProjectedGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub w: GridFunction,
    /// Nodal contact masses (length `n + 1`, zero at the ends).
    pub multiplier: Vec<f64>,
    pub el_residual: f64,
    pub inner_iters: usize,
    pub energy_before: f64,
    pub energy_after: f64,
    pub solver: StepSolver,
}

/// One row of the per-step table; row `k = 0` describes `u0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub k: usize,
    pub t: f64,
    pub energy: f64,
    pub step_norm: f64,
    pub el_residual: f64,
    pub mu_mass: f64,
    pub slope: f64,
    pub sup_du: f64,
    pub sup_d3u: f64,
    pub navier0: f64,
    pub navier1: f64,
    pub symmetry_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub energy_kind: EnergyKind,
    pub obstacle: Obstacle,
    pub tau: f64,
    pub inner_tol: f64,
    pub u0: GridFunction,
    pub steps: Vec<StepReport>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `u_{kτ}`, with `k = 0` the initial datum.
    pub fn iterate(&self, k: usize) -> &GridFunction {
        if k == 0 {
            &self.u0
        } else {
            &self.steps[k - 1].w
        }
    }

    pub fn final_time(&self) -> f64 {
        self.steps.len() as f64 * self.tau
    }

    pub fn energies(&self) -> Vec<f64> {
        self.diagnostics.iter().map(|d| d.energy).collect()
    }
}

const MAX_NEWTON: usize = 60;
/// Newton iterations without a halving of the residual before it is
/// declared stalled.
const STALL_ITERS: usize = 3;
/// A stalled residual within this many rounding floors is accepted.
const STALL_FACTOR: f64 = 64.0;
/// Relative size of the rounding noise in evaluating Φ.
const PHI_NOISE: f64 = 1e-12;
const MAX_GRADIENT: usize = 20_000;

struct Objective<'a> {
    spec: &'a EnergySpec,
    metric: &'a HMetric,
    v: &'a GridFunction,
    tau: f64,
}

impl Objective<'_> {
    fn phi(&self, w: &GridFunction) -> Result<f64> {
        let d = w.sub(self.v)?;
        Ok(h_inner(&d, &d)? / (2.0 * self.tau) + energy(self.spec, w)?)
    }

    /// Nodal gradient of Φ and of E.
    fn forces(&self, w: &GridFunction) -> (Vec<f64>, Vec<f64>) {
        let diff: Vec<f64> = w
            .interior()
            .iter()
            .zip(self.v.interior())
            .map(|(a, b)| a - b)
            .collect();
        let g = nodal_gradient(self.spec, w);
        let f = self
            .metric
            .apply(&diff)
            .iter()
            .zip(&g)
            .map(|(a, b)| a / self.tau + b)
            .collect();
        (f, g)
    }
}

/// KKT residual of the step problem: the dual norm of the forces left once
/// every contact node pushing against the obstacle (`F_i ≥ 0`) is balanced by
/// its multiplier. Minimizing over those multipliers leaves the forces on
/// the remaining nodes `T`, measured in the norm of the principal block
/// `A_TT`. Contact nodes pulled away from the obstacle stay in `T`.
fn kkt_residual(metric: &HMetric, f: &[f64], w: &GridFunction, psi: &Obstacle) -> Result<f64> {
    let tol = psi.contact_tol();
    let free: Vec<usize> = (0..f.len())
        .filter(|&i| !(w.interior()[i] - psi.interior()[i] <= tol && f[i] >= 0.0))
        .collect();
    if free.len() == f.len() {
        return Ok(metric.dual_norm(f));
    }
    if free.is_empty() {
        return Ok(0.0);
    }
    let ft: Vec<f64> = free.iter().map(|&i| f[i]).collect();
    let x = metric.gram().principal(&free).cholesky()?.solve(&ft);
    Ok(x.iter().zip(&ft).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt())
}

fn multipliers(f: &[f64], w: &GridFunction, psi: &Obstacle) -> Vec<f64> {
    let tol = psi.contact_tol();
    let mut mu = vec![0.0; f.len() + 2];
    for (i, &fi) in f.iter().enumerate() {
        if w.interior()[i] - psi.interior()[i] <= tol {
            mu[i + 1] = fi.max(0.0);
        }
    }
    mu
}

/// Dual norm of the rounding noise in the forces at `w`. Second
/// differences of `w` carry an absolute error of order `ε|w|/h²`, which the
/// gradient scales like `|∇²E|·|w|`; node by node the errors are unrelated,
/// so they are given fixed pseudo-random signs before taking the norm.
fn rounding_floor(metric: &HMetric, hess: &SymBanded, w: &GridFunction) -> f64 {
    let scale = hess.abs_mul_vec(w.interior());
    let noise: Vec<f64> = scale
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let sign = if (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 63 == 0 { 1.0 } else { -1.0 };
            sign * f64::EPSILON * s
        })
        .collect();
    metric.dual_norm(&noise)
}

/// `A/τ + ∇²E`, made positive definite for the QP. Nodes in contact are
/// damped first: their step is pinned at zero while they stay active, so
/// a diagonal term there leaves the Newton step on the free nodes alone.
/// Only if the free block itself is indefinite is `A/τ` scaled up, which
/// slows the step to a contraction rate of about `σ/(1+σ)`.
fn shifted_hessian(metric: &HMetric, hess: SymBanded, tau: f64, contact: &[bool]) -> Result<SymBanded> {
    let mut base = metric.gram().clone();
    base.scale(1.0 / tau);
    base.add_scaled(1.0, &hess);
    if base.cholesky().is_ok() {
        return Ok(base);
    }
    if contact.iter().any(|&c| c) {
        let scale = (0..base.dim()).map(|i| base.get(i, i).abs()).fold(0.0, f64::max);
        let mut c = scale;
        for _ in 0..12 {
            let mut j = base.clone();
            for (i, _) in contact.iter().enumerate().filter(|(_, &a)| a) {
                j.add(i, i, c);
            }
            if j.cholesky().is_ok() {
                return Ok(j);
            }
            c *= 4.0;
        }
    }
    let mut sigma = 1e-3;
    for _ in 0..40 {
        let mut j = metric.gram().clone();
        j.scale((1.0 + sigma) / tau);
        j.add_scaled(1.0, &hess);
        if j.cholesky().is_ok() {
            return Ok(j);
        }
        sigma *= 4.0;
    }
    Err(Error::NotPositiveDefinite { pivot: 0 })
}

/// One minimizing-movement step from the admissible `v`.
pub fn mm_step(
    spec: &EnergySpec,
    metric: &HMetric,
    psi: &Obstacle,
    v: &GridFunction,
    tau: f64,
    inner_tol: f64,
) -> Result<StepReport> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    if let Some((node, gap)) = first_violation(v, psi) {
        return Err(Error::Inadmissible { node, gap });
    }
    let obj = Objective { spec, metric, v, tau };
    let energy_before = energy(spec, v)?;
    let grid = v.grid();
    let lower_abs = psi.interior();

    let mut w = v.clone();
    let mut phi_w = obj.phi(&w)?;
    let mut warm: Vec<bool> = w
        .interior()
        .iter()
        .zip(lower_abs)
        .map(|(a, l)| a - l <= psi.contact_tol())
        .collect();
    let mut iters = 0;
    let mut newton_ok = false;
    let mut best_res = f64::INFINITY;
    let mut stalled = 0;
    // whether the last step lowered Φ well above its rounding noise
    let mut descended = false;
    for _ in 0..MAX_NEWTON {
        let (f, _) = obj.forces(&w);
        let res = kkt_residual(metric, &f, &w, psi)?;
        if res <= inner_tol {
            newton_ok = true;
            break;
        }
        let hess = hessian(spec, &w);
        let floor = rounding_floor(metric, &hess, &w);
        let settled = res <= STALL_FACTOR * floor;
        if res <= 0.5 * best_res || descended {
            best_res = best_res.min(res);
            stalled = 0;
        } else {
            best_res = best_res.min(res);
            stalled += 1;
            if stalled >= STALL_ITERS {
                newton_ok = settled;
                break;
            }
        }
        iters += 1;
        let contact: Vec<bool> = w
            .interior()
            .iter()
            .zip(lower_abs)
            .map(|(a, l)| a - l <= psi.contact_tol())
            .collect();
        let j = shifted_hessian(metric, hess, tau, &contact)?;
        let lower: Vec<f64> = lower_abs.iter().zip(w.interior()).map(|(l, x)| l - x).collect();
        let b: Vec<f64> = f.iter().map(|x| -x).collect();
        let sol = solve_bound_qp(&j, &b, &lower, Some(&warm))?;
        warm = sol.active.clone();
        let d = sol.x;
        let slope: f64 = f.iter().zip(&d).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            newton_ok = settled;
            break;
        }
        let step_at = |alpha: f64| -> Result<GridFunction> {
            let trial: Vec<f64> = w
                .interior()
                .iter()
                .zip(&d)
                .zip(lower_abs)
                .enumerate()
                .map(|(i, ((x, di), l))| {
                    if alpha == 1.0 && sol.active[i] {
                        *l
                    } else {
                        (x + alpha * di).max(*l)
                    }
                })
                .collect();
            GridFunction::from_interior(grid, &trial)
        };
        let mut accepted = None;
        if -slope < PHI_NOISE * (1.0 + phi_w.abs()) {
            // Φ can no longer resolve the decrease: judge the full step by
            // the KKT residual instead.
            let trial = step_at(1.0)?;
            if let Ok(phi_t) = obj.phi(&trial) {
                let (ft, _) = obj.forces(&trial);
                if kkt_residual(metric, &ft, &trial, psi)? < res {
                    accepted = Some((trial, phi_t));
                }
            }
        } else {
            let mut alpha = 1.0;
            for _ in 0..40 {
                let trial = step_at(alpha)?;
                match obj.phi(&trial) {
                    Ok(phi_t) if phi_t <= phi_w + 1e-4 * alpha * slope => {
                        accepted = Some((trial, phi_t));
                        break;
                    }
                    Ok(_) | Err(Error::Overflow { .. }) => alpha *= 0.5,
                    Err(e) => return Err(e),
                }
            }
        }
        match accepted {
            Some((trial, phi_t)) => {
                descended = phi_w - phi_t > STALL_FACTOR * PHI_NOISE * (1.0 + phi_w.abs());
                w = trial;
                phi_w = phi_t;
            }
            None => {
                newton_ok = settled;
                break;
            }
        }
    }
    let mut solver = StepSolver::ActiveSetNewton;
    if !newton_ok {
        solver = StepSolver::ProjectedGradient;
        let (w_pg, it_pg, ok) = projected_gradient(&obj, psi, w, phi_w, inner_tol)?;
        iters += it_pg;
        w = w_pg;
        if !ok {
            let (f, _) = obj.forces(&w);
            let residual = kkt_residual(metric, &f, &w, psi)?;
            return Err(Error::StepFailure {
                residual,
                iterations: iters,
                best: Box::new(w),
            });
        }
    }
    let (f, _) = obj.forces(&w);
    let el_residual = kkt_residual(metric, &f, &w, psi)?;
    let multiplier = multipliers(&f, &w, psi);
    let energy_after = energy(spec, &w)?;
    Ok(StepReport {
        w,
        multiplier,
        el_residual,
        inner_iters: iters,
        energy_before,
        energy_after,
        solver,
    })
}

fn projected_gradient(
    obj: &Objective<'_>,
    psi: &Obstacle,
    mut w: GridFunction,
    mut phi_w: f64,
    inner_tol: f64,
) -> Result<(GridFunction, usize, bool)> {
    let metric = obj.metric;
    let mut alpha = obj.tau;
    for it in 1..=MAX_GRADIENT {
        let (f, _) = obj.forces(&w);
        let res = kkt_residual(metric, &f, &w, psi)?;
        if res <= inner_tol
            || res <= STALL_FACTOR * rounding_floor(metric, &hessian(obj.spec, &w), &w)
        {
            return Ok((w, it - 1, true));
        }
        let grad = metric.riesz(&f);
        let mut moved = false;
        for _ in 0..60 {
            let trial = project_c(metric, &w.axpy(-alpha, &grad)?, psi)?;
            let step = trial.sub(&w)?;
            let dist2 = h_inner(&step, &step)?;
            if dist2 == 0.0 {
                break;
            }
            if let Ok(phi_t) = obj.phi(&trial) {
                if phi_t <= phi_w - 1e-4 * dist2 / alpha {
                    w = trial;
                    phi_w = phi_t;
                    moved = true;
                    alpha *= 2.0;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !moved {
            return Ok((w, it, false));
        }
    }
    Ok((w, MAX_GRADIENT, false))
}

/// `min` over probes `u` of `(w − v, u − w)/τ + DE(w)(u − w)`.
pub fn el_certificate(
    spec: &EnergySpec,
    report: &StepReport,
    v: &GridFunction,
    tau: f64,
    psi: &Obstacle,
    probes: &[GridFunction],
) -> Result<f64> {
    let w = &report.w;
    let vel = w.sub(v)?.scale(1.0 / tau);
    pairing_min(spec, w, &vel, psi, probes)
}

/// `min` over probes of `(vel, u − w) + DE(w)(u − w)`.
pub(crate) fn pairing_min(
    spec: &EnergySpec,
    w: &GridFunction,
    vel: &GridFunction,
    psi: &Obstacle,
    probes: &[GridFunction],
) -> Result<f64> {
    let g = nodal_gradient(spec, w);
    let mut best = f64::INFINITY;
    for u in probes {
        if let Some((node, gap)) = first_violation(u, psi) {
            return Err(Error::Inadmissible { node, gap });
        }
        let d = u.sub(w)?;
        let val = h_inner(vel, &d)? + g.iter().zip(d.interior()).map(|(a, b)| a * b).sum::<f64>();
        best = best.min(val);
    }
    Ok(best)
}

fn diagnostics_row(
    spec: &EnergySpec,
    metric: &HMetric,
    psi: &Obstacle,
    k: usize,
    t: f64,
    u: &GridFunction,
    prev: Option<&GridFunction>,
    report: Option<&StepReport>,
) -> Result<StepDiagnostics> {
    let dual = nodal_gradient(spec, u);
    let slope = metric_slope_from_dual(metric, u, psi, &dual)?;
    let (navier0, navier1) = navier_check(u);
    Ok(StepDiagnostics {
        k,
        t,
        energy: energy(spec, u)?,
        step_norm: match prev {
            Some(p) => h_norm(&u.sub(p)?),
            None => 0.0,
        },
        el_residual: report.map_or(0.0, |r| r.el_residual),
        mu_mass: report.map_or(0.0, |r| r.multiplier.iter().sum()),
        slope,
        sup_du: first_diff_sup(u),
        sup_d3u: third_diff_sup(u),
        navier0,
        navier1,
        symmetry_err: symmetry_error(u),
    })
}

/// Runs the scheme until `kτ ≥ T` or `max_steps`.
pub fn run_flow(config: &FlowConfig, metric: &HMetric) -> Result<Trajectory> {
    config.validate()?;
    let FlowConfig {
        spec,
        obstacle: psi,
        tau,
        inner_tol,
        ..
    } = config;
    let (tau, inner_tol) = (*tau, *inner_tol);
    let mut traj = Trajectory {
        energy_kind: spec.kind(),
        obstacle: psi.clone(),
        tau,
        inner_tol,
        u0: config.u0.clone(),
        steps: Vec::new(),
        diagnostics: vec![diagnostics_row(spec, metric, psi, 0, 0.0, &config.u0, None, None)?],
    };
    for k in 1..=config.step_count() {
        let v = traj.iterate(k - 1).clone();
        let step = match mm_step(spec, metric, psi, &v, tau, inner_tol) {
            Ok(s) => s,
            Err(e) => {
                return Err(Error::FlowFailure {
                    step: k,
                    source: Box::new(e),
                    partial: Box::new(traj),
                })
            }
        };
        let row = diagnostics_row(spec, metric, psi, k, k as f64 * tau, &step.w, Some(&v), Some(&step))?;
        traj.steps.push(step);
        traj.diagnostics.push(row);
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpolationKind {
    Constant,
    Linear,
}

/// Piecewise-constant or piecewise-linear interpolation in time.
pub fn interpolate(traj: &Trajectory, t: f64, kind: InterpolationKind) -> Result<GridFunction> {
    let t_max = traj.final_time();
    if !(t >= 0.0 && t <= t_max * (1.0 + 1e-12)) {
        return Err(Error::Domain { what: "interpolation time", value: t });
    }
    let kmax = traj.len();
    let s = t / traj.tau;
    // k is the index with t in [(k-1)τ, kτ)
    let k = ((s.floor() as usize) + 1).min(kmax.max(1));
    if kmax == 0 {
        return Ok(traj.u0.clone());
    }
    if s >= kmax as f64 {
        return Ok(traj.iterate(kmax).clone());
    }
    let (a, b) = (traj.iterate(k - 1), traj.iterate(k));
    match kind {
        InterpolationKind::Constant => Ok(a.clone()),
        InterpolationKind::Linear => {
            let theta = (s - (k - 1) as f64).clamp(0.0, 1.0);
            if theta == 0.0 {
                return Ok(a.clone());
            }
            a.scale(1.0 - theta).axpy(theta, b)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub taus: Vec<f64>,
    /// `max_t ‖u^{τ_j}(t) − u^{τ_{j+1}}(t)‖` for consecutive pairs.
    pub differences: Vec<f64>,
}

/// Runs the flow for each τ and compares linear interpolants on
/// `samples + 1` equispaced times in `[0, T]`.
pub fn refine_tau_compare(
    config: &FlowConfig,
    metric: &HMetric,
    taus: &[f64],
    samples: usize,
) -> Result<RefinementReport> {
    for w in taus.windows(2) {
        if !(w[1] <= w[0]) {
            return Err(Error::InvalidParameter("tau list must be nonincreasing".into()));
        }
    }
    for &tau in taus {
        let r = config.horizon / tau;
        if (r - r.round()).abs() > 1e-9 * r.max(1.0) {
            return Err(Error::InvalidParameter(format!("tau {tau} does not divide T")));
        }
    }
    let mut trajs = Vec::with_capacity(taus.len());
    for &tau in taus {
        let mut c = config.clone();
        c.tau = tau;
        trajs.push(run_flow(&c, metric)?);
    }
    let mut differences = Vec::new();
    for pair in trajs.windows(2) {
        let mut worst: f64 = 0.0;
        let t_end = pair[0].final_time().min(pair[1].final_time());
        for j in 0..=samples {
            let t = t_end * j as f64 / samples.max(1) as f64;
            let a = interpolate(&pair[0], t, InterpolationKind::Linear)?;
            let b = interpolate(&pair[1], t, InterpolationKind::Linear)?;
            worst = worst.max(h_norm(&a.sub(&b)?));
        }
        differences.push(worst);
    }
    Ok(RefinementReport {
        taus: taus.to_vec(),
        differences,
    })
}

/// Whether `u` is admissible with `|D²u|` at nodes `1` and `n − 1` at most
/// `bc_tol`.
pub fn navier_compliant(u: &GridFunction, psi: &Obstacle, bc_tol: f64) -> Result<bool> {
    let q = second_diff(u);
    Ok(admissible(u, psi)? && q[0].abs() <= bc_tol && q[q.len() - 1].abs() <= bc_tol)
}
