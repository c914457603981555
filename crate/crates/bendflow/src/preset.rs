//! Ready-made experiments: a small-energy run above a low obstacle, a run
//! against a steep cone, and an unconstrained relaxation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{symmetry_error, VerdictTag};
use crate::elastica::{self, g, g_inv, U0};
use crate::energy::{energy, EnergySpec};
use crate::error::{Error, Result};
use crate::grid::{second_diff, Grid, GridFunction};
use crate::mms::FlowConfig;
use crate::obstacle::{first_violation, Obstacle, ObstacleKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetName {
    Subconverge,
    Blowup,
    Unconstrained,
    Custom,
}

impl PresetName {
    pub const BUILTIN: [PresetName; 3] = [PresetName::Subconverge, PresetName::Blowup, PresetName::Unconstrained];

    /// Default `(τ, T)`: long enough for the verdict to settle at `n = 256`.
    /// The steep run needs a large horizon because the derivative grows
    /// slowly once the curve rests on the cone.
    pub fn default_schedule(&self) -> (f64, f64) {
        match self {
            PresetName::Subconverge => (0.01, 20.0),
            PresetName::Blowup => (1.0, 2e4),
            PresetName::Unconstrained => (0.01, 8.0),
            PresetName::Custom => (0.01, 1.0),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PresetName::Subconverge => "subconverge",
            PresetName::Blowup => "blowup",
            PresetName::Unconstrained => "unconstrained",
            PresetName::Custom => "custom",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subconverge" => Ok(PresetName::Subconverge),
            "blowup" => Ok(PresetName::Blowup),
            "unconstrained" => Ok(PresetName::Unconstrained),
            "custom" => Ok(PresetName::Custom),
            other => Err(Error::InvalidParameter(format!("unknown preset '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentPreset {
    pub name: PresetName,
    pub config: FlowConfig,
    pub expected: Option<VerdictTag>,
}

/// Cone obstacle of the small-energy preset: slope 1, offset 1/4.
pub const SUBCONVERGE_CONE: (f64, f64) = (1.0, 0.25);
/// Parameter of the critical profile the small-energy datum is built from.
pub const SUBCONVERGE_C: f64 = 2.0;
/// Width of the end zones where the curvature of the datum is cut off.
pub const SUBCONVERGE_CUTOFF: f64 = 0.05;

/// Cone offset and slope factor over the threshold for the steep preset.
pub const BLOWUP_OFFSET: f64 = 0.25;
pub const BLOWUP_FACTOR: f64 = 1.05;
/// Steep-flank datum: flank slope `m`, flat-`G` zone `a`, smoothing `eps`.
pub const BLOWUP_FLANK: (f64, f64, f64) = (5.0, 0.13, 0.03);

pub const UNCONSTRAINED_LEVEL: f64 = -1e6;
pub const UNCONSTRAINED_AMPLITUDE: f64 = 0.3;

fn preset_err(name: PresetName, reason: impl Into<String>) -> Error {
    Error::Preset {
        name: name.to_string(),
        reason: reason.into(),
    }
}

pub fn build_preset(name: PresetName, n: usize, tau: f64, horizon: f64) -> Result<ExperimentPreset> {
    if !(tau > 0.0 && horizon > 0.0) {
        return Err(preset_err(name, "tau and T must be positive"));
    }
    let grid = Grid::new(n)?;
    let spec = EnergySpec::elastic();
    let (obstacle, u0, expected) = match name {
        PresetName::Subconverge => {
            let (a_slope, a_off) = SUBCONVERGE_CONE;
            let psi = Obstacle::cone(grid, a_slope, a_off)?;
            let u0 = small_energy_datum(grid, SUBCONVERGE_C, SUBCONVERGE_CUTOFF)?;
            (psi, u0, Some(VerdictTag::SubconvergentCandidate))
        }
        PresetName::Blowup => {
            let slope = BLOWUP_FACTOR * elastica::blowup_threshold();
            let psi = Obstacle::cone(grid, slope, BLOWUP_OFFSET)?;
            let (m, a, eps) = BLOWUP_FLANK;
            let u0 = steep_flank_datum(grid, m, a, eps)?;
            (psi, u0, Some(VerdictTag::VerticalBlowupCandidate))
        }
        PresetName::Unconstrained => {
            let psi = Obstacle::constant(grid, UNCONSTRAINED_LEVEL)?;
            let u0 = GridFunction::from_fn(grid, |x| UNCONSTRAINED_AMPLITUDE * (std::f64::consts::PI * x).sin())?;
            (psi, u0, Some(VerdictTag::SubconvergentCandidate))
        }
        PresetName::Custom => return Err(preset_err(name, "custom presets come from a config file")),
    };
    let config = FlowConfig::new(spec, obstacle, u0, tau, horizon);
    let preset = ExperimentPreset { name, config, expected };
    validate_preset(&preset)?;
    Ok(preset)
}

/// Re-checks the hypotheses a preset is meant to satisfy.
pub fn validate_preset(preset: &ExperimentPreset) -> Result<()> {
    let name = preset.name;
    let cfg = &preset.config;
    cfg.validate().map_err(|e| preset_err(name, format!("{e}")))?;
    let grid = cfg.u0.grid();
    let e0 = energy(&cfg.spec, &cfg.u0)?;
    let k = elastica::constants();
    match name {
        PresetName::Subconverge => {
            if symmetry_error(&cfg.u0) > 0.0 {
                return Err(preset_err(name, "initial datum is not symmetric"));
            }
            if !(e0 < k.c0 * k.c0) {
                return Err(preset_err(name, format!("E(u0) = {e0} is not below c0^2 = {}", k.c0 * k.c0)));
            }
            let psi = cfg.obstacle.samples();
            let nn = psi.len() - 1;
            if (0..=nn).any(|i| psi[i] != psi[nn - i]) {
                return Err(preset_err(name, "obstacle is not symmetric"));
            }
            if let Some(i) = (0..=nn).find(|&i| !(psi[i] < U0(grid.node(i)))) {
                return Err(preset_err(name, format!("obstacle reaches U0 at x = {}", grid.node(i))));
            }
        }
        PresetName::Blowup => {
            if symmetry_error(&cfg.u0) > 0.0 {
                return Err(preset_err(name, "initial datum is not symmetric"));
            }
            let bound = 4.0 * k.c0 * k.c0 / 3.0;
            if !(e0 < bound) {
                return Err(preset_err(name, format!("E(u0) = {e0} is not below 4c0^2/3 = {bound}")));
            }
            match cfg.obstacle.kind() {
                ObstacleKind::Cone { slope, offset } if offset == BLOWUP_OFFSET && slope > k.threshold => {}
                _ => return Err(preset_err(name, "obstacle must be a cone with offset 1/4 above the threshold")),
            }
        }
        PresetName::Unconstrained => {
            if cfg.obstacle.samples().iter().any(|&p| p > -1e5) {
                return Err(preset_err(name, "obstacle is not far below the datum"));
            }
        }
        PresetName::Custom => {}
    }
    if let Some((node, gap)) = first_violation(&cfg.u0, &cfg.obstacle) {
        return Err(preset_err(name, format!("initial datum violates the obstacle at node {node} by {gap:e}")));
    }
    Ok(())
}

/// Smooth cutoff: 0 on `[0, w]`, 1 on `[2w, 1 − 2w]`, quintic in between.
fn end_cutoff(x: f64, w: f64) -> f64 {
    let t = ((x.min(1.0 - x) - w) / w).clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// Solves `D²v = f` on interior nodes with zero ends (Thomas algorithm).
fn integrate_twice(grid: Grid, f: &[f64]) -> Result<GridFunction> {
    let m = f.len();
    let h2 = grid.h() * grid.h();
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    for i in 0..m {
        let denom = -2.0 - if i > 0 { c[i - 1] } else { 0.0 };
        c[i] = 1.0 / denom;
        d[i] = (f[i] * h2 - if i > 0 { d[i - 1] } else { 0.0 }) / denom;
    }
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        x[i] = d[i] - if i + 1 < m { c[i] * x[i + 1] } else { 0.0 };
    }
    let mut u = GridFunction::from_interior(grid, &x)?.into_values();
    symmetrize(&mut u);
    GridFunction::new(grid, u)
}

fn symmetrize(v: &mut [f64]) {
    let n = v.len() - 1;
    for i in 0..=n / 2 {
        let s = 0.5 * (v[i] + v[n - i]);
        v[i] = s;
        v[n - i] = s;
    }
}

/// Critical profile `u_c` with its curvature switched off near both ends,
/// so the datum has zero end curvature and slightly less energy.
pub fn small_energy_datum(grid: Grid, c: f64, cutoff_width: f64) -> Result<GridFunction> {
    let uc = GridFunction::from_fn(grid, |x| elastica::u_c(c, x).unwrap_or(0.0))?;
    let q = second_diff(&uc);
    let f: Vec<f64> = q
        .iter()
        .enumerate()
        .map(|(i, qi)| qi * end_cutoff(grid.node(i + 1), cutoff_width))
        .collect();
    integrate_twice(grid, &f)
}

/// Symmetric profile whose `G(u′)` equals `G(m)` on `[0, a]`, falls linearly
/// to `−G(m)` on `[a, 1 − a]` with corners rounded over width `2·eps`, and
/// mirrors. Its energy is close to `4 G(m)² / (1 − 2a)`.
pub fn steep_flank_datum(grid: Grid, m: f64, a: f64, eps: f64) -> Result<GridFunction> {
    if !(m > 0.0 && a > eps && eps > 0.0 && a + eps < 0.5) {
        return Err(Error::InvalidParameter(format!("bad flank parameters ({m}, {a}, {eps})")));
    }
    let gm = g(m);
    let len = 1.0 - 2.0 * a;
    // ramp(x): 0 → 1, the linear ramp on [a, 1 − a] convolved with a box of half-width eps
    let ramp = |x: f64| -> f64 {
        let s = x - a;
        if s <= -eps {
            0.0
        } else if s < eps {
            (s + eps) * (s + eps) / (4.0 * eps * len)
        } else if x < 1.0 - a - eps {
            s / len
        } else if x < 1.0 - a + eps {
            let r = 1.0 - a + eps - x;
            1.0 - r * r / (4.0 * eps * len)
        } else {
            1.0
        }
    };
    let h = grid.h();
    let n = grid.n();
    let slopes: Vec<f64> = (0..n)
        .map(|i| {
            let x = (i as f64 + 0.5) * h;
            g_inv(gm * (1.0 - 2.0 * ramp(x)))
        })
        .collect::<Result<_>>()?;
    let mut v = vec![0.0; n + 1];
    for i in 0..n {
        v[i + 1] = v[i] + h * slopes[i];
    }
    // remove the linear drift left by rounding, then enforce symmetry
    let drift = v[n];
    for (i, vi) in v.iter_mut().enumerate() {
        *vi -= drift * i as f64 / n as f64;
    }
    v[n] = 0.0;
    symmetrize(&mut v);
    v[0] = 0.0;
    v[n] = 0.0;
    GridFunction::new(grid, v)
}
