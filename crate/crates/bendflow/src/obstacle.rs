//! The admissible set `C = {u ≥ ψ}`, its H-projection, and the metric slope.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy::{nodal_gradient, EnergySpec};
use crate::error::{Error, Result};
use crate::grid::{h_inner, Grid, GridFunction, HMetric};
use crate::qp::{kkt_residual, solve_bound_qp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ObstacleKind {
    /// `A(x − a)` on `[0, ½]`, mirrored on `[½, 1]`.
    Cone { slope: f64, offset: f64 },
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawObstacle")]
pub struct Obstacle {
    grid: Grid,
    samples: Vec<f64>,
    kind: ObstacleKind,
}

#[derive(Deserialize)]
struct RawObstacle {
    grid: Grid,
    samples: Vec<f64>,
    kind: ObstacleKind,
}

impl TryFrom<RawObstacle> for Obstacle {
    type Error = Error;

    fn try_from(raw: RawObstacle) -> Result<Self> {
        Obstacle::build(raw.grid, raw.samples, raw.kind)
    }
}

impl Obstacle {
    pub fn tabulated(grid: Grid, samples: Vec<f64>) -> Result<Self> {
        Self::build(grid, samples, ObstacleKind::Tabulated)
    }

    pub fn constant(grid: Grid, level: f64) -> Result<Self> {
        Self::tabulated(grid, vec![level; grid.n() + 1])
    }

    pub fn cone(grid: Grid, slope: f64, offset: f64) -> Result<Self> {
        if !(slope > 0.0) || !(offset > 0.0 && offset < 0.5) {
            return Err(Error::InvalidObstacle(format!(
                "cone needs slope > 0 and offset in (0, 1/2), got ({slope}, {offset})"
            )));
        }
        let samples = (0..=grid.n())
            .map(|i| {
                let x = grid.node(i);
                if x <= 0.5 {
                    slope * (x - offset)
                } else {
                    slope * (1.0 - x - offset)
                }
            })
            .collect();
        Self::build(grid, samples, ObstacleKind::Cone { slope, offset })
    }

    fn build(grid: Grid, samples: Vec<f64>, kind: ObstacleKind) -> Result<Self> {
        if samples.len() != grid.n() + 1 {
            return Err(Error::LengthMismatch {
                expected: grid.n() + 1,
                found: samples.len(),
            });
        }
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let (l, r) = (samples[0], samples[grid.n()]);
        if !(l < 0.0 && r < 0.0) {
            return Err(Error::InvalidObstacle(format!(
                "end values must be negative, got ({l}, {r})"
            )));
        }
        Ok(Self { grid, samples, kind })
    }

    /// Two-column text `(x, ψ(x))`, sorted by `x`, covering `[0, 1]`;
    /// blank lines and `#` comments are skipped. Resampled linearly.
    pub fn from_file(grid: Grid, path: &Path) -> Result<Self> {
        let pts = Self::read_table(path)?;
        let samples = grid.nodes().map(|x| interp(&pts, x)).collect();
        Self::tabulated(grid, samples)
    }

    /// Reads a two-column table with increasing `x` covering `[0, 1]`.
    pub fn read_table(path: &Path) -> Result<Vec<(f64, f64)>> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut pts: Vec<(f64, f64)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: lineno as u64 + 1,
                msg,
            };
            let cols: Vec<&str> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .collect();
            if cols.len() != 2 {
                return Err(parse_err(format!("expected 2 columns, found {}", cols.len())));
            }
            let x: f64 = cols[0].parse().map_err(|e| parse_err(format!("{e}")))?;
            let y: f64 = cols[1].parse().map_err(|e| parse_err(format!("{e}")))?;
            if let Some(&(px, _)) = pts.last() {
                if !(x > px) {
                    return Err(parse_err("x values must increase".into()));
                }
            }
            pts.push((x, y));
        }
        if pts.len() < 2 || pts[0].0 > 0.0 || pts[pts.len() - 1].0 < 1.0 {
            return Err(Error::InvalidObstacle(format!(
                "{}: table must cover [0, 1]",
                path.display()
            )));
        }
        Ok(pts)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn interior(&self) -> &[f64] {
        &self.samples[1..self.grid.n()]
    }

    pub fn kind(&self) -> ObstacleKind {
        self.kind
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `10⁻⁸ (1 + ‖ψ‖_∞)`.
    pub fn contact_tol(&self) -> f64 {
        1e-8 * (1.0 + self.sup_norm())
    }

    fn check(&self, u: &GridFunction) -> Result<()> {
        if u.grid() != self.grid {
            return Err(Error::GridMismatch {
                left: u.grid().n(),
                right: self.grid.n(),
            });
        }
        Ok(())
    }
}

/// Piecewise-linear interpolation in a table sorted by `x`.
pub fn interp(pts: &[(f64, f64)], x: f64) -> f64 {
    let k = pts.partition_point(|p| p.0 <= x).clamp(1, pts.len() - 1);
    let (x0, y0) = pts[k - 1];
    let (x1, y1) = pts[k];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Nodes in contact with the obstacle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveSet {
    pub indices: Vec<usize>,
}

impl ActiveSet {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

pub fn admissible(u: &GridFunction, psi: &Obstacle) -> Result<bool> {
    psi.check(u)?;
    Ok(u.values()
        .iter()
        .zip(&psi.samples)
        .all(|(a, b)| *a >= b - 1e-12))
}

/// First node violating the obstacle, if any.
pub fn first_violation(u: &GridFunction, psi: &Obstacle) -> Option<(usize, f64)> {
    u.values()
        .iter()
        .zip(&psi.samples)
        .enumerate()
        .find(|(_, (a, b))| **a < **b - 1e-12)
        .map(|(i, (a, b))| (i, b - a))
}

pub fn active_set(u: &GridFunction, psi: &Obstacle) -> Result<ActiveSet> {
    psi.check(u)?;
    let tol = psi.contact_tol();
    let indices = (1..psi.grid.n())
        .filter(|&i| u.values()[i] - psi.samples[i] <= tol)
        .collect();
    Ok(ActiveSet { indices })
}

/// Correction `d = π_C(v) − v`, found as the minimizer of `‖d‖_H` over
/// `d ≥ ψ − v`. Solving for the correction rather than the projected point
/// keeps its error relative to `d`, so an admissible `v` gives `d = 0`.
fn projection_step(metric: &HMetric, v: &GridFunction, psi: &Obstacle) -> Result<Vec<f64>> {
    psi.check(v)?;
    let lower: Vec<f64> = psi
        .interior()
        .iter()
        .zip(v.interior())
        .map(|(l, x)| l - x)
        .collect();
    if lower.iter().all(|&l| l <= 0.0) {
        return Ok(vec![0.0; lower.len()]);
    }
    let warm: Vec<bool> = lower.iter().map(|&l| l > 0.0).collect();
    let zero = vec![0.0; lower.len()];
    let sol = solve_bound_qp(metric.gram(), &zero, &lower, Some(&warm))?;
    Ok(sol.x.iter().zip(&lower).map(|(d, l)| d.max(*l)).collect())
}

/// Projection with its relative KKT residual.
pub fn project_c_report(
    metric: &HMetric,
    v: &GridFunction,
    psi: &Obstacle,
) -> Result<(GridFunction, f64)> {
    let d = projection_step(metric, v, psi)?;
    let lower = psi.interior();
    let x: Vec<f64> = v
        .interior()
        .iter()
        .zip(&d)
        .zip(lower)
        .map(|((x, d), l)| (x + d).max(*l))
        .collect();
    let b = metric.apply(v.interior());
    let res = kkt_residual(metric.gram(), &b, lower, &x);
    Ok((GridFunction::from_interior(metric.grid(), &x)?, res))
}

/// Nearest point of `C` to `v` in the H norm.
pub fn project_c(metric: &HMetric, v: &GridFunction, psi: &Obstacle) -> Result<GridFunction> {
    project_c_report(metric, v, psi).map(|(u, _)| u)
}

/// Projection residual `v − π_C(v)`.
pub fn projection_residual(metric: &HMetric, v: &GridFunction, psi: &Obstacle) -> Result<GridFunction> {
    let d = projection_step(metric, v, psi)?;
    let r: Vec<f64> = d.iter().map(|d| -d).collect();
    GridFunction::from_interior(metric.grid(), &r)
}

/// `(w1 − π(w1), w2 − π(w2))_H`.
pub fn hpr_pairing(
    metric: &HMetric,
    w1: &GridFunction,
    w2: &GridFunction,
    psi: &Obstacle,
) -> Result<f64> {
    let r1 = projection_residual(metric, w1, psi)?;
    let r2 = projection_residual(metric, w2, psi)?;
    h_inner(&r1, &r2)
}

/// H-norm of the projection of `−∇E(u)` onto the tangent cone of `C` at `u`.
pub fn metric_slope(
    spec: &EnergySpec,
    metric: &HMetric,
    u: &GridFunction,
    psi: &Obstacle,
) -> Result<f64> {
    let dual = nodal_gradient(spec, u);
    metric_slope_from_dual(metric, u, psi, &dual)
}

pub(crate) fn metric_slope_from_dual(
    metric: &HMetric,
    u: &GridFunction,
    psi: &Obstacle,
    dual: &[f64],
) -> Result<f64> {
    let act = active_set(u, psi)?;
    if act.is_empty() {
        return Ok(metric.dual_norm(dual));
    }
    let m = metric.grid().interior_len();
    let mut lower = vec![f64::NEG_INFINITY; m];
    for &i in &act.indices {
        lower[i - 1] = 0.0;
    }
    let b: Vec<f64> = dual.iter().map(|g| -g).collect();
    let sol = solve_bound_qp(metric.gram(), &b, &lower, None)?;
    Ok(metric.gram().quad_form(&sol.x).max(0.0).sqrt())
}
