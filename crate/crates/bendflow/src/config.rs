//! Run configuration in TOML with sections `grid`, `energy`, `obstacle`,
//! `initial`, `flow` and `diagnostics`.
//!
//! ```toml
//! [grid]
//! n = 128
//!
//! [energy]
//! kind = "elastic"
//!
//! [obstacle]
//! type = "cone"
//! slope = 1.0
//! offset = 0.25
//!
//! [initial]
//! type = "sine"
//! amplitude = 0.3
//!
//! [flow]
//! tau = 0.01
//! T = 1.0
//!
//! [diagnostics]
//! seed = 7
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::CheckOptions;
use crate::energy::{EnergyKind, EnergySpec};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::mms::FlowConfig;
use crate::obstacle::Obstacle;
use crate::preset::{small_energy_datum, steep_flank_datum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    #[serde(default)]
    pub energy: EnergySection,
    pub obstacle: ObstacleSection,
    pub initial: InitialSection,
    pub flow: FlowSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySection {
    pub kind: EnergyKind,
}

impl Default for EnergySection {
    fn default() -> Self {
        Self { kind: EnergyKind::Elastic }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ObstacleSection {
    Cone { slope: f64, offset: f64 },
    Constant { level: f64 },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSection {
    /// `amplitude · sin(πx)`.
    Sine { amplitude: f64 },
    /// `amplitude · x(1 − x)`.
    Parabola { amplitude: f64 },
    /// Critical profile `u_c` with curvature cut off near the ends.
    SmallEnergy { c: f64, cutoff: f64 },
    /// Symmetric profile with steep flanks.
    SteepFlank { slope: f64, flat: f64, smoothing: f64 },
    /// Two-column `(x, u)` table, resampled linearly.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub tau: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default = "default_inner_tol")]
    pub inner_tol: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_inner_tol() -> f64 {
    1e-10
}

fn default_max_steps() -> usize {
    1_000_000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub seed: u64,
    pub probes: usize,
    pub probe_steps: usize,
    pub holder_pairs: usize,
    pub hpr_pairs: usize,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        let o = CheckOptions::default();
        Self {
            seed: o.seed,
            probes: o.probes,
            probe_steps: o.probe_steps,
            holder_pairs: o.holder_pairs,
            hpr_pairs: o.hpr_pairs,
        }
    }
}

impl From<DiagnosticsSection> for CheckOptions {
    fn from(d: DiagnosticsSection) -> Self {
        CheckOptions {
            seed: d.seed,
            probes: d.probes,
            probe_steps: d.probe_steps,
            holder_pairs: d.holder_pairs,
            hpr_pairs: d.hpr_pairs,
        }
    }
}

/// Line (1-based) containing byte offset `pos`.
fn line_of(text: &str, pos: usize) -> u64 {
    text[..pos.min(text.len())].bytes().filter(|&b| b == b'\n').count() as u64 + 1
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
            msg: e.message().to_string(),
        })
    }

    /// Reads the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        if let ObstacleSection::File { path } = &mut self.obstacle {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        if let InitialSection::File { path } = &mut self.initial {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable")
    }

    pub fn check_options(&self) -> CheckOptions {
        self.diagnostics.into()
    }

    /// Builds the flow configuration; validation runs as in [`FlowConfig::validate`].
    pub fn resolve(&self) -> Result<FlowConfig> {
        let grid = Grid::new(self.grid.n)?;
        let spec = EnergySpec::from_kind(self.energy.kind)?;
        let obstacle = match &self.obstacle {
            ObstacleSection::Cone { slope, offset } => Obstacle::cone(grid, *slope, *offset)?,
            ObstacleSection::Constant { level } => Obstacle::constant(grid, *level)?,
            ObstacleSection::File { path } => Obstacle::from_file(grid, path)?,
        };
        let u0 = match &self.initial {
            InitialSection::Sine { amplitude } => {
                GridFunction::from_fn(grid, |x| amplitude * (std::f64::consts::PI * x).sin())?
            }
            InitialSection::Parabola { amplitude } => GridFunction::from_fn(grid, |x| amplitude * x * (1.0 - x))?,
            InitialSection::SmallEnergy { c, cutoff } => small_energy_datum(grid, *c, *cutoff)?,
            InitialSection::SteepFlank { slope, flat, smoothing } => steep_flank_datum(grid, *slope, *flat, *smoothing)?,
            InitialSection::File { path } => read_profile(grid, path)?,
        };
        let mut cfg = FlowConfig::new(spec, obstacle, u0, self.flow.tau, self.flow.horizon);
        cfg.inner_tol = self.flow.inner_tol;
        cfg.max_steps = self.flow.max_steps;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Reads an `(x, u)` table with the same rules as obstacle files and
/// forces exact zeros at the ends.
fn read_profile(grid: Grid, path: &Path) -> Result<GridFunction> {
    let table = Obstacle::read_table(path)?;
    let mut v: Vec<f64> = grid.nodes().map(|x| crate::obstacle::interp(&table, x)).collect();
    let n = grid.n();
    if v[0].abs() > 1e-12 || v[n].abs() > 1e-12 {
        return Err(Error::BoundaryNonzero { left: v[0], right: v[n] });
    }
    v[0] = 0.0;
    v[n] = 0.0;
    GridFunction::new(grid, v)
}
