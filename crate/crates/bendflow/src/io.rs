//! Trajectory and report persistence.
//!
//! JSON carries the full trajectory (obstacle, iterates, multipliers and the
//! per-step diagnostics) and reads back bit for bit. CSV carries one row of
//! per-step diagnostics, with the header
//! `k,t,energy,step_norm,el_residual,mu_mass,slope,sup_du,sup_d3u,navier0,navier1,symmetry_err`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticReport;
use crate::error::{Error, Result};
use crate::mms::{StepDiagnostics, Trajectory};
use crate::obstacle::first_violation;

pub const TRAJECTORY_COLUMNS: [&str; 12] = [
    "k",
    "t",
    "energy",
    "step_norm",
    "el_residual",
    "mu_mass",
    "slope",
    "sup_du",
    "sup_d3u",
    "navier0",
    "navier1",
    "symmetry_err",
];

pub const TIMESERIES_COLUMNS: [&str; 9] = [
    "t",
    "energy",
    "slope",
    "first_diff_sup",
    "third_diff_sup",
    "mu_mass",
    "navier0",
    "navier1",
    "symmetry_err",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    pub fn extension(&self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(Error::InvalidParameter(format!("unknown format '{other}'"))),
        }
    }
}

/// What a trajectory file held.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredTrajectory {
    Full(Trajectory),
    Table(Vec<StepDiagnostics>),
}

impl StoredTrajectory {
    pub fn diagnostics(&self) -> &[StepDiagnostics] {
        match self {
            StoredTrajectory::Full(t) => &t.diagnostics,
            StoredTrajectory::Table(rows) => rows,
        }
    }

    pub fn into_full(self, path: &Path) -> Result<Trajectory> {
        match self {
            StoredTrajectory::Full(t) => Ok(t),
            StoredTrajectory::Table(_) => Err(Error::Config(format!(
                "{}: a CSV table has no iterates; store the trajectory as JSON",
                path.display()
            ))),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn json_err(path: &Path, e: serde_json::Error) -> Error {
    if e.is_io() {
        return Error::Io {
            path: path.to_path_buf(),
            source: e.into(),
        };
    }
    Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        msg: e.to_string(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("{kind:?}"),
        },
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer(&mut w, value).map_err(|e| json_err(path, e))?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| json_err(path, e))
}

pub fn write_trajectory(traj: &Trajectory, path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Json => write_json(traj, path),
        Format::Csv => write_rows(&traj.diagnostics, path),
    }
}

fn write_rows(rows: &[StepDiagnostics], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    if rows.is_empty() {
        w.write_record(TRAJECTORY_COLUMNS).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads either format; JSON is recognized by a leading `{`.
pub fn read_trajectory(path: &Path) -> Result<StoredTrajectory> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    if text.trim_start().starts_with('{') {
        let traj: Trajectory = serde_json::from_str(&text).map_err(|e| json_err(path, e))?;
        check_loaded(&traj).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(StoredTrajectory::Full(traj))
    } else {
        read_rows(&text, path).map(StoredTrajectory::Table)
    }
}

/// Consistency of a trajectory read from disk: one grid throughout,
/// admissible iterates, one diagnostics row per iterate.
fn check_loaded(traj: &Trajectory) -> Result<()> {
    let grid = traj.obstacle.grid();
    if !(traj.tau > 0.0 && traj.inner_tol > 0.0) {
        return Err(Error::InvalidParameter("tau and inner_tol must be positive".into()));
    }
    if traj.diagnostics.len() != traj.steps.len() + 1 {
        return Err(Error::LengthMismatch {
            expected: traj.steps.len() + 1,
            found: traj.diagnostics.len(),
        });
    }
    for k in 0..=traj.len() {
        let u = traj.iterate(k);
        if u.grid() != grid {
            return Err(Error::GridMismatch {
                left: u.grid().n(),
                right: grid.n(),
            });
        }
        if let Some((node, gap)) = first_violation(u, &traj.obstacle) {
            return Err(Error::Inadmissible { node, gap });
        }
    }
    Ok(())
}

fn read_rows(text: &str, path: &Path) -> Result<Vec<StepDiagnostics>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| csv_err(path, e))?;
    if header.iter().ne(TRAJECTORY_COLUMNS) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("expected header {}", TRAJECTORY_COLUMNS.join(",")),
        });
    }
    r.deserialize()
        .map(|row| row.map_err(|e| csv_err(path, e)))
        .collect()
}

pub fn write_report(report: &DiagnosticReport, path: &Path) -> Result<()> {
    write_json(report, path)
}

pub fn read_report(path: &Path) -> Result<DiagnosticReport> {
    read_json(path)
}

/// Time series for plotting.
pub fn write_timeseries(rows: &[StepDiagnostics], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(TIMESERIES_COLUMNS).map_err(|e| csv_err(path, e))?;
    for d in rows {
        let fields = [d.t, d.energy, d.slope, d.sup_du, d.sup_d3u, d.mu_mass, d.navier0, d.navier1, d.symmetry_err];
        w.write_record(fields.iter().map(|v| v.to_string()))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}
