//! `bendflow` command-line front end.
//!
//! Exit codes: 0 when every check passed, 2 when a check failed, 1 on
//! errors, 64 on unusable arguments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use bendflow::config::{ObstacleSection, RunConfig};
use bendflow::diagnostics::{run_checks, CheckOptions, DiagnosticReport, VerdictTag};
use bendflow::elastica::{self, g, g_inv, U0};
use bendflow::energy::EnergySpec;
use bendflow::grid::{Grid, HMetric};
use bendflow::io::{read_trajectory, write_report, write_timeseries, write_trajectory, Format};
use bendflow::mms::{run_flow, FlowConfig, Trajectory};
use bendflow::obstacle::Obstacle;
use bendflow::preset::{build_preset, validate_preset, ExperimentPreset, PresetName};
use bendflow::Error;

const EXIT_FAILED_CHECKS: u8 = 2;
const EXIT_ERROR: u8 = 1;
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "bendflow", version, about = "Obstacle-constrained elastic gradient flows of graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the flow described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Re-run the diagnostics on a stored JSON trajectory.
    Analyze {
        trajectory: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the elastica constants as JSON.
    Elastica {
        /// Also print tables of G, its inverse and U0.
        #[arg(long)]
        table: bool,
    },
    /// Build and run a named experiment.
    Preset {
        #[arg(long, required_unless_present = "sweep")]
        name: Option<PresetName>,
        /// Run every built-in preset concurrently, each into its own directory.
        #[arg(long, conflicts_with = "name")]
        sweep: bool,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    /// `cone:A,a` or `file:PATH`.
    #[arg(long)]
    obstacle: Option<ObstacleArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; nothing is written without it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    format: Format,
}

#[derive(Debug, Clone)]
enum ObstacleArg {
    Cone { slope: f64, offset: f64 },
    File(PathBuf),
}

impl std::str::FromStr for ObstacleArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if let Some(rest) = s.strip_prefix("cone:") {
            let (a, b) = rest.split_once(',').ok_or("expected cone:A,a")?;
            let slope = a.trim().parse().map_err(|e| format!("cone slope: {e}"))?;
            let offset = b.trim().parse().map_err(|e| format!("cone offset: {e}"))?;
            Ok(ObstacleArg::Cone { slope, offset })
        } else if let Some(path) = s.strip_prefix("file:") {
            Ok(ObstacleArg::File(PathBuf::from(path)))
        } else {
            Err("expected cone:A,a or file:PATH".into())
        }
    }
}

impl ObstacleArg {
    fn build(&self, grid: Grid) -> bendflow::Result<Obstacle> {
        match self {
            ObstacleArg::Cone { slope, offset } => Obstacle::cone(grid, *slope, *offset),
            ObstacleArg::File(path) => Obstacle::from_file(grid, path),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILED_CHECKS),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

/// `Ok(true)` when every check passed.
fn dispatch(command: Command) -> bendflow::Result<bool> {
    match command {
        Command::Run { config, common } => {
            let cfg = RunConfig::load(&config)?;
            let mut opts = cfg.check_options();
            if let Some(seed) = common.seed {
                opts.seed = seed;
            }
            let flow = apply_overrides(&cfg, &common)?;
            let outcome = execute("run", &flow, &opts, None, &common)?;
            Ok(outcome.passed)
        }
        Command::Analyze { trajectory, seed, out } => {
            let traj = read_trajectory(&trajectory)?.into_full(&trajectory)?;
            let spec = EnergySpec::from_kind(traj.energy_kind)?;
            let metric = HMetric::new(traj.u0.grid());
            let mut opts = CheckOptions::default();
            if let Some(seed) = seed {
                opts.seed = seed;
            }
            let report = run_checks(&spec, &metric, &traj, &opts)?;
            print_report("analyze", &traj, &report, None);
            if let Some(dir) = out {
                create_dir(&dir)?;
                write_report(&report, &dir.join("diagnostics.json"))?;
            }
            Ok(report.all_passed())
        }
        Command::Elastica { table } => {
            let json = elastica_json(table)?;
            println!("{}", serde_json::to_string_pretty(&json).expect("plain data"));
            Ok(true)
        }
        Command::Preset { name, sweep, common } => {
            if sweep {
                return run_sweep(&common);
            }
            let name = name.expect("clap requires --name without --sweep");
            let preset = resolve_preset(name, &common)?;
            let opts = seeded(&common);
            let outcome = execute(name.as_str(), &preset.config, &opts, preset.expected, &common)?;
            Ok(outcome.passed)
        }
    }
}

fn seeded(common: &Common) -> CheckOptions {
    let mut opts = CheckOptions::default();
    if let Some(seed) = common.seed {
        opts.seed = seed;
    }
    opts
}

fn apply_overrides(cfg: &RunConfig, common: &Common) -> bendflow::Result<FlowConfig> {
    let mut cfg = cfg.clone();
    if let Some(n) = common.n {
        cfg.grid.n = n;
    }
    if let Some(tau) = common.tau {
        cfg.flow.tau = tau;
    }
    if let Some(t) = common.horizon {
        cfg.flow.horizon = t;
    }
    if let Some(arg) = &common.obstacle {
        cfg.obstacle = match arg {
            ObstacleArg::Cone { slope, offset } => ObstacleSection::Cone {
                slope: *slope,
                offset: *offset,
            },
            ObstacleArg::File(path) => ObstacleSection::File { path: path.clone() },
        };
    }
    cfg.resolve()
}

/// Builds a preset; an `--obstacle` override turns it into a custom run.
fn resolve_preset(name: PresetName, common: &Common) -> bendflow::Result<ExperimentPreset> {
    let (tau0, t0) = name.default_schedule();
    let n = common.n.unwrap_or(256);
    let mut preset = build_preset(name, n, common.tau.unwrap_or(tau0), common.horizon.unwrap_or(t0))?;
    if let Some(arg) = &common.obstacle {
        preset.config.obstacle = arg.build(preset.config.u0.grid())?;
        preset.name = PresetName::Custom;
        preset.expected = None;
        validate_preset(&preset)?;
    }
    Ok(preset)
}

struct Outcome {
    passed: bool,
}

fn execute(
    label: &str,
    flow: &FlowConfig,
    opts: &CheckOptions,
    expected: Option<VerdictTag>,
    common: &Common,
) -> bendflow::Result<Outcome> {
    let metric = HMetric::new(flow.u0.grid());
    let traj = match run_flow(flow, &metric) {
        Ok(t) => t,
        Err(Error::FlowFailure { step, source, partial }) => {
            if let Some(dir) = &common.out {
                create_dir(dir)?;
                let path = dir.join(format!("partial.{}", common.format.extension()));
                write_trajectory(&partial, &path, common.format)?;
                eprintln!("partial trajectory written to {}", path.display());
            }
            return Err(Error::FlowFailure { step, source, partial });
        }
        Err(e) => return Err(e),
    };
    let report = run_checks(&flow.spec, &metric, &traj, opts)?;
    print_report(label, &traj, &report, expected);
    if let Some(dir) = &common.out {
        create_dir(dir)?;
        write_trajectory(&traj, &dir.join(format!("trajectory.{}", common.format.extension())), common.format)?;
        write_report(&report, &dir.join("diagnostics.json"))?;
        write_timeseries(&traj.diagnostics, &dir.join("timeseries.csv"))?;
    }
    Ok(Outcome {
        passed: report.all_passed(),
    })
}

fn create_dir(dir: &Path) -> bendflow::Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn print_report(label: &str, traj: &Trajectory, report: &DiagnosticReport, expected: Option<VerdictTag>) {
    let d = &traj.diagnostics;
    let last = &d[d.len() - 1];
    println!(
        "[{label}] n = {} tau = {} steps = {} E0 = {:.6} E_end = {:.6}",
        traj.u0.grid().n(),
        traj.tau,
        traj.len(),
        d[0].energy,
        last.energy
    );
    for c in &report.checks {
        println!(
            "[{label}] {} {:<34} lhs {:.4e} rhs {:.4e} tol {:.1e} steps {}..{}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.lhs,
            c.rhs,
            c.tolerance,
            c.step_range.0,
            c.step_range.1
        );
    }
    for m in &report.monitors {
        println!("[{label}] monitor {:<40} {:.6e}", m.name, m.value);
    }
    if let Some(v) = &report.verdict {
        println!(
            "[{label}] verdict {} (final slope {:.3e}, sup|u'| {:.3} -> max {:.3})",
            v.tag, v.final_slope, v.initial_sup_du, v.max_sup_du
        );
        if let Some(exp) = expected {
            if exp != v.tag {
                println!("[{label}] note: expected {exp}; the horizon may be too short");
            }
        }
    }
}

fn run_sweep(common: &Common) -> bendflow::Result<bool> {
    let results: Vec<(PresetName, bendflow::Result<bool>)> = std::thread::scope(|s| {
        let handles: Vec<_> = PresetName::BUILTIN
            .iter()
            .map(|&name| {
                let mut mine = common.clone();
                mine.out = common.out.as_ref().map(|d| d.join(name.as_str()));
                s.spawn(move || {
                    let res = resolve_preset(name, &mine).and_then(|p| {
                        execute(name.as_str(), &p.config, &seeded(&mine), p.expected, &mine).map(|o| o.passed)
                    });
                    (name, res)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("preset thread panicked")).collect()
    });
    let mut all_passed = true;
    let mut first_err = None;
    for (name, res) in results {
        match res {
            Ok(passed) => all_passed &= passed,
            Err(e) => {
                eprintln!("[{name}] error: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(all_passed),
    }
}

#[derive(Serialize)]
struct ElasticaOutput {
    #[serde(flatten)]
    constants: elastica::ElasticaConstants,
    c0_squared: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    tables: Option<Tables>,
}

#[derive(Serialize)]
struct Tables {
    /// `(z, G(z), G⁻¹(G(z)))`.
    g: Vec<[f64; 3]>,
    /// `(x, U0(x))`.
    u0: Vec<[f64; 2]>,
}

fn elastica_json(table: bool) -> bendflow::Result<ElasticaOutput> {
    let k = *elastica::constants();
    let tables = if table {
        let g_rows = (0..=40)
            .map(|i| {
                let z = 0.25 * i as f64;
                Ok([z, g(z), g_inv(g(z))?])
            })
            .collect::<bendflow::Result<_>>()?;
        let u0_rows = (0..=20).map(|i| {
            let x = 0.025 * i as f64;
            [x, U0(x)]
        });
        Some(Tables {
            g: g_rows,
            u0: u0_rows.collect(),
        })
    } else {
        None
    };
    Ok(ElasticaOutput {
        constants: k,
        c0_squared: k.c0 * k.c0,
        tables,
    })
}
