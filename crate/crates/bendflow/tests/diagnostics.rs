//! Pointwise indicators, the check suite and the classifier.

use bendflow::diagnostics::{
    classify, contact_mass_bound, contact_trap_check, cutoff, dissipation_report, meets_navier_tolerance, navier_check,
    navier_tolerance, probe_rng, projected_probes, run_checks, symmetry_error, third_diff_sup, CheckOptions, VerdictTag,
};
use bendflow::energy::EnergySpec;
use bendflow::grid::{Grid, GridFunction, HMetric};
use bendflow::mms::{run_flow, FlowConfig, Trajectory};
use bendflow::obstacle::Obstacle;
use bendflow::preset::{build_preset, PresetName};
use rand::Rng;

fn sine(grid: Grid, amp: f64) -> GridFunction {
    GridFunction::from_fn(grid, |x| amp * (std::f64::consts::PI * x).sin()).unwrap()
}

#[test]
fn navier_indicator_examples() {
    let grid = Grid::new(128).unwrap();
    assert_eq!(navier_check(&GridFunction::zeros(grid)), (0.0, 0.0));
    // one-sided formula is exact on quadratics: u″ = −2
    let parabola = GridFunction::from_fn(grid, |x| x * (1.0 - x)).unwrap();
    let (b0, b1) = navier_check(&parabola);
    assert!((b0 + 2.0).abs() <= 1e-8 && (b1 + 2.0).abs() <= 1e-8, "{b0} {b1}");
    assert!(!meets_navier_tolerance(&parabola));
    // sin has u″(0) = 0 and the error is O(h²)
    let s = sine(grid, 1.0);
    let (b0, b1) = navier_check(&s);
    let pi3 = std::f64::consts::PI.powi(3);
    assert!(b0.abs() <= pi3 * grid.h() * grid.h() * 2.0 && b1.abs() <= pi3 * grid.h() * grid.h() * 2.0);
    assert!(meets_navier_tolerance(&s));
    assert!(navier_tolerance(&s) >= grid.h());
}

#[test]
fn third_difference_and_symmetry() {
    let grid = Grid::new(256).unwrap();
    // x²(1 − x) has u‴ = −6
    let cubic = GridFunction::from_fn(grid, |x| x * x * (1.0 - x)).unwrap();
    assert!((third_diff_sup(&cubic) - 6.0).abs() <= 1e-6);
    assert!(symmetry_error(&sine(grid, 0.7)) <= 1e-15);
    let sym_err = symmetry_error(&cubic);
    // |x²(1−x) − (1−x)²x| = x(1−x)|2x−1|, largest at x = 1/2 ± 1/(2√3)
    assert!((sym_err - 1.0 / (6.0 * 3f64.sqrt())).abs() <= 1e-4);
}

#[test]
fn cutoff_profile() {
    let grid = Grid::new(200).unwrap();
    let eta = cutoff(grid, 0.1);
    for (i, x) in grid.nodes().enumerate() {
        let v = eta.values()[i];
        assert!((0.0..=1.0).contains(&v), "eta({x}) = {v}");
        if (0.1..=0.9).contains(&x) {
            assert!((v - 1.0).abs() <= 1e-12);
        }
    }
    assert_eq!(eta.values()[0], 0.0);
    let metric = HMetric::new(grid);
    assert!(contact_mass_bound(&metric, 1.0, 0.1) > contact_mass_bound(&metric, 1.0, 0.2));
}

fn cone_run() -> (EnergySpec, HMetric, Trajectory) {
    let p = build_preset(PresetName::Subconverge, 64, 0.01, 2.0).unwrap();
    let metric = HMetric::new(p.config.u0.grid());
    let traj = run_flow(&p.config, &metric).unwrap();
    (p.config.spec, metric, traj)
}

#[test]
fn contact_trap_controls() {
    let (_, _, traj) = cone_run();
    assert!(traj.steps.iter().any(|s| s.multiplier.iter().any(|m| *m > 0.0)));
    assert!(contact_trap_check(&traj, 0.125).unwrap());

    // no contact at all
    let grid = Grid::new(32).unwrap();
    let metric = HMetric::new(grid);
    let free = FlowConfig::new(EnergySpec::elastic(), Obstacle::constant(grid, -1e6).unwrap(), sine(grid, 0.3), 0.01, 0.05);
    let free = run_flow(&free, &metric).unwrap();
    assert!(contact_trap_check(&free, 0.49).unwrap());

    // a bump relaxing onto an obstacle that peaks above zero at x = 0.4
    let grid = Grid::new(40).unwrap();
    let metric = HMetric::new(grid);
    let psi = Obstacle::tabulated(grid, grid.nodes().map(|x| 0.4 * (x / 0.4).min((1.0 - x) / 0.6) - 0.2).collect()).unwrap();
    let cfg = FlowConfig::new(EnergySpec::elastic(), psi.clone(), sine(grid, 0.35), 0.01, 0.5);
    let traj = run_flow(&cfg, &metric).unwrap();
    let last = traj.iterate(traj.len());
    assert!(bendflow::obstacle::active_set(last, &psi).unwrap().contains(16));
    assert!(!contact_trap_check(&traj, 0.49).unwrap());
}

#[test]
fn dissipation_rows() {
    let (_, _, traj) = cone_run();
    let rows = dissipation_report(&traj);
    assert_eq!(rows.len(), traj.len());
    for r in &rows {
        assert!(r.energy_rate >= -traj.inner_tol / traj.tau);
        assert!(r.bound > 0.0);
    }
}

#[test]
fn suite_passes_on_cone_run() {
    let (spec, metric, traj) = cone_run();
    let report = run_checks(&spec, &metric, &traj, &CheckOptions::default()).unwrap();
    let failed: Vec<_> = report.failed().collect();
    assert!(failed.is_empty(), "{failed:?}");
    for name in [
        "energy-descent",
        "telescoping-dissipation",
        "holder-bound",
        "growth-bound",
        "gradient-norm-bound",
        "pairwise-energy-bound",
        "contact-mass-bound",
        "gradient-distance",
        "hpr-pairing",
        "fvi-residual",
        "symmetry",
        "contact-trap",
    ] {
        assert!(report.check(name).is_some(), "missing check {name}");
    }
    assert!(report.verdict.is_some());
}

#[test]
fn suite_flags_a_corrupted_trajectory() {
    let (spec, metric, mut traj) = cone_run();
    // pretend the energy went up at one step
    traj.diagnostics[5].energy += 1.0;
    let report = run_checks(&spec, &metric, &traj, &CheckOptions::default()).unwrap();
    assert!(!report.check("energy-descent").unwrap().passed);
    assert!(!report.all_passed());
}

#[test]
fn classifier_reads_the_three_regimes() {
    let grid = Grid::new(64).unwrap();
    let metric = HMetric::new(grid);
    let spec = EnergySpec::elastic();
    let psi = Obstacle::constant(grid, -1e6).unwrap();
    let mut rng = probe_rng(0);

    let long = run_flow(&FlowConfig::new(spec.clone(), psi.clone(), sine(grid, 0.3), 0.01, 8.0), &metric).unwrap();
    let probes = projected_probes(&metric, &psi, long.iterate(long.len()), 10, &mut rng).unwrap();
    let v = classify(&spec, &metric, &long, &probes).unwrap();
    assert_eq!(v.tag, VerdictTag::SubconvergentCandidate, "{v:?}");
    assert!(v.final_slope <= v.thresholds.slope_tol);

    let short = run_flow(&FlowConfig::new(spec.clone(), psi.clone(), sine(grid, 0.3), 0.01, 0.05), &metric).unwrap();
    let v = classify(&spec, &metric, &short, &probes).unwrap();
    assert_eq!(v.tag, VerdictTag::Undecided, "{v:?}");

    // a record whose derivative doubles reads as blow-up whatever the slope
    let mut grown = long.clone();
    let last = grown.diagnostics.len() - 1;
    grown.diagnostics[last].sup_du = 2.5 * grown.diagnostics[0].sup_du;
    let v = classify(&spec, &metric, &grown, &probes).unwrap();
    assert_eq!(v.tag, VerdictTag::VerticalBlowupCandidate);
    assert!(v.growth_ratio >= 2.0);
    assert_eq!(v.tag.to_string(), "vertical-blowup-candidate");
}

#[test]
fn probe_stream_is_reproducible() {
    let a: Vec<f64> = (0..5).map(|_| probe_rng(9).gen()).collect();
    let mut r = probe_rng(9);
    let b: f64 = r.gen();
    assert_eq!(a[0], b);
}
