//! Special functions against 30-digit reference values computed offline
//! with an arbitrary-precision library.

use bendflow::elastica::{self, c0, c0_quadrature, cone_energy_floor, g, g_inv, g_quadrature, hyp2f1, midpoint_ratio, u_c, U0};
use bendflow::energy::{energy, EnergySpec};
use bendflow::grid::{Grid, GridFunction};
use proptest::prelude::*;

const C0_REF: f64 = 2.396_280_469_471_184_4;
const TWO_OVER_C0_REF: f64 = 0.834_626_841_674_073_2;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

#[test]
fn c0_closed_form_and_quadrature() {
    assert!(close(c0(), C0_REF, 1e-15));
    assert!(close(c0_quadrature(), C0_REF, 1e-12));
    assert!((c0() - c0_quadrature()).abs() <= 1e-9);
}

#[test]
fn g_reference_values() {
    let refs = [
        (0.5, 0.455_294_874_702_779_6),
        (1.0, 0.744_303_079_760_492_9),
        (3.0, 1.076_918_665_960_028),
        (10.0, 1.177_170_519_988_724),
        (1000.0, 1.198_119_152_895_818_3),
    ];
    for (z, want) in refs {
        assert!(close(g(z), want, 1e-13), "G({z}) = {} vs {want}", g(z));
        assert!(close(g(-z), -want, 1e-13));
        assert!(close(g_quadrature(z), want, 1e-11));
    }
    assert_eq!(g(0.0), 0.0);
    assert!(close(g(1e9), 0.5 * C0_REF, 1e-12));
}

#[test]
fn hyp2f1_reference_values() {
    let refs = [
        ((0.5, 1.25, 1.5, -0.3), 0.895_595_983_833_254_1),
        ((0.5, 1.25, 1.5, -4.0), 0.494_642_004_750_289_2),
        ((1.0, 1.5, 1.75, -100.0), 0.014_033_695_354_094_565),
        ((0.5, 1.0, 0.75, -2.5), 0.445_239_864_987_797_4),
        ((1.0, 1.0, 2.0, -0.9), 0.713_170_984_635_994_2),
        ((0.5, 1.0, 0.75, -1e4), 0.006_040_247_744_108_607),
    ];
    for ((a, b, c, z), want) in refs {
        let got = hyp2f1(a, b, c, z).unwrap();
        assert!(close(got, want, 1e-12), "2F1({a},{b};{c};{z}) = {got} vs {want}");
    }
    // ₂F₁(1,1;2;z) = ln(1−z)/(−z)
    let z = -0.9;
    assert!(close(hyp2f1(1.0, 1.0, 2.0, z).unwrap(), (1.0 - z).ln() / -z, 1e-14));
}

#[test]
fn hyp2f1_rejects_bad_arguments() {
    assert!(hyp2f1(0.5, 0.5, -2.0, -0.1).is_err());
    assert!(hyp2f1(0.5, 0.5, 1.5, 0.5).is_err());
}

#[test]
fn inverse_and_envelope() {
    assert!(close(g_inv(0.7).unwrap(), 0.901_008_291_510_536_2, 1e-12));
    assert!(g_inv(0.5 * C0_REF).is_err());
    assert!(close(U0(0.25), 0.753_216_431_699_165, 1e-12));
    assert!(close(U0(0.5), TWO_OVER_C0_REF, 1e-12));
    assert_eq!(U0(0.0), 0.0);
    assert!(close(u_c(1.0, 0.3).unwrap(), 0.112_048_123_545_622_45, 1e-12));
    assert!(close(u_c(2.0, 0.5).unwrap(), 0.342_196_264_013_569_74, 1e-12));
    assert!(u_c(C0_REF, 0.3).is_err());
    assert!(u_c(1.0, 1.5).is_err());
}

#[test]
fn midpoint_ratio_and_threshold() {
    assert!(close(midpoint_ratio(2.0).unwrap(), 0.450_098_385_769_773_34, 1e-12));
    let k = elastica::constants();
    assert!((k.sup_midpoint - TWO_OVER_C0_REF).abs() <= 1e-3);
    assert!(close(k.threshold_terms[0], 1.920_941_898_020_163_1, 1e-11));
    assert!(close(k.threshold_terms[1], 8.0 / C0_REF, 1e-15));
    assert!(k.threshold >= k.threshold_terms.iter().cloned().fold(0.0, f64::max));
    assert!((k.threshold - 3.3385).abs() < 1e-3);
}

#[test]
fn cone_floor_formula() {
    let ga = g(2.0);
    assert!(close(cone_energy_floor(2.0, 0.25).unwrap(), 8.0 * ga * ga, 1e-15));
    assert!(close(cone_energy_floor(2.0, 0.1).unwrap(), 4.0 * ga * ga / 0.8, 1e-15));
    assert!(cone_energy_floor(2.0, 0.5).is_err());
    assert!(cone_energy_floor(-1.0, 0.25).is_err());
}

#[test]
fn critical_family_energy() {
    let grid = Grid::new(1024).unwrap();
    let spec = EnergySpec::elastic();
    for c in [0.5, 1.0, 2.0] {
        let u = GridFunction::from_fn(grid, |x| u_c(c, x).unwrap()).unwrap();
        let e = energy(&spec, &u).unwrap();
        assert!((e / (c * c) - 1.0).abs() <= 1e-3, "c = {c}: E = {e}");
    }
}

#[test]
fn critical_profile_is_stationary() {
    let grid = Grid::new(256).unwrap();
    let u = GridFunction::from_fn(grid, |x| u_c(1.5, x).unwrap()).unwrap();
    let wavy = GridFunction::from_fn(grid, |x| 0.2 * (3.0 * std::f64::consts::PI * x).sin() + 0.3 * x * (1.0 - x)).unwrap();
    assert!(elastica::critical_residual(&u) < 0.1 * elastica::critical_residual(&wavy));
}

proptest! {
    #[test]
    fn g_inverse_round_trip(z in -50.0f64..50.0) {
        let back = g_inv(g(z)).unwrap();
        prop_assert!((back - z).abs() <= 1e-9 * (1.0 + z.abs()).powf(2.5));
    }

    #[test]
    fn g_is_odd_and_increasing(a in 0.0f64..20.0, d in 1e-3f64..5.0) {
        prop_assert_eq!(g(-a), -g(a));
        prop_assert!(g(a + d) > g(a));
        prop_assert!(g(a + d) < 0.5 * C0_REF);
    }

    #[test]
    fn u_c_is_symmetric(c in 0.1f64..2.3, x in 0.0f64..0.5) {
        let l = u_c(c, x).unwrap();
        let r = u_c(c, 1.0 - x).unwrap();
        prop_assert!((l - r).abs() <= 1e-12);
        prop_assert!(l <= U0(x) + 1e-12);
    }
}
