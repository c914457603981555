//! Closed forms for the elastic energy: `G(z) = ∫₀ᶻ (1+w²)^{-5/4} dw`, its
//! inverse, the constant `c0 = 2 sup G`, the envelope `U0`, the critical
//! family `u_c`, and the thresholds built from them.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::{centered_diff, second_diff, GridFunction};

const SERIES_TOL: f64 = 1e-16;
const MAX_TERMS: usize = 200_000;

/// `c0 = √π Γ(3/4) / Γ(5/4)`.
pub fn c0() -> f64 {
    static C0: OnceLock<f64> = OnceLock::new();
    *C0.get_or_init(|| PI.sqrt() * gamma(0.75) / gamma(1.25))
}

/// `c0` by tanh-sinh quadrature of `2∫₀^∞ (1+s²)^{-5/4} ds`, with the tail
/// mapped to `[0, 1]` by `s = 1/r²`.
pub fn c0_quadrature() -> f64 {
    let head = integrate(|s| (1.0 + s * s).powf(-1.25), 0.0, 1.0);
    let tail = integrate(|r| 2.0 * r * r * (1.0 + r.powi(4)).powf(-1.25), 0.0, 1.0);
    2.0 * (head + tail)
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    quadrature::double_exponential::integrate(f, a, b, 1e-14).integral
}

/// `G(z)` by quadrature; an independent reference for [`g`].
pub fn g_quadrature(z: f64) -> f64 {
    let s = z.signum();
    let z = z.abs();
    if z <= 1.0 {
        return s * integrate(|w| (1.0 + w * w).powf(-1.25), 0.0, z);
    }
    let head = integrate(|w| (1.0 + w * w).powf(-1.25), 0.0, 1.0);
    let tail = integrate(
        |r| 2.0 * r * r * (1.0 + r.powi(4)).powf(-1.25),
        1.0 / z.sqrt(),
        1.0,
    );
    s * (head + tail)
}

/// `G(z) = z ₂F₁(1/2, 5/4; 3/2; −z²)`.
pub fn g(z: f64) -> f64 {
    let a = z.abs();
    if a > 1e6 {
        // ∫_z^∞ (1+w²)^{-5/4} dw = (2/3) z^{-3/2} − (5/14) z^{-7/2} + O(z^{-11/2})
        return z.signum() * (0.5 * c0() - (2.0 / 3.0) * a.powf(-1.5) + (5.0 / 14.0) * a.powf(-3.5));
    }
    z * hyp2f1(0.5, 1.25, 1.5, -z * z).expect("G series converges on the negative axis")
}

/// The unique `z` with `G(z) = y`, for `|y| < c0/2`.
pub fn g_inv(y: f64) -> Result<f64> {
    let half = 0.5 * c0();
    if !(y.abs() < half) {
        return Err(Error::Domain { what: "G_inv", value: y });
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let t = y.abs();
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while g(hi) < t {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Domain { what: "G_inv", value: y });
        }
    }
    let mut z = if half - t < 0.1 {
        (((2.0 / 3.0) / (half - t)).powf(2.0 / 3.0)).clamp(lo, hi)
    } else {
        0.5 * (lo + hi)
    };
    for _ in 0..400 {
        let r = g(z) - t;
        if r == 0.0 {
            break;
        }
        if r > 0.0 {
            hi = z;
        } else {
            lo = z;
        }
        let mut next = z - r * (1.0 + z * z).powf(1.25);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - z).abs() <= 4.0 * f64::EPSILON * (1.0 + z) || hi - lo <= 4.0 * f64::EPSILON * hi {
            z = next;
            break;
        }
        z = next;
    }
    Ok(y.signum() * z)
}

fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.round() {
        0.0
    } else {
        1.0 / gamma(x)
    }
}

fn series(a: f64, b: f64, c: f64, z: f64, what: &'static str) -> Result<f64> {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut small = 0;
    for k in 0..MAX_TERMS {
        let kf = k as f64;
        term *= (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)) * z;
        sum += term;
        if term == 0.0 {
            return Ok(sum);
        }
        if term.abs() <= SERIES_TOL * sum.abs() {
            small += 1;
            if small >= 3 {
                return Ok(sum);
            }
        } else {
            small = 0;
        }
    }
    Err(Error::Evaluation { what, terms: MAX_TERMS })
}

/// Gauss hypergeometric function for `z ≤ 0`.
///
/// Arguments in `[-1/2, 0]` use the series directly. Otherwise the Pfaff
/// transformation maps to `w = z/(z−1) ∈ (1/3, 1)`; for `w > 1/2` the
/// `w ↦ 1 − w` connection formula is applied when `c − a − b` is not an
/// integer.
pub fn hyp2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    if c <= 0.0 && c == c.round() {
        return Err(Error::Domain { what: "hyp2f1 c", value: c });
    }
    if !(z <= 0.0) {
        return Err(Error::Domain { what: "hyp2f1 z", value: z });
    }
    if z >= -0.5 {
        return series(a, b, c, z, "hyp2f1");
    }
    // F(a,b;c;z) = (1−z)^{−a} F(a, c−b; c; w)
    let one_minus_w = 1.0 / (1.0 - z);
    let w = z / (z - 1.0);
    let pref = one_minus_w.powf(a);
    let (pa, pb) = (a, c - b);
    if w <= 0.5 {
        return Ok(pref * series(pa, pb, c, w, "hyp2f1 (Pfaff)")?);
    }
    let s = c - pa - pb;
    if (s - s.round()).abs() < 1e-12 {
        return Ok(pref * series(pa, pb, c, w, "hyp2f1 (Pfaff, integer c-a-b)")?);
    }
    let x = one_minus_w;
    let t1 = gamma(c) * gamma(s) * rgamma(c - pa) * rgamma(c - pb);
    let t2 = gamma(c) * gamma(-s) * rgamma(pa) * rgamma(pb);
    let mut val = 0.0;
    if t1 != 0.0 {
        val += t1 * series(pa, pb, 1.0 - s, x, "hyp2f1 (connection)")?;
    }
    if t2 != 0.0 {
        val += t2 * x.powf(s) * series(c - pa, c - pb, 1.0 + s, x, "hyp2f1 (connection)")?;
    }
    Ok(pref * val)
}

/// Envelope of the critical family; `U0(0) = U0(1) = 0` by continuity.
#[allow(non_snake_case)]
pub fn U0(x: f64) -> f64 {
    let c = c0();
    match g_inv(0.5 * c - c * x) {
        Ok(z) => 2.0 / (c * (1.0 + z * z).powf(0.25)),
        Err(_) => 0.0,
    }
}

/// Symmetric free elastica with `E(u_c) = c²`, `0 < c < c0`.
pub fn u_c(c: f64, x: f64) -> Result<f64> {
    if !(c > 0.0 && c < c0()) {
        return Err(Error::Domain { what: "u_c parameter", value: c });
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain { what: "u_c position", value: x });
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    let z = g_inv(0.5 * c - c * x)?;
    let z0 = g_inv(0.5 * c)?;
    Ok(2.0 / (c * (1.0 + z * z).powf(0.25)) - 2.0 / (c * (1.0 + z0 * z0).powf(0.25)))
}

/// `f(B) = (B/3) ₂F₁(1, 3/2; 7/4; −B²) / ₂F₁(1/2, 1; 3/4; −B²)`.
pub fn midpoint_ratio(b: f64) -> Result<f64> {
    let z = -b * b;
    Ok(b / 3.0 * hyp2f1(1.0, 1.5, 1.75, z)? / hyp2f1(0.5, 1.0, 0.75, z)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MidpointScan {
    pub sup: f64,
    pub argmax: f64,
    /// Whether the scanned values were nondecreasing in `B`.
    pub monotone: bool,
}

pub const MIDPOINT_B_MIN: f64 = 1e-3;
pub const MIDPOINT_B_MAX: f64 = 1e8;

/// Log-grid scan of [`midpoint_ratio`] over `[1e-3, 1e8]` followed by a
/// golden-section refinement around the best grid point.
pub fn midpoint_sup() -> Result<MidpointScan> {
    let pts = 1101;
    let (l0, l1) = (MIDPOINT_B_MIN.ln(), MIDPOINT_B_MAX.ln());
    let mut vals = Vec::with_capacity(pts);
    for k in 0..pts {
        let b = (l0 + (l1 - l0) * k as f64 / (pts - 1) as f64).exp();
        vals.push((b, midpoint_ratio(b)?));
    }
    let monotone = vals.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-15);
    let (mut k_best, mut best) = (0, f64::NEG_INFINITY);
    for (k, &(_, v)) in vals.iter().enumerate() {
        if v > best {
            best = v;
            k_best = k;
        }
    }
    let mut argmax = vals[k_best].0;
    if k_best > 0 && k_best + 1 < pts {
        let (mut a, mut b) = (vals[k_best - 1].0.ln(), vals[k_best + 1].0.ln());
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let x1 = b - phi * (b - a);
            let x2 = a + phi * (b - a);
            if midpoint_ratio(x1.exp())? < midpoint_ratio(x2.exp())? {
                a = x1;
            } else {
                b = x2;
            }
        }
        let m = (0.5 * (a + b)).exp();
        let v = midpoint_ratio(m)?;
        if v > best {
            best = v;
            argmax = m;
        }
    }
    Ok(MidpointScan {
        sup: best,
        argmax,
        monotone,
    })
}

/// `4 G(A)² min{1/(2a), 1/(1−2a)}`.
pub fn cone_energy_floor(slope: f64, offset: f64) -> Result<f64> {
    if !(slope > 0.0) {
        return Err(Error::Domain { what: "cone slope", value: slope });
    }
    if !(offset > 0.0 && offset < 0.5) {
        return Err(Error::Domain { what: "cone offset", value: offset });
    }
    let ga = g(slope);
    Ok(4.0 * ga * ga * (1.0 / (2.0 * offset)).min(1.0 / (1.0 - 2.0 * offset)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticaConstants {
    pub c0: f64,
    pub c0_quadrature: f64,
    pub two_over_c0: f64,
    pub sup_midpoint: f64,
    pub midpoint_monotone: bool,
    /// `G⁻¹(c0/√6)`, `8/c0`, `4 sup_midpoint`.
    pub threshold_terms: [f64; 3],
    pub threshold: f64,
}

/// Computed once per process.
pub fn constants() -> &'static ElasticaConstants {
    static K: OnceLock<ElasticaConstants> = OnceLock::new();
    K.get_or_init(|| {
        let c = c0();
        let scan = midpoint_sup().expect("midpoint scan stays in the convergent regime");
        let terms = [
            g_inv(c / 6f64.sqrt()).expect("c0/sqrt(6) < c0/2"),
            8.0 / c,
            4.0 * scan.sup,
        ];
        ElasticaConstants {
            c0: c,
            c0_quadrature: c0_quadrature(),
            two_over_c0: 2.0 / c,
            sup_midpoint: scan.sup,
            midpoint_monotone: scan.monotone,
            threshold_terms: terms,
            threshold: terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    })
}

pub fn blowup_threshold() -> f64 {
    constants().threshold
}

/// Residual of the free-elastica identity `v′ / (1+u′²)^{5/4} = const` with
/// `v = u″ / (1+u′²)^{5/4}`; zero when `v` vanishes identically.
pub fn critical_residual(u: &GridFunction) -> f64 {
    let h = u.grid().h();
    let p = centered_diff(u);
    let q = second_diff(u);
    let v: Vec<f64> = p
        .iter()
        .zip(&q)
        .map(|(pi, qi)| qi * (1.0 + pi * pi).powf(-1.25))
        .collect();
    if v.iter().all(|x| *x == 0.0) || v.len() < 3 {
        return 0.0;
    }
    let left: Vec<f64> = (1..v.len() - 1)
        .map(|i| (v[i + 1] - v[i - 1]) / (2.0 * h) * (1.0 + p[i] * p[i]).powf(-1.25))
        .collect();
    let mean = left.iter().sum::<f64>() / left.len() as f64;
    left.iter().fold(0.0, |m, l| m.max((l - mean).abs()))
}
