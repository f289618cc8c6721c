//! Normal-distribution special functions and Mill's ratio.

use crate::error::{domain, Result};
use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

/// ln √(2π)
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
/// ln √(π/2)
const LN_SQRT_PI_2: f64 = 0.225_791_352_644_727_43;

/// Beyond this point `R(z)` comes from the continued fraction.
const CF_THRESHOLD: f64 = 8.0;

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

pub fn normal_log_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// Φ(z).
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Φᶜ(z) = 1 − Φ(z), accurate in the upper tail.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z * FRAC_1_SQRT_2)
}

/// ln Φᶜ(z), finite for every finite z.
pub fn normal_log_sf(z: f64) -> f64 {
    if z > CF_THRESHOLD {
        normal_log_pdf(z) + log_mills_ratio_unchecked(z)
    } else {
        normal_sf(z).ln()
    }
}

/// ln Φ(z).
pub fn normal_log_cdf(z: f64) -> f64 {
    normal_log_sf(-z)
}

/// Φ⁻¹(p) for p in (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    -normal_upper_quantile(p)
}

/// The z with Φᶜ(z) = s, for s in (0, 1).
pub fn normal_upper_quantile(s: f64) -> f64 {
    let mut z = SQRT_2 * erfc_inv(2.0 * s);
    if !z.is_finite() {
        return z;
    }
    // Halley polish on ln Φᶜ(z) − ln s; the starting guess is good to ~1e-10.
    let log_s = s.ln();
    for _ in 0..2 {
        let log_sf = normal_log_sf(z);
        let h = (normal_log_pdf(z) - log_sf).exp(); // hazard φ/Φᶜ
        let g = log_sf - log_s;
        // d/dz lnΦᶜ = −h, d²/dz² lnΦᶜ = h(z − h)
        let d1 = -h;
        let d2 = h * (z - h);
        let step = g / d1 / (1.0 - 0.5 * g * d2 / (d1 * d1));
        z -= step;
        if step.abs() <= 1e-16 * z.abs().max(1.0) {
            break;
        }
    }
    z
}

/// Mill's ratio `R(z) = Φᶜ(z)/φ(z)`.
///
/// Large positive arguments go through a continued fraction so the ratio never
/// forms 0/0. For `z` below about −37.6 the true value exceeds `f64::MAX` and
/// `+inf` is returned; [`log_mills_ratio`] stays finite there.
pub fn mills_ratio(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return domain(format!("mills_ratio: non-finite argument {z}"));
    }
    Ok(mills_ratio_unchecked(z))
}

/// `ln R(z)`, finite for every finite `z`.
pub fn log_mills_ratio(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return domain(format!("log_mills_ratio: non-finite argument {z}"));
    }
    Ok(log_mills_ratio_unchecked(z))
}

pub(crate) fn mills_ratio_unchecked(z: f64) -> f64 {
    if z > CF_THRESHOLD {
        mills_continued_fraction(z)
    } else {
        (PI / 2.0).sqrt() * erfc(z * FRAC_1_SQRT_2) * (0.5 * z * z).exp()
    }
}

pub(crate) fn log_mills_ratio_unchecked(z: f64) -> f64 {
    if z > CF_THRESHOLD {
        mills_continued_fraction(z).ln()
    } else if z > 0.0 {
        mills_ratio_unchecked(z).ln()
    } else {
        LN_SQRT_PI_2 + erfc(z * FRAC_1_SQRT_2).ln() + 0.5 * z * z
    }
}

/// Laplace's continued fraction R(z) = 1/(z + 1/(z + 2/(z + 3/(z + ...)))),
/// evaluated with the modified Lentz algorithm. Converges fast for z > 5.
fn mills_continued_fraction(z: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = z;
    let mut c = z;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64;
        d = z + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = z + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

/// ln(eᵃ + eᵇ) without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// ln(eᵃ − eᵇ) for a ≥ b.
pub fn log_sub_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    a + (-(b - a).exp_m1()).ln()
}

/// ln Σ exp(xᵢ).
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
