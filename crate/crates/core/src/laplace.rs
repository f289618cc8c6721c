//! Numerical Laplace inversion by Euler summation of the Bromwich integral
//! (Abate–Whitt). The trapezoid rule with step `π/t` on the contour
//! `Re s = A/(2t)` gives an alternating series whose tail is accelerated by
//! binomial averaging of `m + 1` consecutive partial sums.

use crate::error::{domain, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Contour shift `a`, terms summed before averaging `n`, Euler order `m`.
/// The discretization error is about `e^{−a}` times the bound of `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerParams {
    pub a: f64,
    pub n: usize,
    pub m: usize,
}

impl Default for EulerParams {
    fn default() -> Self {
        EulerParams { a: 18.4, n: 15, m: 11 }
    }
}

impl EulerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a < 700.0) {
            return domain(format!("contour shift must lie in (0, 700), got {}", self.a));
        }
        if self.m > 60 {
            return domain("Euler order above 60 loses all precision to cancellation");
        }
        Ok(())
    }

    /// Transform evaluations per inversion point.
    pub fn evaluations(&self) -> usize {
        self.n + self.m + 1
    }
}

/// f(t) from its transform `fhat` for `t > 0`. `fhat` is called at
/// `(a + 2πik)/(2t)`, `k = 0, …, n + m`; a failing call aborts.
pub fn euler_invert<F>(fhat: F, t: f64, params: &EulerParams) -> Result<f64>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    params.validate()?;
    if !(t > 0.0 && t.is_finite()) {
        return domain(format!("inversion point must be positive, got {t}"));
    }
    let EulerParams { a, n, m } = *params;
    let scale = (0.5 * a).exp() / t;
    let mut partial = Vec::with_capacity(n + m + 1);
    let mut sum = 0.5 * fhat(Complex64::new(a / (2.0 * t), 0.0))?.re;
    partial.push(sum);
    for k in 1..=n + m {
        let s = Complex64::new(a, 2.0 * PI * k as f64) / (2.0 * t);
        let term = fhat(s)?.re;
        sum += if k % 2 == 0 { term } else { -term };
        partial.push(sum);
    }
    // binomial average of partial sums n..=n+m
    let mut coeff = 1.0;
    let mut avg = 0.0;
    let norm = 0.5f64.powi(m as i32);
    for k in 0..=m {
        avg += coeff * partial[n + k];
        coeff = coeff * (m - k) as f64 / (k + 1) as f64;
    }
    Ok(scale * avg * norm)
}
