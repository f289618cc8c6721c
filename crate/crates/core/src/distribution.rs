//! The Normal Laplace (NL) law on the log scale and the double Pareto
//! lognormal (dPlN) law on the raw scale.
//!
//! `Y ~ NL(α, β, ν, τ²)` is `Z + W` with `Z ~ N(ν, τ²)` and `W = E₁ − E₂`,
//! `E₁ ~ Exp(α)`, `E₂ ~ Exp(β)`. `X = exp(Y)` is dPlN.

use crate::error::{domain, Error, Result};
use crate::quad;
use crate::special::{
    log_add_exp, log_mills_ratio_unchecked, normal_log_cdf, normal_log_pdf, normal_log_sf,
    normal_quantile,
};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

/// Parameter vector θ = (α, β, ν, τ²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct DplnParams {
    alpha: f64,
    beta: f64,
    nu: f64,
    tau2: f64,
}

#[derive(Deserialize)]
struct RawParams {
    alpha: f64,
    beta: f64,
    nu: f64,
    tau2: f64,
}

impl TryFrom<RawParams> for DplnParams {
    type Error = Error;
    fn try_from(r: RawParams) -> Result<Self> {
        DplnParams::new(r.alpha, r.beta, r.nu, r.tau2)
    }
}

impl DplnParams {
    /// `alpha`, `beta`, `tau2` must be positive and finite; `nu` finite.
    pub fn new(alpha: f64, beta: f64, nu: f64, tau2: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return domain(format!("alpha must be positive and finite, got {alpha}"));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return domain(format!("beta must be positive and finite, got {beta}"));
        }
        if !nu.is_finite() {
            return domain(format!("nu must be finite, got {nu}"));
        }
        if !(tau2 > 0.0 && tau2.is_finite()) {
            return domain(format!("tau2 must be positive and finite, got {tau2}"));
        }
        Ok(DplnParams { alpha, beta, nu, tau2 })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn nu(&self) -> f64 {
        self.nu
    }
    pub fn tau2(&self) -> f64 {
        self.tau2
    }
    pub fn tau(&self) -> f64 {
        self.tau2.sqrt()
    }

    /// `[α, β, ν, τ²]`
    pub fn to_array(&self) -> [f64; 4] {
        [self.alpha, self.beta, self.nu, self.tau2]
    }

    /// True iff `E(X^r)` is finite.
    pub fn has_moment(&self, r: f64) -> bool {
        r < self.alpha
    }
}

/// Whether a batch holds raw dPlN values or their logarithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Raw,
    Log,
}

/// An ordered batch of observations with its scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    values: Vec<f64>,
    scale: Scale,
}

impl SampleBatch {
    pub fn new(values: Vec<f64>, scale: Scale) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return domain(format!("value {i} is not finite: {v}"));
        }
        if scale == Scale::Raw {
            if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| **v <= 0.0) {
                return domain(format!("raw-scale value {i} is not positive: {v}"));
            }
        }
        Ok(SampleBatch { values, scale })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn scale(&self) -> Scale {
        self.scale
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_log(&self) -> SampleBatch {
        match self.scale {
            Scale::Log => self.clone(),
            Scale::Raw => SampleBatch {
                values: self.values.iter().map(|x| x.ln()).collect(),
                scale: Scale::Log,
            },
        }
    }

    pub fn to_raw(&self) -> SampleBatch {
        match self.scale {
            Scale::Raw => self.clone(),
            Scale::Log => SampleBatch {
                values: self.values.iter().map(|y| y.exp()).collect(),
                scale: Scale::Raw,
            },
        }
    }
}

fn ln_ab(p: &DplnParams) -> f64 {
    (p.alpha * p.beta / (p.alpha + p.beta)).ln()
}

/// ln[φ(u)·R(ατ − u)]. For negative Mill's-ratio arguments the equivalent
/// form `α²τ²/2 − ατu + ln Φᶜ(ατ − u)` avoids cancelling two huge logs.
#[inline]
fn log_right_term(u: f64, a_tau: f64) -> f64 {
    let w = a_tau - u;
    if w >= 0.0 {
        normal_log_pdf(u) + log_mills_ratio_unchecked(w)
    } else {
        0.5 * a_tau * a_tau - a_tau * u + normal_log_sf(w)
    }
}

/// ln f_Y(y) for the Normal Laplace law.
pub fn nl_log_pdf(y: f64, p: &DplnParams) -> f64 {
    if y.is_infinite() {
        return f64::NEG_INFINITY;
    }
    let tau = p.tau();
    let u = (y - p.nu) / tau;
    let right = log_right_term(u, p.alpha * tau);
    let left = log_right_term(-u, p.beta * tau);
    ln_ab(p) + log_add_exp(right, left)
}

/// f_Y(y) for the Normal Laplace law.
pub fn nl_pdf(y: f64, p: &DplnParams) -> f64 {
    nl_log_pdf(y, p).exp()
}

/// ln f_X(x); `x` must be positive.
pub fn dpln_log_pdf(x: f64, p: &DplnParams) -> Result<f64> {
    if !(x > 0.0) {
        return domain(format!("dPlN density needs x > 0, got {x}"));
    }
    let y = x.ln();
    Ok(nl_log_pdf(y, p) - y)
}

/// f_X(x) = f_Y(ln x)/x.
pub fn dpln_pdf(x: f64, p: &DplnParams) -> Result<f64> {
    dpln_log_pdf(x, p).map(f64::exp)
}

/// ln f₁(x | α, ν, τ²), the β → ∞ limit component (right power tail).
pub fn log_f1(x: f64, p: &DplnParams) -> Result<f64> {
    if !(x > 0.0) {
        return domain(format!("f1 needs x > 0, got {x}"));
    }
    let (a, nu, t2) = (p.alpha, p.nu, p.tau2);
    let lx = x.ln();
    Ok(a.ln() - (a + 1.0) * lx + a * nu + 0.5 * a * a * t2 + normal_log_cdf((lx - nu - a * t2) / p.tau()))
}

/// ln f₂(x | β, ν, τ²), the α → ∞ limit component (left power tail).
pub fn log_f2(x: f64, p: &DplnParams) -> Result<f64> {
    if !(x > 0.0) {
        return domain(format!("f2 needs x > 0, got {x}"));
    }
    let (b, nu, t2) = (p.beta, p.nu, p.tau2);
    let lx = x.ln();
    Ok(b.ln() + (b - 1.0) * lx - b * nu + 0.5 * b * b * t2 + normal_log_sf((lx - nu + b * t2) / p.tau()))
}

pub fn f1(x: f64, p: &DplnParams) -> Result<f64> {
    log_f1(x, p).map(f64::exp)
}

pub fn f2(x: f64, p: &DplnParams) -> Result<f64> {
    log_f2(x, p).map(f64::exp)
}

/// β/(α+β)·f₁ + α/(α+β)·f₂, which equals f_X.
pub fn dpln_mixture_pdf(x: f64, p: &DplnParams) -> Result<f64> {
    let s = p.alpha + p.beta;
    let l1 = (p.beta / s).ln() + log_f1(x, p)?;
    let l2 = (p.alpha / s).ln() + log_f2(x, p)?;
    Ok(log_add_exp(l1, l2).exp())
}

/// E(X^r) = αβ / ((α − r)(β + r)) · exp(rν + r²τ²/2), defined for r < α.
pub fn dpln_moment(r: f64, p: &DplnParams) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return domain(format!("moment order must be positive, got {r}"));
    }
    if r >= p.alpha {
        return Err(Error::MomentDoesNotExist { order: r, alpha: p.alpha });
    }
    let (a, b) = (p.alpha, p.beta);
    Ok(a * b / ((a - r) * (b + r)) * (r * p.nu + 0.5 * r * r * p.tau2).exp())
}

/// One NL draw: ν + τ·N(0,1) + E₁/α − E₂/β.
pub fn sample_nl_one<R: Rng + ?Sized>(p: &DplnParams, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    let e1: f64 = Exp1.sample(rng);
    let e2: f64 = Exp1.sample(rng);
    p.nu + p.tau() * z + e1 / p.alpha - e2 / p.beta
}

/// `n` i.i.d. dPlN draws.
pub fn sample_dpln<R: Rng + ?Sized>(n: usize, p: &DplnParams, rng: &mut R) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::Precondition("sample size must be at least 1".into()));
    }
    let values = (0..n).map(|_| sample_nl_one(p, rng).exp()).collect();
    Ok(SampleBatch { values, scale: Scale::Raw })
}

/// `n` i.i.d. Normal Laplace draws (log scale).
pub fn sample_nl<R: Rng + ?Sized>(n: usize, p: &DplnParams, rng: &mut R) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::Precondition("sample size must be at least 1".into()));
    }
    let values = (0..n).map(|_| sample_nl_one(p, rng)).collect();
    Ok(SampleBatch { values, scale: Scale::Log })
}

const CDF_REL_TOL: f64 = 1e-12;

/// ln ∫_{−∞}^{y} f_Y, by quadrature of the density scaled to 1 at `y`.
pub fn nl_log_cdf(y: f64, p: &DplnParams) -> f64 {
    if y == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if y == f64::INFINITY {
        return 0.0;
    }
    let ly = nl_log_pdf(y, p);
    let rate = p.beta.min(1.0 / p.tau());
    let mass = quad::integrate_half_line(|t| (nl_log_pdf(y - t, p) - ly).exp(), rate, 0.0, CDF_REL_TOL);
    ly + mass.ln()
}

/// ln ∫_{y}^{∞} f_Y.
pub fn nl_log_sf(y: f64, p: &DplnParams) -> f64 {
    if y == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    if y == f64::NEG_INFINITY {
        return 0.0;
    }
    let ly = nl_log_pdf(y, p);
    let rate = p.alpha.min(1.0 / p.tau());
    let mass = quad::integrate_half_line(|t| (nl_log_pdf(y + t, p) - ly).exp(), rate, 0.0, CDF_REL_TOL);
    ly + mass.ln()
}

/// F_Y(y). Integrates whichever tail lies away from the centre.
pub fn nl_cdf(y: f64, p: &DplnParams) -> f64 {
    if y <= p.nu {
        nl_log_cdf(y, p).exp()
    } else {
        -nl_log_sf(y, p).exp_m1()
    }
}

/// 1 − F_Y(y).
pub fn nl_sf(y: f64, p: &DplnParams) -> f64 {
    if y > p.nu {
        nl_log_sf(y, p).exp()
    } else {
        -nl_log_cdf(y, p).exp_m1()
    }
}

/// F_X(x) via adaptive quadrature of the density on the log scale.
pub fn dpln_cdf(x: f64, p: &DplnParams) -> Result<f64> {
    if x.is_nan() {
        return domain("dPlN cdf of NaN");
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    Ok(nl_cdf(x.ln(), p))
}

/// Median of the lognormal component, used as a quantile starting point.
pub(crate) fn lognormal_log_quantile(prob: f64, p: &DplnParams) -> f64 {
    p.nu + p.tau() * normal_quantile(prob)
}
