//! Quantiles of the dPlN law.
//!
//! Everything runs on the log scale `y = ln x` and in log-probability, so
//! targets as small as `1e-300` (or as close to one as `1 − 1e-300`) are
//! handled. Newton steps on `ln F` (or `ln S` in the upper half) are
//! safeguarded by a bisection bracket.

use crate::distribution::{lognormal_log_quantile, nl_log_cdf, nl_log_pdf, nl_log_sf, DplnParams};
use crate::error::{domain, Error, Result};
use crate::quad::gk15;
use crate::special::log_add_exp;

pub const MAX_NEWTON_STEPS: usize = 100;
const LOG_TOL: f64 = 1e-12;

/// A probability held as `p` together with `ln p` and `ln(1 − p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailProb {
    lower: f64,
    log_lower: f64,
    log_upper: f64,
}

impl TailProb {
    /// From `p = P(X ≤ t)`, `0 < p < 1`.
    pub fn from_lower(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return domain(format!("probability must lie in (0, 1), got {p}"));
        }
        Ok(TailProb { lower: p, log_lower: p.ln(), log_upper: (-p).ln_1p() })
    }

    /// From `ln(1 − p)`, which must be negative and finite.
    pub fn from_log_upper(log_upper: f64) -> Result<Self> {
        if !(log_upper < 0.0 && log_upper.is_finite()) {
            return domain(format!("log upper probability must be negative and finite, got {log_upper}"));
        }
        let lower = -log_upper.exp_m1();
        Ok(TailProb { lower, log_lower: (-log_upper.exp()).ln_1p(), log_upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }
    pub fn upper(&self) -> f64 {
        self.log_upper.exp()
    }
    pub fn log_lower(&self) -> f64 {
        self.log_lower
    }
    pub fn log_upper(&self) -> f64 {
        self.log_upper
    }
    fn use_upper(&self) -> bool {
        self.lower > 0.5
    }
}

/// A continuous law on the real line seen through log-density and log-tails.
pub trait LogScaleLaw {
    fn log_pdf(&self, y: f64) -> f64;
    fn log_cdf(&self, y: f64) -> f64;
    fn log_sf(&self, y: f64) -> f64;
}

/// NL law with tails by direct adaptive quadrature.
#[derive(Debug, Clone, Copy)]
pub struct DirectNl(pub DplnParams);

impl LogScaleLaw for DirectNl {
    fn log_pdf(&self, y: f64) -> f64 {
        nl_log_pdf(y, &self.0)
    }
    fn log_cdf(&self, y: f64) -> f64 {
        nl_log_cdf(y, &self.0)
    }
    fn log_sf(&self, y: f64) -> f64 {
        nl_log_sf(y, &self.0)
    }
}

/// Solve `F(y) = target` for `y`, starting from `init` and optionally inside
/// a known bracket.
pub fn solve_log_quantile<L: LogScaleLaw + ?Sized>(
    law: &L,
    target: TailProb,
    init: f64,
    bracket: Option<(f64, f64)>,
) -> Result<f64> {
    let upper = target.use_upper();
    // h is increasing in y and vanishes at the quantile
    let h = |y: f64| -> (f64, f64) {
        let lp = law.log_pdf(y);
        if upper {
            let ls = law.log_sf(y);
            (target.log_upper - ls, (lp - ls).exp())
        } else {
            let lc = law.log_cdf(y);
            (lc - target.log_lower, (lp - lc).exp())
        }
    };

    let (mut lo, mut hi) = match bracket {
        Some(b) => b,
        None => expand_bracket(&h, init)?,
    };
    let mut y = init.clamp(lo, hi);
    for _ in 0..MAX_NEWTON_STEPS {
        let (g, dg) = h(y);
        if g.abs() <= LOG_TOL {
            return Ok(y);
        }
        if g > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        if hi - lo <= 4.0 * f64::EPSILON * y.abs().max(1.0) {
            return Ok(y);
        }
        let newton = y - g / dg;
        y = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::Convergence { iterations: MAX_NEWTON_STEPS, lo: lo.exp(), hi: hi.exp() })
}

fn expand_bracket<H: Fn(f64) -> (f64, f64)>(h: &H, init: f64) -> Result<(f64, f64)> {
    let g0 = h(init).0;
    if g0 == 0.0 {
        return Ok((init, init));
    }
    let mut step = 1.0;
    let mut anchor = init;
    for _ in 0..64 {
        let probe = if g0 > 0.0 { anchor - step } else { anchor + step };
        let g = h(probe).0;
        if (g0 > 0.0 && g <= 0.0) || (g0 < 0.0 && g >= 0.0) {
            return Ok(if g0 > 0.0 { (probe, anchor) } else { (anchor, probe) });
        }
        anchor = probe;
        step *= 2.0;
    }
    Err(Error::Convergence { iterations: 64, lo: (init - step).exp(), hi: (init + step).exp() })
}

/// The `prob`-quantile of the dPlN law, `|F(t) − prob| ≤ 1e-10`.
///
/// Newton–Raphson starts from `init` when supplied, otherwise from the
/// lognormal(ν, τ²) quantile.
pub fn dpln_quantile(prob: f64, p: &DplnParams, init: Option<f64>) -> Result<f64> {
    let target = TailProb::from_lower(prob)?;
    let y0 = match init {
        Some(t) if t > 0.0 && t.is_finite() => t.ln(),
        Some(t) => return domain(format!("initial quantile guess must be positive, got {t}")),
        None => lognormal_log_quantile(prob, p),
    };
    solve_log_quantile(&DirectNl(*p), target, y0, None).map(f64::exp)
}

/// Tabulated log-cdf and log-survival of an NL law on a uniform grid of
/// `y`, built once per parameter vector so that many quantiles cost a few
/// 15-point panels each.
#[derive(Debug, Clone)]
pub struct NlCdfTable {
    params: DplnParams,
    y0: f64,
    step: f64,
    log_pdf: Vec<f64>,
    log_cdf: Vec<f64>,
    log_sf: Vec<f64>,
}

const MAX_PANELS: usize = 400_000;

impl NlCdfTable {
    /// A table reaching at least down to `F = exp(min_log_lower)` and up to
    /// `S = exp(min_log_upper)`.
    pub fn covering(params: DplnParams, min_log_lower: f64, min_log_upper: f64) -> Self {
        let p = &params;
        let tau = p.tau();
        let (a, b, nu, t2) = (p.alpha(), p.beta(), p.nu(), p.tau2());
        let mut step = 0.5 * tau.min(1.0 / a).min(1.0 / b);

        // exponential-tail asymptotes give the starting reach
        let lo_guess = nu + (min_log_lower - (a / (a + b)).ln() - 0.5 * b * b * t2) / b;
        let hi_guess = nu - (min_log_upper - (b / (a + b)).ln() - 0.5 * a * a * t2) / a;
        let mut y_lo = lo_guess.min(nu - 8.0 * tau) - 2.0 * tau;
        let mut y_hi = hi_guess.max(nu + 8.0 * tau) + 2.0 * tau;
        let mut width = nu - y_lo;
        while nl_log_cdf(y_lo, p) > min_log_lower {
            width *= 2.0;
            y_lo = nu - width;
        }
        let mut width = y_hi - nu;
        while nl_log_sf(y_hi, p) > min_log_upper {
            width *= 2.0;
            y_hi = nu + width;
        }

        let mut n = ((y_hi - y_lo) / step).ceil() as usize;
        if n > MAX_PANELS {
            n = MAX_PANELS;
        }
        n = n.max(1);
        step = (y_hi - y_lo) / n as f64;

        let ys: Vec<f64> = (0..=n).map(|k| y_lo + k as f64 * step).collect();
        let log_pdf: Vec<f64> = ys.iter().map(|&y| nl_log_pdf(y, p)).collect();
        let panel: Vec<f64> = (0..n)
            .map(|k| {
                let (l0, yk) = (log_pdf[k], ys[k]);
                let (v, _) = gk15(&|t: f64| (nl_log_pdf(yk + t, p) - l0).exp(), 0.0, step);
                l0 + v.ln()
            })
            .collect();
        let mut log_cdf = vec![0.0; n + 1];
        log_cdf[0] = nl_log_cdf(y_lo, p);
        for k in 0..n {
            log_cdf[k + 1] = log_add_exp(log_cdf[k], panel[k]);
        }
        let mut log_sf = vec![0.0; n + 1];
        log_sf[n] = nl_log_sf(y_hi, p);
        for k in (0..n).rev() {
            log_sf[k] = log_add_exp(log_sf[k + 1], panel[k]);
        }
        // both accumulations carry rounding; pin the far ends to zero
        for v in log_cdf.iter_mut().chain(log_sf.iter_mut()) {
            *v = v.min(0.0);
        }
        NlCdfTable { params, y0: y_lo, step, log_pdf, log_cdf, log_sf }
    }

    pub fn params(&self) -> &DplnParams {
        &self.params
    }

    /// The covered `[y_lo, y_hi]`.
    pub fn range(&self) -> (f64, f64) {
        (self.y0, self.node(self.log_pdf.len() - 1))
    }

    fn node(&self, k: usize) -> f64 {
        self.y0 + k as f64 * self.step
    }

    fn panel_of(&self, y: f64) -> Option<usize> {
        let n = self.log_pdf.len() - 1;
        let (lo, hi) = self.range();
        if !(y >= lo && y <= hi) {
            return None;
        }
        Some((((y - self.y0) / self.step).floor() as usize).min(n - 1))
    }

    fn partial(&self, k: usize, a: f64, b: f64) -> f64 {
        let (l0, yk) = (self.log_pdf[k], self.node(k));
        let p = &self.params;
        let (v, _) = gk15(&|t: f64| (nl_log_pdf(yk + t, p) - l0).exp(), a - yk, b - yk);
        if v > 0.0 {
            l0 + v.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Quantiles `ln t` for targets given in increasing order.
    pub fn log_quantiles(&self, targets: &[TailProb]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(targets.len());
        for t in targets {
            out.push(self.log_quantile(*t)?);
        }
        Ok(out)
    }

    pub fn log_quantile(&self, target: TailProb) -> Result<f64> {
        let n = self.log_pdf.len() - 1;
        // locate the bracketing panel
        let k = if target.use_upper() {
            // log_sf decreasing: last node with log_sf ≥ target
            let idx = self.log_sf.partition_point(|&v| v >= target.log_upper);
            if idx == 0 || idx > n {
                None
            } else {
                Some(idx - 1)
            }
        } else {
            let idx = self.log_cdf.partition_point(|&v| v < target.log_lower);
            if idx == 0 || idx > n {
                None
            } else {
                Some(idx - 1)
            }
        };
        match k {
            Some(k) => {
                let (a, b) = (self.node(k), self.node(k + 1));
                let (fa, fb) = if target.use_upper() {
                    (self.log_sf[k], self.log_sf[k + 1])
                } else {
                    (self.log_cdf[k], self.log_cdf[k + 1])
                };
                let goal = if target.use_upper() { target.log_upper } else { target.log_lower };
                let frac = if fb != fa { ((goal - fa) / (fb - fa)).clamp(0.0, 1.0) } else { 0.5 };
                solve_log_quantile(self, target, a + frac * (b - a), Some((a, b)))
            }
            None => {
                let guess = if target.use_upper() { self.range().1 } else { self.range().0 };
                solve_log_quantile(&DirectNl(self.params), target, guess, None)
            }
        }
    }
}

impl LogScaleLaw for NlCdfTable {
    fn log_pdf(&self, y: f64) -> f64 {
        nl_log_pdf(y, &self.params)
    }

    fn log_cdf(&self, y: f64) -> f64 {
        match self.panel_of(y) {
            Some(k) => log_add_exp(self.log_cdf[k], self.partial(k, self.node(k), y)),
            None => nl_log_cdf(y, &self.params),
        }
    }

    fn log_sf(&self, y: f64) -> f64 {
        match self.panel_of(y) {
            Some(k) => log_add_exp(self.log_sf[k + 1], self.partial(k, y, self.node(k + 1))),
            None => nl_log_sf(y, &self.params),
        }
    }
}
