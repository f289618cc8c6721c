//! Data-augmented Gibbs sampler for the Normal Laplace law.
//!
//! Each observation `y` on the log scale is split as `y = z + w` with
//! `z ~ N(ν, τ²)` and `w = e₁ − e₂`. Given the augmentation, (ν, τ²) follow
//! the normal/inverse-gamma conjugate update and α, β are gamma.

use crate::distribution::{dpln_pdf, nl_pdf, DplnParams, SampleBatch, Scale};
use crate::error::{domain, Error, Result};
use crate::rng::{self, Stream};
use crate::special::{log_mills_ratio_unchecked, normal_sf, normal_upper_quantile};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;

/// Hyperparameters of the semi-conjugate prior
/// `ν|τ² ~ N(m, τ²/k)`, `τ⁻² ~ G(a/2, b/2)`, `α ~ G(c_α, d_α)`, `β ~ G(c_β, d_β)`.
/// Gamma laws use the shape/rate convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub m: f64,
    pub k: f64,
    pub a: f64,
    pub b: f64,
    pub c_alpha: f64,
    pub d_alpha: f64,
    pub c_beta: f64,
    pub d_beta: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec { m: 0.0, k: 4.0, a: 1.0, b: 1.0, c_alpha: 1.0, d_alpha: 1.0, c_beta: 1.0, d_beta: 1.0 }
    }
}

impl PriorSpec {
    /// Rejects improper priors: everything but `m` must be positive.
    pub fn validate(&self) -> Result<()> {
        if !self.m.is_finite() {
            return domain("prior m must be finite");
        }
        let named = [
            ("k", self.k),
            ("a", self.a),
            ("b", self.b),
            ("c_alpha", self.c_alpha),
            ("d_alpha", self.d_alpha),
            ("c_beta", self.c_beta),
            ("d_beta", self.d_beta),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return domain(format!("prior {name} must be positive and finite (improper priors give an improper posterior), got {v}"));
            }
        }
        Ok(())
    }

    /// One θ from the prior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DplnParams> {
        self.validate()?;
        let prec = gamma(0.5 * self.a, 0.5 * self.b, rng);
        let tau2 = 1.0 / prec;
        let z: f64 = StandardNormal.sample(rng);
        let nu = self.m + (tau2 / self.k).sqrt() * z;
        let alpha = gamma(self.c_alpha, self.d_alpha, rng);
        let beta = gamma(self.c_beta, self.d_beta, rng);
        DplnParams::new(alpha, beta, nu, tau2)
    }
}

/// Run length, thinning and starting point of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub init: DplnParams,
}

pub const DEFAULT_ITERATIONS: usize = 500_000;
pub const DEFAULT_THIN: usize = 50;

impl GibbsConfig {
    /// 500,000 iterations, thin 50, 10% burn-in, started at [`default_init`].
    pub fn defaults_for(data: &SampleBatch, seed: u64) -> Result<Self> {
        Ok(GibbsConfig {
            iterations: DEFAULT_ITERATIONS,
            burn_in: DEFAULT_ITERATIONS / 10,
            thin: DEFAULT_THIN,
            seed,
            init: default_init(data)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return domain("thin must be at least 1");
        }
        if self.burn_in >= self.iterations {
            return domain(format!("burn-in {} must be below iterations {}", self.burn_in, self.iterations));
        }
        Ok(())
    }

    /// ⌊(iterations − burn_in)/thin⌋.
    pub fn draw_count(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// α = β = 0.5, ν at the log-data mean, τ² at half the log-data variance.
/// Starting with large α can make convergence very slow.
pub fn default_init(data: &SampleBatch) -> Result<DplnParams> {
    if data.is_empty() {
        return Err(Error::Precondition("no data".into()));
    }
    let y = data.to_log();
    let (mean, ss) = mean_ss(y.values());
    let n = y.len() as f64;
    let var = if n > 1.0 { ss / (n - 1.0) } else { 1.0 };
    DplnParams::new(0.5, 0.5, mean, (0.5 * var).max(1e-6))
}

/// The latent split of every observation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Augmentation {
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
}

impl Augmentation {
    fn resize(&mut self, n: usize) {
        self.z.resize(n, 0.0);
        self.w.resize(n, 0.0);
        self.e1.resize(n, 0.0);
        self.e2.resize(n, 0.0);
    }
}

/// Retained draws of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    draws: Vec<DplnParams>,
    config: GibbsConfig,
    prior: PriorSpec,
    data_digest: String,
}

impl Chain {
    pub fn new(draws: Vec<DplnParams>, config: GibbsConfig, prior: PriorSpec, data_digest: String) -> Result<Self> {
        config.validate()?;
        prior.validate()?;
        if draws.len() != config.draw_count() {
            return Err(Error::Precondition(format!(
                "chain holds {} draws but the config implies {}",
                draws.len(),
                config.draw_count()
            )));
        }
        Ok(Chain { draws, config, prior, data_digest })
    }

    /// A chain from bare draws, as if from a run with no burn-in or thinning.
    pub fn from_draws(draws: Vec<DplnParams>) -> Result<Self> {
        let init = *draws.first().ok_or_else(|| Error::Precondition("empty chain".into()))?;
        let config = GibbsConfig { iterations: draws.len(), burn_in: 0, thin: 1, seed: 0, init };
        Chain::new(draws, config, PriorSpec::default(), "none".into())
    }

    pub fn draws(&self) -> &[DplnParams] {
        &self.draws
    }
    pub fn config(&self) -> &GibbsConfig {
        &self.config
    }
    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }
    pub fn data_digest(&self) -> &str {
        &self.data_digest
    }
    pub fn len(&self) -> usize {
        self.draws.len()
    }
    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

/// Hex SHA-256 of the raw-scale values.
pub fn data_digest(data: &SampleBatch) -> String {
    let raw = data.to_raw();
    let mut h = Sha256::new();
    for v in raw.values() {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters").sample(rng)
}

fn mean_ss(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, ss)
}

const TAIL_SWITCH: f64 = 4.0;

/// X ~ N(0, 1) conditioned on X ≥ a. Inverse cdf up to a = 4, exponential
/// rejection beyond.
pub fn truncated_normal_upper<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a <= TAIL_SWITCH {
        let u = 1.0 - rng.random::<f64>();
        let x = normal_upper_quantile(u * normal_sf(a));
        x.max(a)
    } else {
        let lam = 0.5 * (a + (a * a + 4.0).sqrt());
        loop {
            let e: f64 = Exp1.sample(rng);
            let x = a + e / lam;
            let d = x - lam;
            if rng.random::<f64>() <= (-0.5 * d * d).exp() {
                return x;
            }
        }
    }
}

/// `lower + Exp(rate)`.
pub fn truncated_exponential<R: Rng + ?Sized>(lower: f64, rate: f64, rng: &mut R) -> f64 {
    let e: f64 = Exp1.sample(rng);
    lower + e / rate
}

/// The standardized truncation points `(y_α, y_β)` of the z-conditional.
pub fn truncation_points(y: f64, p: &DplnParams) -> (f64, f64) {
    let tau = p.tau();
    let u = (y - p.nu()) / tau;
    (p.alpha() * tau - u, p.beta() * tau + u)
}

/// P(z ≥ y | y, θ) = R(y_β) / (R(y_α) + R(y_β)).
pub fn z_upper_weight(y: f64, p: &DplnParams) -> f64 {
    let (ya, yb) = truncation_points(y, p);
    let la = log_mills_ratio_unchecked(ya);
    let lb = log_mills_ratio_unchecked(yb);
    1.0 / (1.0 + (la - lb).exp())
}

/// Draw z from its conditional given y: a two-component mixture of
/// truncated normals, one on `[y, ∞)` and one on `(−∞, y)`.
pub fn sample_z_given_y<R: Rng + ?Sized>(y: f64, p: &DplnParams, rng: &mut R) -> f64 {
    let tau = p.tau();
    let (ya, yb) = truncation_points(y, p);
    let la = log_mills_ratio_unchecked(ya);
    let lb = log_mills_ratio_unchecked(yb);
    let upper = 1.0 / (1.0 + (la - lb).exp());
    if rng.random::<f64>() < upper {
        let x = truncated_normal_upper(yb, rng);
        (p.nu() - p.tau2() * p.beta() + tau * x).max(y)
    } else {
        let x = truncated_normal_upper(ya, rng);
        (p.nu() + p.tau2() * p.alpha() - tau * x).min(y)
    }
}

/// Draw e₁ given w: `max(w, 0) + Exp(α + β)`.
pub fn sample_e1_given_w<R: Rng + ?Sized>(w: f64, alpha: f64, beta: f64, rng: &mut R) -> Result<f64> {
    if !(alpha > 0.0 && beta > 0.0) {
        return domain(format!("rates must be positive, got alpha = {alpha}, beta = {beta}"));
    }
    if !w.is_finite() {
        return domain(format!("w must be finite, got {w}"));
    }
    let e1 = truncated_exponential(w.max(0.0), alpha + beta, rng);
    // e₁ > max(w, 0) must hold strictly
    Ok(if e1 > w.max(0.0) { e1 } else { next_up(w.max(0.0)) })
}

fn next_up(x: f64) -> f64 {
    if x == 0.0 {
        f64::MIN_POSITIVE
    } else {
        f64::from_bits(x.to_bits() + 1)
    }
}

/// Parameters of the (ν, τ²) conditional given z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuTauConditional {
    /// (km + n z̄)/(k + n).
    pub nu_mean: f64,
    /// k + n, so that ν | τ² ~ N(nu_mean, τ²/(k + n)).
    pub nu_precision_scale: f64,
    /// (a + n)/2.
    pub shape: f64,
    /// (b + (n−1)s² + kn/(k+n)(m − z̄)²)/2.
    pub rate: f64,
}

pub fn nu_tau_conditional(z: &[f64], prior: &PriorSpec) -> Result<NuTauConditional> {
    if z.is_empty() {
        return Err(Error::Precondition("z is empty".into()));
    }
    let n = z.len() as f64;
    let (zbar, ss) = mean_ss(z);
    Ok(nu_tau_from_stats(n, zbar, ss, prior))
}

fn nu_tau_from_stats(n: f64, zbar: f64, ss: f64, prior: &PriorSpec) -> NuTauConditional {
    let k = prior.k;
    let d = prior.m - zbar;
    NuTauConditional {
        nu_mean: (k * prior.m + n * zbar) / (k + n),
        nu_precision_scale: k + n,
        shape: 0.5 * (prior.a + n),
        rate: 0.5 * (prior.b + ss + k * n / (k + n) * d * d),
    }
}

fn draw_nu_tau<R: Rng + ?Sized>(c: &NuTauConditional, rng: &mut R) -> (f64, f64) {
    let tau2 = 1.0 / gamma(c.shape, c.rate, rng);
    let x: f64 = StandardNormal.sample(rng);
    (c.nu_mean + (tau2 / c.nu_precision_scale).sqrt() * x, tau2)
}

/// τ⁻² from its gamma conditional, then ν given τ².
pub fn update_nu_tau<R: Rng + ?Sized>(z: &[f64], prior: &PriorSpec, rng: &mut R) -> Result<(f64, f64)> {
    let c = nu_tau_conditional(z, prior)?;
    Ok(draw_nu_tau(&c, rng))
}

/// α ~ G(c_α + n, d_α + Σe₁), β ~ G(c_β + n, d_β + Σe₂).
pub fn update_alpha_beta<R: Rng + ?Sized>(e1: &[f64], e2: &[f64], prior: &PriorSpec, rng: &mut R) -> Result<(f64, f64)> {
    if e1.is_empty() || e2.is_empty() {
        return Err(Error::Precondition("e1 and e2 must be nonempty".into()));
    }
    if e1.len() != e2.len() {
        return Err(Error::Precondition("e1 and e2 differ in length".into()));
    }
    if e1.iter().chain(e2).any(|e| !(*e > 0.0)) {
        return domain("exponential components must be positive");
    }
    let n = e1.len() as f64;
    let s1: f64 = e1.iter().sum();
    let s2: f64 = e2.iter().sum();
    let alpha = gamma(prior.c_alpha + n, prior.d_alpha + s1, rng);
    let beta = gamma(prior.c_beta + n, prior.d_beta + s2, rng);
    Ok((alpha, beta))
}

/// Redraw the augmentation for every log observation `y`.
pub fn augment<R: Rng + ?Sized>(y: &[f64], p: &DplnParams, aug: &mut Augmentation, rng: &mut R) {
    aug.resize(y.len());
    let rate = p.alpha() + p.beta();
    for (i, &yi) in y.iter().enumerate() {
        let z = sample_z_given_y(yi, p, rng);
        let w = yi - z;
        let lo = w.max(0.0);
        let mut e1 = truncated_exponential(lo, rate, rng);
        if e1 <= lo {
            e1 = next_up(lo);
        }
        aug.z[i] = z;
        aug.w[i] = w;
        aug.e1[i] = e1;
        aug.e2[i] = e1 - w;
    }
}

/// One full sweep: augmentation, then (ν, τ²), then (α, β).
pub fn gibbs_step<R: Rng + ?Sized>(
    y: &[f64],
    p: &DplnParams,
    prior: &PriorSpec,
    aug: &mut Augmentation,
    rng: &mut R,
) -> Result<DplnParams> {
    augment(y, p, aug, rng);
    let (nu, tau2) = update_nu_tau(&aug.z, prior, rng)?;
    let (alpha, beta) = update_alpha_beta(&aug.e1, &aug.e2, prior, rng)?;
    DplnParams::new(alpha, beta, nu, tau2)
}

/// Run one chain. Raw data are log-transformed first.
pub fn run_gibbs(data: &SampleBatch, prior: &PriorSpec, cfg: &GibbsConfig) -> Result<Chain> {
    run_with(data, prior, cfg, rng::root(cfg.seed))
}

/// `n_chains` chains, chain `i` on sub-stream `i` of the seed.
pub fn run_chains(data: &SampleBatch, prior: &PriorSpec, cfg: &GibbsConfig, n_chains: usize) -> Result<Vec<Chain>> {
    (0..n_chains)
        .into_par_iter()
        .map(|i| run_with(data, prior, cfg, rng::substream(cfg.seed, i as u64)))
        .collect()
}

fn run_with(data: &SampleBatch, prior: &PriorSpec, cfg: &GibbsConfig, mut rng: Stream) -> Result<Chain> {
    if data.is_empty() {
        return Err(Error::Precondition("no data".into()));
    }
    prior.validate()?;
    cfg.validate()?;
    let y = data.to_log();
    let y = y.values();
    let mut aug = Augmentation::default();
    let mut p = cfg.init;
    let mut draws = Vec::with_capacity(cfg.draw_count());
    for t in 0..cfg.iterations {
        p = gibbs_step(y, &p, prior, &mut aug, &mut rng)?;
        if t >= cfg.burn_in && (t - cfg.burn_in + 1) % cfg.thin == 0 {
            draws.push(p);
        }
    }
    Chain::new(draws, *cfg, *prior, data_digest(data))
}

/// Posterior means, equal-tailed 95% intervals and correlations, in the
/// order (α, β, ν, τ²).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorSummary {
    pub n_draws: usize,
    pub mean: [f64; 4],
    pub ci95: [[f64; 2]; 4],
    pub correlation: [[f64; 4]; 4],
    /// Components with zero posterior variance; their correlations are
    /// reported as 1 on the diagonal and 0 elsewhere.
    pub zero_variance: [bool; 4],
}

pub const PARAM_NAMES: [&str; 4] = ["alpha", "beta", "nu", "tau2"];

/// Linearly interpolated empirical quantile of sorted values.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(draws: &[DplnParams]) -> Result<PosteriorSummary> {
    if draws.is_empty() {
        return Err(Error::Precondition("empty chain".into()));
    }
    let n = draws.len() as f64;
    let cols: Vec<Vec<f64>> = (0..4).map(|j| draws.iter().map(|d| d.to_array()[j]).collect()).collect();
    let mut mean = [0.0; 4];
    let mut ci95 = [[0.0; 2]; 4];
    let mut sd = [0.0; 4];
    for j in 0..4 {
        let (m, ss) = mean_ss(&cols[j]);
        mean[j] = m;
        sd[j] = (ss / n).sqrt();
        let mut s = cols[j].clone();
        s.sort_by(f64::total_cmp);
        ci95[j] = [empirical_quantile(&s, 0.025), empirical_quantile(&s, 0.975)];
    }
    let zero_variance = sd.map(|s| s == 0.0 || s <= 1e-15 * 1.0f64.max(s));
    let mut correlation = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            correlation[i][j] = if i == j {
                1.0
            } else if zero_variance[i] || zero_variance[j] {
                0.0
            } else {
                let cov = cols[i].iter().zip(&cols[j]).map(|(a, b)| (a - mean[i]) * (b - mean[j])).sum::<f64>() / n;
                (cov / (sd[i] * sd[j])).clamp(-1.0, 1.0)
            };
        }
    }
    Ok(PosteriorSummary { n_draws: draws.len(), mean, ci95, correlation, zero_variance })
}

/// Posterior predictive density: the average of the density over draws, on
/// the log scale (`f_Y`) or the raw scale (`f_X`).
pub fn predictive_density(draws: &[DplnParams], grid: &[f64], scale: Scale) -> Result<Vec<f64>> {
    if draws.is_empty() {
        return Err(Error::Precondition("empty chain".into()));
    }
    let t = draws.len() as f64;
    grid.par_iter()
        .map(|&x| {
            let mut acc = 0.0;
            for d in draws {
                acc += match scale {
                    Scale::Log => nl_pdf(x, d),
                    Scale::Raw => dpln_pdf(x, d)?,
                };
            }
            Ok(acc / t)
        })
        .collect()
}

/// Draws from the conjugate posterior `G(shape + n, rate + Σ durations)` of an
/// exponential rate.
pub fn fit_exponential_rate<R: Rng + ?Sized>(
    durations: &[f64],
    prior_shape: f64,
    prior_rate: f64,
    rng: &mut R,
    n_draws: usize,
) -> Result<Vec<f64>> {
    if durations.is_empty() {
        return Err(Error::Precondition("no durations".into()));
    }
    if let Some(d) = durations.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return domain(format!("durations must be positive, got {d}"));
    }
    if !(prior_shape > 0.0 && prior_rate > 0.0) {
        return domain("gamma prior parameters must be positive");
    }
    let shape = prior_shape + durations.len() as f64;
    let rate = prior_rate + durations.iter().sum::<f64>();
    Ok((0..n_draws).map(|_| gamma(shape, rate, rng)).collect())
}

/// Chain text: `#` header lines, a column line, then one draw per row.
pub fn write_chain(chain: &Chain) -> String {
    let p = chain.prior;
    let c = chain.config;
    let i = c.init;
    let mut s = String::new();
    let _ = writeln!(s, "# dpln-chain");
    let _ = writeln!(
        s,
        "# prior m={} k={} a={} b={} c_alpha={} d_alpha={} c_beta={} d_beta={}",
        p.m, p.k, p.a, p.b, p.c_alpha, p.d_alpha, p.c_beta, p.d_beta
    );
    let _ = writeln!(s, "# config iterations={} burn_in={} thin={} seed={}", c.iterations, c.burn_in, c.thin, c.seed);
    let _ = writeln!(s, "# init alpha={} beta={} nu={} tau2={}", i.alpha(), i.beta(), i.nu(), i.tau2());
    let _ = writeln!(s, "# data_digest={}", chain.data_digest);
    let _ = writeln!(s, "alpha\tbeta\tnu\ttau2");
    for d in &chain.draws {
        let _ = writeln!(s, "{}\t{}\t{}\t{}", d.alpha(), d.beta(), d.nu(), d.tau2());
    }
    s
}

fn header_map(line: &str) -> std::collections::HashMap<String, String> {
    line.split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// Parse the draw rows of a chain file. Header lines are skipped, so any
/// four-column `alpha beta nu tau2` table is accepted.
pub fn read_draws(text: &str) -> Result<Vec<DplnParams>> {
    let mut draws = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("alpha") {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line: Some(idx + 1), msg };
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|f| f.parse::<f64>().map_err(|e| parse_err(format!("{f:?}: {e}"))))
            .collect::<Result<_>>()?;
        if vals.len() != 4 {
            return Err(parse_err(format!("expected 4 columns, found {}", vals.len())));
        }
        draws.push(DplnParams::new(vals[0], vals[1], vals[2], vals[3]).map_err(|e| parse_err(e.to_string()))?);
    }
    if draws.is_empty() {
        return Err(Error::Parse { line: None, msg: "chain has no draws".into() });
    }
    Ok(draws)
}

/// Parse a chain written by [`write_chain`], header included.
pub fn read_chain(text: &str) -> Result<Chain> {
    let mut prior = None;
    let mut config = None;
    let mut init = None;
    let mut digest = String::from("none");
    let num = |m: &std::collections::HashMap<String, String>, k: &str| -> Result<f64> {
        m.get(k)
            .ok_or_else(|| Error::Parse { line: None, msg: format!("header is missing {k}") })?
            .parse::<f64>()
            .map_err(|e| Error::Parse { line: None, msg: format!("{k}: {e}") })
    };
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let body = line.trim_start_matches('#').trim();
        let m = header_map(body);
        if body.starts_with("prior ") {
            prior = Some(PriorSpec {
                m: num(&m, "m")?,
                k: num(&m, "k")?,
                a: num(&m, "a")?,
                b: num(&m, "b")?,
                c_alpha: num(&m, "c_alpha")?,
                d_alpha: num(&m, "d_alpha")?,
                c_beta: num(&m, "c_beta")?,
                d_beta: num(&m, "d_beta")?,
            });
        } else if body.starts_with("config ") {
            config = Some((
                num(&m, "iterations")? as usize,
                num(&m, "burn_in")? as usize,
                num(&m, "thin")? as usize,
                m.get("seed").and_then(|s| s.parse::<u64>().ok()).unwrap_or(0),
            ));
        } else if body.starts_with("init ") {
            init = Some(DplnParams::new(num(&m, "alpha")?, num(&m, "beta")?, num(&m, "nu")?, num(&m, "tau2")?)?);
        } else if let Some(d) = m.get("data_digest") {
            digest = d.clone();
        }
    }
    let draws = read_draws(text)?;
    match (prior, config, init) {
        (Some(prior), Some((iterations, burn_in, thin, seed)), Some(init)) => {
            Chain::new(draws, GibbsConfig { iterations, burn_in, thin, seed, init }, prior, digest)
        }
        _ => Err(Error::Parse { line: None, msg: "chain header incomplete (need prior, config, init)".into() }),
    }
}
