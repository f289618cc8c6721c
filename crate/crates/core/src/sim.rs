//! Discrete-event simulation of the single-server FIFO queue and of the
//! risk process, used as ground truth for the analytic results.

use crate::distribution::{dpln_moment, sample_nl_one, DplnParams};
use crate::error::{domain, Error, Result};
use crate::rng;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::collections::VecDeque;
use std::fmt::Write as _;

/// Interarrival or service law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum Law {
    Exponential { rate: f64 },
    Dpln { params: DplnParams },
    Deterministic { value: f64 },
}

impl Law {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Law::Exponential { rate } if !(rate > 0.0 && rate.is_finite()) => {
                domain(format!("exponential rate must be positive, got {rate}"))
            }
            Law::Deterministic { value } if !(value > 0.0 && value.is_finite()) => {
                domain(format!("deterministic duration must be positive, got {value}"))
            }
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Law::Exponential { rate } => {
                let e: f64 = Exp1.sample(rng);
                e / rate
            }
            Law::Dpln { params } => sample_nl_one(params, rng).exp(),
            Law::Deterministic { value } => *value,
        }
    }

    /// Mean duration, infinite for dPlN with α ≤ 1.
    pub fn mean(&self) -> f64 {
        match self {
            Law::Exponential { rate } => 1.0 / rate,
            Law::Dpln { params } => dpln_moment(1.0, params).unwrap_or(f64::INFINITY),
            Law::Deterministic { value } => *value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_customers: usize,
    pub warmup: usize,
    pub seed: u64,
    pub arrival: Law,
    pub service: Law,
}

impl SimConfig {
    /// Warmup defaults to 10% of the customers.
    pub fn new(n_customers: usize, seed: u64, arrival: Law, service: Law) -> Self {
        SimConfig { n_customers, warmup: n_customers / 10, seed, arrival, service }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup >= self.n_customers {
            return domain(format!("warmup {} must be below n_customers {}", self.warmup, self.n_customers));
        }
        self.arrival.validate()?;
        self.service.validate()
    }
}

/// Batches used for batch-means standard errors.
pub const BATCHES: usize = 20;

/// Mean and batch-means standard error of a correlated sequence.
pub fn batch_means(xs: &[f64], batches: usize) -> (f64, f64) {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let len = n / batches;
    if batches < 2 || len == 0 {
        return (mean, f64::NAN);
    }
    let bm: Vec<f64> = (0..batches).map(|b| xs[b * len..(b + 1) * len].iter().sum::<f64>() / len as f64).collect();
    let m = bm.iter().sum::<f64>() / batches as f64;
    let var = bm.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub config: SimConfig,
    /// W_q of every customer after warmup.
    pub waiting_times: Vec<f64>,
    /// `queue_counts[n]`: arrivals after warmup that found `n` in the system.
    pub queue_counts: Vec<u64>,
    /// Number in system seen by each post-warmup arrival, in order.
    pub queue_seen: Vec<u32>,
    /// Busy fraction of the post-warmup period.
    pub utilization: f64,
    pub utilization_se: f64,
    pub mean_wait: f64,
    pub mean_wait_se: f64,
}

/// Lindley recursion `W_{n+1} = max(0, W_n + S_n − A_{n+1})`. Arrivals and
/// services use separate sub-streams of the seed, so changing one law
/// leaves the other sequence untouched.
pub fn simulate(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let mut arr_rng = rng::substream(cfg.seed, 0);
    let mut svc_rng = rng::substream(cfg.seed, 1);
    let keep = cfg.n_customers - cfg.warmup;
    let mut waits = Vec::with_capacity(keep);
    let mut counts: Vec<u64> = Vec::new();
    let mut seen = Vec::with_capacity(keep);
    let mut departures: VecDeque<f64> = VecDeque::new();
    let mut busy = Vec::with_capacity(keep);
    let mut spans = Vec::with_capacity(keep);

    let mut clock = 0.0;
    let mut w = 0.0;
    let mut prev_service = 0.0;
    for n in 0..cfg.n_customers {
        let a = if n == 0 { 0.0 } else { cfg.arrival.sample(&mut arr_rng) };
        clock += a;
        if n > 0 {
            w = f64::max(0.0, w + prev_service - a);
        }
        let s = cfg.service.sample(&mut svc_rng);
        while departures.front().is_some_and(|&d| d <= clock) {
            departures.pop_front();
        }
        if n >= cfg.warmup {
            let k = departures.len();
            if counts.len() <= k {
                counts.resize(k + 1, 0);
            }
            counts[k] += 1;
            seen.push(k as u32);
            waits.push(w);
            busy.push(s);
            spans.push(a);
        }
        departures.push_back(clock + w + s);
        prev_service = s;
    }
    let (mean_wait, mean_wait_se) = batch_means(&waits, BATCHES);
    let (utilization, utilization_se) = ratio_batch_means(&busy, &spans, BATCHES);
    Ok(SimResult { config: *cfg, waiting_times: waits, queue_counts: counts, queue_seen: seen, utilization, utilization_se, mean_wait, mean_wait_se })
}

/// Σx/Σy with a batch-means standard error.
fn ratio_batch_means(x: &[f64], y: &[f64], batches: usize) -> (f64, f64) {
    let total = x.iter().sum::<f64>() / y.iter().sum::<f64>();
    let len = x.len() / batches;
    if len == 0 {
        return (total, f64::NAN);
    }
    let r: Vec<f64> = (0..batches)
        .map(|b| {
            let sl = b * len..(b + 1) * len;
            x[sl.clone()].iter().sum::<f64>() / y[sl].iter().sum::<f64>()
        })
        .collect();
    let m = r.iter().sum::<f64>() / batches as f64;
    let var = r.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (batches - 1) as f64;
    (total, (var / batches as f64).sqrt())
}

impl SimResult {
    /// Histogram of the number seen by every `stride`-th arrival. Successive
    /// arrivals see strongly correlated counts; thinning makes them close
    /// to independent for goodness-of-fit tests.
    pub fn thinned_counts(&self, stride: usize) -> Vec<u64> {
        let mut out: Vec<u64> = Vec::new();
        for &k in self.queue_seen.iter().step_by(stride.max(1)) {
            let k = k as usize;
            if out.len() <= k {
                out.resize(k + 1, 0);
            }
            out[k] += 1;
        }
        out
    }

    /// Lag-`h` autocorrelation of the counts seen by arrivals.
    pub fn queue_autocorrelation(&self, h: usize) -> f64 {
        let x: Vec<f64> = self.queue_seen.iter().map(|&k| k as f64).collect();
        let n = x.len();
        if h >= n {
            return f64::NAN;
        }
        let m = x.iter().sum::<f64>() / n as f64;
        let var: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
        let cov: f64 = (0..n - h).map(|i| (x[i] - m) * (x[i + h] - m)).sum();
        cov / var
    }

    /// Empirical P(W_q ≤ t).
    pub fn wait_ecdf(&self, grid: &[f64]) -> Vec<f64> {
        let mut s = self.waiting_times.clone();
        s.sort_by(f64::total_cmp);
        let n = s.len() as f64;
        grid.iter().map(|&t| s.partition_point(|&x| x <= t) as f64 / n).collect()
    }

    /// `n<TAB>count` rows, then a summary comment.
    pub fn export_histogram(&self) -> String {
        let mut out = String::new();
        let c = &self.config;
        let _ = writeln!(out, "# simulate n_customers={} warmup={} seed={}", c.n_customers, c.warmup, c.seed);
        let _ = writeln!(out, "# arrival={:?}", c.arrival);
        let _ = writeln!(out, "# service={:?}", c.service);
        let _ = writeln!(
            out,
            "# utilization={} utilization_se={} mean_wait={} mean_wait_se={}",
            self.utilization, self.utilization_se, self.mean_wait, self.mean_wait_se
        );
        let _ = writeln!(out, "n\tcount");
        for (n, k) in self.queue_counts.iter().enumerate() {
            let _ = writeln!(out, "{n}\t{k}");
        }
        out
    }

    /// One post-warmup waiting time per row.
    pub fn export_waits(&self) -> String {
        let mut out = String::with_capacity(self.waiting_times.len() * 20);
        out.push_str("wait\n");
        for w in &self.waiting_times {
            let _ = writeln!(out, "{w}");
        }
        out
    }
}

/// Pearson chi-square test of a histogram against geometric `(1 − r)rⁿ`.
/// Cells run from 0 while their expected count stays at least 5; the rest
/// is pooled into one tail cell. Returns (statistic, degrees of freedom,
/// p-value).
pub fn geometric_chi_square(counts: &[u64], r: f64) -> Result<(f64, usize, f64)> {
    if !(r > 0.0 && r < 1.0) {
        return domain(format!("geometric parameter must lie in (0, 1), got {r}"));
    }
    let n = counts.iter().sum::<u64>() as f64;
    if n == 0.0 {
        return Err(Error::Precondition("empty histogram".into()));
    }
    let mut stat = 0.0;
    let mut k = 0usize;
    // keep cell k while the pooled tail beyond it still expects ≥ 5
    while n * r.powi(k as i32 + 1) >= 5.0 {
        let e = n * (1.0 - r) * r.powi(k as i32);
        let o = counts.get(k).copied().unwrap_or(0) as f64;
        stat += (o - e) * (o - e) / e;
        k += 1;
    }
    if k == 0 {
        return Err(Error::Precondition("too few observations for a chi-square test".into()));
    }
    let e = n * r.powi(k as i32);
    let o = counts.iter().skip(k).sum::<u64>() as f64;
    stat += (o - e) * (o - e) / e;
    let df = k;
    let p = 1.0 - ChiSquared::new(df as f64).expect("positive df").cdf(stat);
    Ok((stat, df, p))
}

/// sup |empirical − model| over grid points, both given as cdf values.
pub fn ks_on_grid(empirical: &[f64], model: &[f64]) -> f64 {
    empirical.iter().zip(model).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Empirical ruin frequencies of `u + t − ΣCᵢ` observed up to a horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuinSimResult {
    pub u: Vec<f64>,
    /// Fraction of paths ruined before the horizon; biased low for ψ(u).
    pub frequency: Vec<f64>,
    /// Binomial standard error of each frequency.
    pub se: Vec<f64>,
    pub n_paths: usize,
    pub horizon: f64,
}

const RUIN_CHUNKS: usize = 64;

/// Simulate `n_paths` risk processes with Poisson(λ) claims and unit premium
/// rate up to `horizon`. Ruin can only happen at claim instants, so each
/// path reduces to the running maximum of Σ(Cᵢ − Tᵢ).
pub fn simulate_ruin(lambda: f64, claims: &Law, u: &[f64], n_paths: usize, horizon: f64, seed: u64) -> Result<RuinSimResult> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return domain(format!("lambda must be positive, got {lambda}"));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return domain("horizon must be positive and finite");
    }
    if n_paths == 0 {
        return Err(Error::Precondition("n_paths must be at least 1".into()));
    }
    if u.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
        return domain("initial reserves must be nonnegative");
    }
    claims.validate()?;
    let per = n_paths.div_ceil(RUIN_CHUNKS);
    let maxima: Vec<f64> = (0..RUIN_CHUNKS)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut r = rng::substream(seed, c as u64);
            let count = per.min(n_paths.saturating_sub(c * per));
            (0..count).map(move |_| path_max(lambda, claims, horizon, &mut r)).collect::<Vec<_>>()
        })
        .collect();
    let n = maxima.len() as f64;
    let frequency: Vec<f64> = u.iter().map(|&x| maxima.iter().filter(|&&m| m > x).count() as f64 / n).collect();
    let se = frequency.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect();
    Ok(RuinSimResult { u: u.to_vec(), frequency, se, n_paths, horizon })
}

fn path_max<R: Rng + ?Sized>(lambda: f64, claims: &Law, horizon: f64, rng: &mut R) -> f64 {
    let mut t = 0.0;
    let mut s = 0.0;
    let mut best = f64::NEG_INFINITY;
    loop {
        let e: f64 = Exp1.sample(rng);
        let gap = e / lambda;
        t += gap;
        if t > horizon {
            return best;
        }
        s += claims.sample(rng) - gap;
        best = best.max(s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mm1(n: usize, seed: u64) -> SimConfig {
        SimConfig::new(n, seed, Law::Exponential { rate: 1.0 }, Law::Exponential { rate: 2.0 })
    }

    #[test]
    fn mm1_mean_wait() {
        let r = simulate(&mm1(1_000_000, 1)).unwrap();
        assert!((r.mean_wait - 0.5).abs() < 3.0 * r.mean_wait_se, "{} ± {}", r.mean_wait, r.mean_wait_se);
        assert!((r.utilization - 0.5).abs() < 3.0 * r.utilization_se);
        assert_eq!(r.queue_counts.iter().sum::<u64>(), 900_000);
        assert_eq!(r.waiting_times.len(), 900_000);
    }

    #[test]
    fn mm1_queue_seen_by_arrival_is_geometric() {
        // PASTA: arrivals see the time-stationary law (1 − ρ)ρⁿ
        let r = simulate(&mm1(1_000_000, 2)).unwrap();
        let n = r.queue_counts.iter().sum::<u64>() as f64;
        for k in 0..4 {
            let p = 0.5 * 0.5f64.powi(k as i32);
            assert!((r.queue_counts[k] as f64 / n - p).abs() < 0.01);
        }
    }

    #[test]
    fn reproducible() {
        let a = simulate(&mm1(10_000, 5)).unwrap();
        let b = simulate(&mm1(10_000, 5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.export_histogram(), b.export_histogram());
        assert_ne!(a, simulate(&mm1(10_000, 6)).unwrap());
    }

    #[test]
    fn lindley_monotone_in_service() {
        let slow = SimConfig::new(20_000, 3, Law::Exponential { rate: 1.0 }, Law::Exponential { rate: 1.5 });
        let fast = SimConfig { service: Law::Exponential { rate: 3.0 }, ..slow };
        let a = simulate(&slow).unwrap();
        let b = simulate(&fast).unwrap();
        assert!(a.waiting_times.iter().zip(&b.waiting_times).all(|(x, y)| x >= y));
    }

    #[test]
    fn warmup_insensitive() {
        let base = mm1(400_000, 8);
        let a = simulate(&base).unwrap();
        let b = simulate(&SimConfig { warmup: 2 * base.warmup, ..base }).unwrap();
        let se = (a.mean_wait_se.powi(2) + b.mean_wait_se.powi(2)).sqrt();
        assert!((a.mean_wait - b.mean_wait).abs() < 2.0 * se);
    }

    #[test]
    fn deterministic_service_dd1() {
        let cfg = SimConfig::new(1000, 0, Law::Deterministic { value: 2.0 }, Law::Deterministic { value: 1.0 });
        let r = simulate(&cfg).unwrap();
        assert!(r.waiting_times.iter().all(|&w| w == 0.0));
        assert_eq!(r.queue_counts, vec![900]);
        assert!((r.utilization - 0.5).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let bad = SimConfig { warmup: 10, ..mm1(10, 0) };
        assert!(simulate(&bad).is_err());
        let bad = SimConfig { arrival: Law::Exponential { rate: -1.0 }, ..mm1(10, 0) };
        assert!(simulate(&bad).is_err());
    }

    #[test]
    fn ruin_at_zero_reserve_equals_load() {
        let r = simulate_ruin(1.0, &Law::Exponential { rate: 2.0 }, &[0.0, 0.5, 1.0, 3.0], 20_000, 2000.0, 11).unwrap();
        assert!((r.frequency[0] - 0.5).abs() < 0.01, "{}", r.frequency[0]);
        assert!(r.frequency.windows(2).all(|w| w[1] <= w[0]));
        // ψ(u) = ρ e^{−(μ−λ)u} for exponential claims
        for (u, f) in r.u.iter().zip(&r.frequency) {
            let exact = 0.5 * (-u).exp();
            assert!((f - exact).abs() < 0.01 + 1e-3, "u = {u}: {f} vs {exact}");
        }
    }

    #[test]
    fn ruin_rejects_bad_inputs() {
        let law = Law::Exponential { rate: 2.0 };
        assert!(simulate_ruin(0.0, &law, &[0.0], 10, 1.0, 0).is_err());
        assert!(simulate_ruin(1.0, &law, &[-1.0], 10, 1.0, 0).is_err());
        assert!(simulate_ruin(1.0, &law, &[0.0], 0, 1.0, 0).is_err());
        assert!(simulate_ruin(1.0, &law, &[0.0], 10, f64::INFINITY, 0).is_err());
    }

    #[test]
    fn law_serde_round_trip() {
        let law = Law::Dpln { params: DplnParams::new(3.0, 2.0, 0.0, 0.25).unwrap() };
        let text = serde_json::to_string(&law).unwrap();
        assert_eq!(serde_json::from_str::<Law>(&text).unwrap(), law);
        assert!(serde_json::from_str::<Law>(r#"{"law":"dpln","params":{"alpha":-1,"beta":1,"nu":0,"tau2":1}}"#).is_err());
    }

    #[test]
    fn chi_square_accepts_matching_geometric() {
        let r: f64 = 0.4;
        let n: f64 = 100_000.0;
        let counts: Vec<u64> = (0..30).map(|k| (n * (1.0 - r) * r.powi(k)).round() as u64).collect();
        let (stat, df, p) = geometric_chi_square(&counts, r).unwrap();
        assert!(stat < 1.0 && p > 0.99, "{stat} {df} {p}");
        let (_, _, p) = geometric_chi_square(&counts, 0.45).unwrap();
        assert!(p < 1e-6);
        assert!(geometric_chi_square(&[], r).is_err());
    }

    #[test]
    fn mm1_thinned_histogram_passes_chi_square() {
        let r = simulate(&mm1(500_000, 12)).unwrap();
        assert!(r.queue_autocorrelation(1) > 0.3);
        assert!(r.queue_autocorrelation(40).abs() < 0.02);
        let (_, _, p) = geometric_chi_square(&r.thinned_counts(25), 0.5).unwrap();
        assert!(p > 0.01, "p = {p}");
    }
}
