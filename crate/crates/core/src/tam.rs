//! Transform approximation method (TAM).
//!
//! A law is replaced by `N` of its quantiles `tᵢ` with trapezoid-style weights
//! `wᵢ`, and its Laplace–Stieltjes transform by `Σ wᵢ e^{−s tᵢ}`. Quantile
//! probabilities follow a hybrid schedule: a uniform block covering the body
//! up to a split probability, then a geometric block whose upper-tail masses
//! shrink like `qʲ`.
//!
//! Geometric tail probabilities routinely fall below `f64` resolution near
//! one, so schedules, points and weights are carried in log form.

use crate::distribution::{dpln_moment, DplnParams};
use crate::error::{domain, Error, Result};
use crate::quantile::{NlCdfTable, TailProb};
use crate::special::{log_add_exp, log_sub_exp, log_sum_exp};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::LN_2;
use std::fmt::Write as _;

/// Calibration residual the grid search aims for.
pub const TARGET_RESIDUAL: f64 = 1e-3;
/// Default number of support points.
pub const DEFAULT_N: usize = 1000;

/// A law the TAM can discretize.
pub trait TamSource: Sync {
    /// `ln tᵢ` for targets in increasing order.
    fn log_quantiles(&self, targets: &[TailProb]) -> Result<Vec<f64>>;
    /// E[X], `None` when infinite.
    fn mean(&self) -> Option<f64>;
    /// P(X ≤ t).
    fn cdf(&self, t: f64) -> f64;

    /// Schedule split: P(X ≤ E[X]) when the mean exists, else the median.
    fn split_prob(&self) -> f64 {
        match self.mean() {
            Some(m) => self.cdf(m),
            None => 0.5,
        }
    }
}

/// Exponential law with the given rate.
#[derive(Debug, Clone, Copy)]
pub struct ExponentialLaw {
    pub rate: f64,
}

impl ExponentialLaw {
    pub fn new(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return domain(format!("exponential rate must be positive, got {rate}"));
        }
        Ok(ExponentialLaw { rate })
    }
}

impl TamSource for ExponentialLaw {
    fn log_quantiles(&self, targets: &[TailProb]) -> Result<Vec<f64>> {
        Ok(targets.iter().map(|t| (-t.log_upper()).ln() - self.rate.ln()).collect())
    }
    fn mean(&self) -> Option<f64> {
        Some(1.0 / self.rate)
    }
    fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            -(-self.rate * t).exp_m1()
        }
    }
}

/// dPlN law backed by a tabulated cdf.
#[derive(Debug, Clone)]
pub struct DplnSource {
    table: NlCdfTable,
    split: f64,
}

impl DplnSource {
    /// Source whose table reaches every probability any `(r, q)` cell of
    /// `grid` can ask for with `n` points.
    pub fn for_grid(params: DplnParams, n: usize, grid: &TamGrid) -> Result<Self> {
        let r_max = grid.r_values.iter().cloned().fold(0.0, f64::max);
        let r_min = grid.r_values.iter().cloned().fold(1.0, f64::min);
        let q_min = grid.q_values.iter().cloned().fold(1.0, f64::min);
        Self::with_reach(params, n, r_min, r_max, q_min)
    }

    /// Source for a single `(r, q)` cell.
    pub fn for_cell(params: DplnParams, n: usize, r: f64, q: f64) -> Result<Self> {
        Self::with_reach(params, n, r, r, q)
    }

    fn with_reach(params: DplnParams, n: usize, r_min: f64, r_max: f64, q_min: f64) -> Result<Self> {
        // a provisional table covering the central mass fixes the split
        let probe = NlCdfTable::covering(params, (1e-6f64).ln(), (1e-6f64).ln());
        let split = match dpln_moment(1.0, &params) {
            Ok(m) => {
                use crate::quantile::LogScaleLaw;
                probe.log_cdf(m.ln()).exp()
            }
            Err(_) => 0.5,
        };
        let k_max = uniform_count(n, r_max);
        let m_max = n - uniform_count(n, r_min);
        let min_log_lower = (split / k_max as f64).ln() - 1.0;
        let min_log_upper = (1.0 - split).ln() + m_max as f64 * q_min.ln() - 1.0;
        let table = NlCdfTable::covering(params, min_log_lower, min_log_upper.min((1e-6f64).ln()));
        Ok(DplnSource { table, split })
    }

    pub fn params(&self) -> &DplnParams {
        self.table.params()
    }
}

impl TamSource for DplnSource {
    fn log_quantiles(&self, targets: &[TailProb]) -> Result<Vec<f64>> {
        self.table.log_quantiles(targets)
    }
    fn mean(&self) -> Option<f64> {
        dpln_moment(1.0, self.table.params()).ok()
    }
    fn cdf(&self, t: f64) -> f64 {
        use crate::quantile::LogScaleLaw;
        if t <= 0.0 {
            return 0.0;
        }
        self.table.log_cdf(t.ln()).exp()
    }
    fn split_prob(&self) -> f64 {
        self.split
    }
}

/// `⌈rN⌉`, guarded against `0.3·10 = 3.0000000000000004`.
fn uniform_count(n: usize, r: f64) -> usize {
    let x = r * n as f64;
    let k = (x - 1e-9 * x.max(1.0)).ceil().max(1.0) as usize;
    k.min(n)
}

/// Pure U-TAM probabilities `pᵢ = (i − 1)/N`.
pub fn uniform_probs(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / n as f64).collect()
}

/// Pure G-TAM probabilities `pᵢ = 1 − qⁱ`.
pub fn geometric_probs(n: usize, q: f64) -> Vec<f64> {
    (1..=n as i32).map(|i| 1.0 - q.powi(i)).collect()
}

fn check_hybrid(n: usize, r: f64, q: f64, split: f64) -> Result<()> {
    if n < 3 {
        return domain(format!("TAM needs at least 3 points, got {n}"));
    }
    if !(r > 0.0 && r < 1.0) {
        return domain(format!("r must lie in (0, 1), got {r}"));
    }
    if !(q > 0.0 && q < 1.0) {
        return domain(format!("q must lie in (0, 1), got {q}"));
    }
    if !(split > 0.0 && split < 1.0) {
        return domain(format!("split probability must lie in (0, 1), got {split}"));
    }
    Ok(())
}

fn uniform_block(k: usize, split: f64) -> Result<Vec<TailProb>> {
    (1..=k).map(|i| TailProb::from_lower(split * i as f64 / k as f64)).collect()
}

fn geometric_block(m: usize, q: f64, split: f64) -> Result<Vec<TailProb>> {
    let base = (-split).ln_1p();
    let lq = q.ln();
    (1..=m).map(|j| TailProb::from_log_upper(base + j as f64 * lq)).collect()
}

/// Hybrid U-TAM/G-TAM schedule in exact log form.
pub fn hybrid_schedule(n: usize, r: f64, q: f64, split: f64) -> Result<Vec<TailProb>> {
    check_hybrid(n, r, q, split)?;
    let k = uniform_count(n, r);
    let mut out = uniform_block(k, split)?;
    out.extend(geometric_block(n - k, q, split)?);
    Ok(out)
}

/// Hybrid schedule as plain probabilities: `⌈rN⌉` uniform points on
/// `(0, split]`, then `1 − (1 − split)qʲ`. Far-tail values may round to 1;
/// use [`hybrid_schedule`] when that matters.
pub fn hybrid_probs(n: usize, r: f64, q: f64, split: f64) -> Result<Vec<f64>> {
    Ok(hybrid_schedule(n, r, q, split)?.iter().map(TailProb::lower).collect())
}

/// TAM weights for increasing probabilities in `[0, 1)`:
/// `w₁ = (p₁ + p₂)/2`, `wᵢ = (pᵢ₊₁ − pᵢ₋₁)/2`, `w_N = 1 − (p_{N−1} + p_N)/2`.
pub fn tam_weights(probs: &[f64]) -> Result<Vec<f64>> {
    check_increasing(probs)?;
    let n = probs.len();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let mut w = Vec::with_capacity(n);
    w.push(0.5 * (probs[0] + probs[1]));
    for i in 1..n - 1 {
        w.push(0.5 * (probs[i + 1] - probs[i - 1]));
    }
    w.push(1.0 - 0.5 * (probs[n - 2] + probs[n - 1]));
    Ok(w)
}

fn check_increasing(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::Precondition("no probabilities".into()));
    }
    if let Some(p) = probs.iter().find(|p| !(**p >= 0.0 && **p < 1.0)) {
        return domain(format!("probability {p} outside [0, 1)"));
    }
    if probs.windows(2).any(|w| w[1] <= w[0]) {
        return domain("probabilities must be strictly increasing");
    }
    Ok(())
}

/// The same weights in log form, exact for schedules deep in the tail.
pub fn tam_log_weights(schedule: &[TailProb]) -> Result<Vec<f64>> {
    let n = schedule.len();
    if n == 0 {
        return Err(Error::Precondition("empty schedule".into()));
    }
    if schedule.windows(2).any(|w| w[1].log_upper() >= w[0].log_upper()) {
        return domain("probabilities must be strictly increasing");
    }
    if n == 1 {
        return Ok(vec![0.0]);
    }
    let ll = |i: usize| schedule[i].log_lower();
    let lu = |i: usize| schedule[i].log_upper();
    let mut w = Vec::with_capacity(n);
    w.push(log_add_exp(ll(0), ll(1)) - LN_2);
    for i in 1..n - 1 {
        let lw = if schedule[i + 1].lower() <= 0.5 {
            log_sub_exp(ll(i + 1), ll(i - 1))
        } else {
            log_sub_exp(lu(i - 1), lu(i + 1))
        };
        w.push(lw - LN_2);
    }
    w.push(log_add_exp(lu(n - 2), lu(n - 1)) - LN_2);
    Ok(w)
}

/// Provenance of a TAM: point count, schedule parameters and split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TamMeta {
    pub n: usize,
    pub r: f64,
    pub q: f64,
    pub split_prob: f64,
}

/// Discrete approximation `{(tᵢ, wᵢ)}` of a law on `(0, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TamApprox {
    log_points: Vec<f64>,
    log_weights: Vec<f64>,
    points: Vec<f64>,
    weights: Vec<f64>,
    /// P(X ≤ tᵢ) of each point, when built from a schedule.
    probs: Vec<f64>,
    meta: TamMeta,
}

impl TamApprox {
    /// A TAM from explicit points and weights.
    pub fn from_points(points: &[f64], weights: &[f64]) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::Precondition("points and weights must be nonempty and equal length".into()));
        }
        if points.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return domain("TAM points must be positive and finite");
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return domain("TAM points must be strictly increasing");
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return domain("TAM weights must be positive");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return domain(format!("TAM weights sum to {total}, not 1"));
        }
        let n = points.len();
        Ok(TamApprox {
            log_points: points.iter().map(|t| t.ln()).collect(),
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            points: points.to_vec(),
            weights: weights.to_vec(),
            probs: Vec::new(),
            meta: TamMeta { n, r: f64::NAN, q: f64::NAN, split_prob: f64::NAN },
        })
    }

    /// Steps 1–4 for a given schedule: quantiles, weights, transform.
    pub fn from_schedule<S: TamSource + ?Sized>(source: &S, schedule: &[TailProb], meta: TamMeta) -> Result<Self> {
        let log_points = source.log_quantiles(schedule)?;
        Self::assemble(log_points, schedule, meta)
    }

    fn assemble(log_points: Vec<f64>, schedule: &[TailProb], meta: TamMeta) -> Result<Self> {
        if log_points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Precondition("quantiles are not strictly increasing".into()));
        }
        let log_weights = tam_log_weights(schedule)?;
        let points = log_points.iter().map(|y| y.exp()).collect();
        let weights = log_weights.iter().map(|w| w.exp()).collect();
        Ok(TamApprox { log_points, log_weights, points, weights, probs: schedule.iter().map(TailProb::lower).collect(), meta })
    }

    pub fn len(&self) -> usize {
        self.log_points.len()
    }
    pub fn is_empty(&self) -> bool {
        self.log_points.is_empty()
    }
    pub fn meta(&self) -> TamMeta {
        self.meta
    }
    /// `tᵢ`; points beyond `f64::MAX` read as `+inf`.
    pub fn points(&self) -> &[f64] {
        &self.points
    }
    pub fn log_points(&self) -> &[f64] {
        &self.log_points
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// Σ wᵢ tᵢ.
    pub fn mean(&self) -> f64 {
        let terms: Vec<f64> = self.log_points.iter().zip(&self.log_weights).map(|(y, w)| y + w).collect();
        log_sum_exp(&terms).exp()
    }

    /// The point `t_a` with `Σ_{i≤a} wᵢ ≤ 1/2 < Σ_{i≤a+1} wᵢ` (the first
    /// point if its own weight already exceeds one half), and its index.
    pub fn median(&self) -> (usize, f64) {
        let mut cum = 0.0;
        let mut a = 0;
        for (i, lw) in self.log_weights.iter().enumerate() {
            cum += lw.exp();
            if cum > 0.5 {
                break;
            }
            a = i;
        }
        (a, self.log_points[a].exp())
    }

    /// f*_N(s) = Σ wᵢ e^{−s tᵢ}, for `s ≥ 0`.
    pub fn eval_transform(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return domain(format!("transform argument must be nonnegative, got {s}"));
        }
        Ok(self.transform_unchecked(s))
    }

    pub(crate) fn transform_unchecked(&self, s: f64) -> f64 {
        if s == 0.0 {
            return self.weights.iter().sum();
        }
        self.points.iter().zip(&self.weights).map(|(t, w)| w * (-s * t).exp()).sum()
    }

    /// 1 − f*_N(s) summed as Σ wᵢ(1 − e^{−s tᵢ}), accurate as `s → 0`.
    pub fn one_minus_transform(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return domain(format!("transform argument must be nonnegative, got {s}"));
        }
        Ok(self
            .points
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| if t.is_infinite() { if s > 0.0 { *w } else { 0.0 } } else { -w * (-s * t).exp_m1() })
            .sum())
    }

    /// f*_N at a complex argument with `Re s ≥ 0`.
    pub fn transform_complex(&self, s: Complex64) -> Complex64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| {
                if t.is_infinite() {
                    return Complex64::new(0.0, 0.0);
                }
                w * (-s * t).exp()
            })
            .sum()
    }

    /// 1 − f*_N(s) at a complex argument, summed termwise.
    pub fn one_minus_transform_complex(&self, s: Complex64) -> Complex64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| {
                if t.is_infinite() {
                    return Complex64::new(*w, 0.0);
                }
                -w * exp_m1_complex(-s * t)
            })
            .sum()
    }

    /// Two-column `point<TAB>weight` text with a provenance header.
    pub fn export(&self) -> String {
        let m = self.meta;
        let mut s = String::new();
        let _ = writeln!(s, "# tam n={} r={} q={} split_prob={}", m.n, m.r, m.q, m.split_prob);
        let _ = writeln!(s, "point\tweight");
        for (y, w) in self.log_points.iter().zip(&self.log_weights) {
            let _ = writeln!(s, "{:.17e}\t{:.17e}", y.exp(), w.exp());
        }
        s
    }
}

/// e^z − 1 without cancellation for small |z|.
fn exp_m1_complex(z: Complex64) -> Complex64 {
    if z.norm() < 1e-2 {
        // Taylor series to z⁶, relative error below 1e-16 on this disc
        let mut term = z;
        let mut sum = z;
        for k in 2..=7 {
            term = term * z / k as f64;
            sum += term;
        }
        sum
    } else {
        z.exp() - 1.0
    }
}

/// Discretize a dPlN law with `n` points and schedule `(r, q)`.
pub fn build_tam(p: &DplnParams, n: usize, r: f64, q: f64) -> Result<TamApprox> {
    let source = DplnSource::for_cell(*p, n, r, q)?;
    build_tam_from(&source, n, r, q)
}

/// Discretize any [`TamSource`] with `n` points and schedule `(r, q)`.
pub fn build_tam_from<S: TamSource + ?Sized>(source: &S, n: usize, r: f64, q: f64) -> Result<TamApprox> {
    let split = source.split_prob();
    let schedule = hybrid_schedule(n, r, q, split)?;
    TamApprox::from_schedule(source, &schedule, TamMeta { n, r, q, split_prob: split })
}

/// Matching criterion of the grid search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Mean when it exists, median otherwise.
    Auto,
    /// Relative distance between TAM mean and E[X].
    Mean,
    /// Probability distance between the TAM median and one half.
    Median,
}

/// The `(r, q)` search grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TamGrid {
    pub r_values: Vec<f64>,
    pub q_values: Vec<f64>,
    pub objective: Objective,
}

impl Default for TamGrid {
    /// r ∈ {0.1, …, 0.8}, q ∈ {0.10, 0.15, …, 0.90}: 8 × 17 cells.
    fn default() -> Self {
        TamGrid {
            r_values: (1..=8).map(|i| i as f64 / 10.0).collect(),
            q_values: (0..17).map(|j| 0.10 + 0.05 * j as f64).collect(),
            objective: Objective::Auto,
        }
    }
}

impl TamGrid {
    pub fn single(r: f64, q: f64) -> Self {
        TamGrid { r_values: vec![r], q_values: vec![q], objective: Objective::Auto }
    }

    fn validate(&self) -> Result<()> {
        if self.r_values.is_empty() || self.q_values.is_empty() {
            return Err(Error::Precondition("TAM grid is empty".into()));
        }
        if self.r_values.iter().chain(&self.q_values).any(|v| !(*v > 0.0 && *v < 1.0)) {
            return domain("TAM grid values must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Outcome of the grid search.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub r: f64,
    pub q: f64,
    pub tam: TamApprox,
    pub objective: Objective,
    /// Distance achieved by the selected cell.
    pub residual: f64,
    /// Whether `residual < 1e-3`.
    pub target_met: bool,
}

/// Calibrate a dPlN TAM over `grid`.
pub fn calibrate(p: &DplnParams, n: usize, grid: &TamGrid) -> Result<Calibration> {
    grid.validate()?;
    let source = DplnSource::for_grid(*p, n, grid)?;
    calibrate_source(&source, n, grid)
}

/// Grid search over `(r, q)` for any source. Quantiles are shared between
/// cells: uniform blocks depend only on `⌈rN⌉` and each geometric block is a
/// prefix of the longest one for its `q`.
pub fn calibrate_source<S: TamSource + ?Sized>(source: &S, n: usize, grid: &TamGrid) -> Result<Calibration> {
    grid.validate()?;
    let split = source.split_prob();
    check_hybrid(n, grid.r_values[0], grid.q_values[0], split)?;
    let objective = match (grid.objective, source.mean()) {
        (Objective::Auto, Some(_)) | (Objective::Mean, Some(_)) => Objective::Mean,
        (Objective::Mean, None) => return Err(Error::MomentDoesNotExist { order: 1.0, alpha: f64::NAN }),
        _ => Objective::Median,
    };

    let mut ks: Vec<usize> = grid.r_values.iter().map(|&r| uniform_count(n, r)).collect();
    ks.sort_unstable();
    ks.dedup();
    let m_max = n - ks[0];

    let uniform: Vec<(usize, Vec<TailProb>, Vec<f64>)> = ks
        .par_iter()
        .map(|&k| {
            let sched = uniform_block(k, split)?;
            let pts = source.log_quantiles(&sched)?;
            Ok((k, sched, pts))
        })
        .collect::<Result<_>>()?;
    let geometric: Vec<(Vec<TailProb>, Vec<f64>)> = grid
        .q_values
        .par_iter()
        .map(|&q| {
            let sched = geometric_block(m_max, q, split)?;
            let pts = source.log_quantiles(&sched)?;
            Ok((sched, pts))
        })
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, usize)> = (0..grid.r_values.len())
        .flat_map(|i| (0..grid.q_values.len()).map(move |j| (i, j)))
        .collect();
    let mean = source.mean();
    let scored: Vec<(usize, usize, f64)> = cells
        .par_iter()
        .map(|&(i, j)| {
            let k = uniform_count(n, grid.r_values[i]);
            let (_, us, up) = uniform.iter().find(|u| u.0 == k).expect("uniform block");
            let (gs, gp) = &geometric[j];
            let m = n - k;
            let mut sched = us.clone();
            sched.extend_from_slice(&gs[..m]);
            let mut pts = up.clone();
            pts.extend_from_slice(&gp[..m]);
            let meta = TamMeta { n, r: grid.r_values[i], q: grid.q_values[j], split_prob: split };
            let tam = TamApprox::assemble(pts, &sched, meta)?;
            Ok((i, j, residual(&tam, objective, mean)))
        })
        .collect::<Result<_>>()?;

    // smallest residual; ties go to larger r, then smaller q
    let best = scored
        .iter()
        .filter(|c| c.2.is_finite())
        .min_by(|a, b| {
            a.2.total_cmp(&b.2)
                .then(grid.r_values[b.0].total_cmp(&grid.r_values[a.0]))
                .then(grid.q_values[a.1].total_cmp(&grid.q_values[b.1]))
        })
        .ok_or_else(|| Error::Precondition("no TAM cell produced a finite residual".into()))?;
    let (r, q) = (grid.r_values[best.0], grid.q_values[best.1]);
    let tam = build_from_blocks(&uniform, &geometric[best.1], n, r, q, split)?;
    Ok(Calibration { r, q, tam, objective, residual: best.2, target_met: best.2 < TARGET_RESIDUAL })
}

fn build_from_blocks(
    uniform: &[(usize, Vec<TailProb>, Vec<f64>)],
    geometric: &(Vec<TailProb>, Vec<f64>),
    n: usize,
    r: f64,
    q: f64,
    split: f64,
) -> Result<TamApprox> {
    let k = uniform_count(n, r);
    let (_, us, up) = uniform.iter().find(|u| u.0 == k).expect("uniform block");
    let m = n - k;
    let mut sched = us.clone();
    sched.extend_from_slice(&geometric.0[..m]);
    let mut pts = up.clone();
    pts.extend_from_slice(&geometric.1[..m]);
    TamApprox::assemble(pts, &sched, TamMeta { n, r, q, split_prob: split })
}

fn residual(tam: &TamApprox, objective: Objective, mean: Option<f64>) -> f64 {
    match (objective, mean) {
        (Objective::Mean, Some(m)) => ((tam.mean() - m) / m).abs(),
        _ => {
            let (a, _) = tam.median();
            (tam.probs[a] - 0.5).abs()
        }
    }
}
