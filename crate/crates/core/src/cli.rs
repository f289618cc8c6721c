//! Command-line front end: data ingestion, configuration merging and the
//! `fit`, `gm1`, `mg1`, `ruin`, `simulate` and `tam-diag` workflows.
//!
//! Every output file is tab-separated text whose first lines echo the
//! effective configuration as `# run {json}`; a `manifest.json` lists the
//! files written. Flags override the `--config` TOML file, which overrides
//! the defaults.

use crate::distribution::{dpln_moment, sample_dpln, DplnParams, SampleBatch, Scale};
use crate::error::{Error, Result};
use crate::gibbs::{
    data_digest, default_init, fit_exponential_rate, predictive_density, read_draws, run_gibbs, summarize, write_chain,
    GibbsConfig, PriorSpec, DEFAULT_ITERATIONS, DEFAULT_THIN, PARAM_NAMES,
};
use crate::queueing::{
    gm1_posterior, gm1_sweep, log_time_grid, mg1_draws, mg1_rho, reserve_grid, ruin_from_draws, summarize_mg1,
    wq_upper_time, Gm1Report, Mg1Report, PosteriorOptions, ServiceRate, TamSettings, DEFAULT_GRID_POINTS,
};
use crate::rng;
use crate::sim::{simulate, simulate_ruin, Law, SimConfig};
use crate::tam::{calibrate, Objective, TamGrid, DEFAULT_N};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "dpln", version, about = "Bayesian dPlN fitting and dPlN queue analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit dPlN to positive data with the Gibbs sampler.
    Fit(Args),
    /// Posterior dPlN/M/1 queue report.
    Gm1(Args),
    /// Posterior M/dPlN/1 waiting-time report.
    Mg1(Args),
    /// Posterior ruin probabilities of the dual risk process.
    Ruin(Args),
    /// Discrete-event simulation of the queue and the risk process.
    Simulate(Args),
    /// Dump a calibrated TAM and its transform accuracy.
    #[command(name = "tam-diag")]
    TamDiag(Args),
}

impl Command {
    fn split(self) -> (&'static str, Args) {
        match self {
            Command::Fit(a) => ("fit", a),
            Command::Gm1(a) => ("gm1", a),
            Command::Mg1(a) => ("mg1", a),
            Command::Ruin(a) => ("ruin", a),
            Command::Simulate(a) => ("simulate", a),
            Command::TamDiag(a) => ("tam-diag", a),
        }
    }
}

/// Flags shared by every command; each command reads the ones it needs.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Args {
    /// TOML file with default values for any of these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Positive observations, one per line, '#' starts a comment line.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Chain file written by `fit`, or any four-column table of draws.
    #[arg(long)]
    pub chain: Option<PathBuf>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub mu_list: Option<Vec<f64>>,
    /// Service durations for conjugate inference on μ.
    #[arg(long)]
    pub service_data: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub lambda_list: Option<Vec<f64>>,
    /// Interclaim times for conjugate inference on λ.
    #[arg(long)]
    pub interclaim_data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub u_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub tam_n: Option<usize>,
    /// Use every k-th posterior draw for the queue computations.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// θ as `alpha,beta,nu,tau2` for tam-diag.
    #[arg(long, allow_hyphen_values = true)]
    pub params: Option<String>,
    /// Interarrival law for simulate: `exp:RATE`, `dpln:A,B,NU,TAU2` or `det:VALUE`.
    #[arg(long, allow_hyphen_values = true)]
    pub arrival: Option<String>,
    /// Service (or claim) law for simulate, same syntax as `--arrival`.
    #[arg(long, allow_hyphen_values = true)]
    pub service: Option<String>,
    #[arg(long)]
    pub customers: Option<usize>,
    /// Number of risk-process paths; enables the ruin simulation.
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
}

/// Contents of a `--config` file. Keys mirror the long flags with `_`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub chain: Option<PathBuf>,
    pub mu: Option<f64>,
    pub mu_list: Option<Vec<f64>>,
    pub service_data: Option<PathBuf>,
    pub mu_prior: Option<[f64; 2]>,
    pub lambda: Option<f64>,
    pub lambda_list: Option<Vec<f64>>,
    pub interclaim_data: Option<PathBuf>,
    pub lambda_prior: Option<[f64; 2]>,
    pub u_grid: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub iterations: Option<usize>,
    pub thin: Option<usize>,
    pub burn_in: Option<usize>,
    pub prior: PriorFile,
    pub tam_n: Option<usize>,
    pub tam_r: Option<Vec<f64>>,
    pub tam_q: Option<Vec<f64>>,
    pub stride: Option<usize>,
    pub n_max: Option<usize>,
    pub grid_points: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub params: Option<[f64; 4]>,
    pub arrival: Option<String>,
    pub service: Option<String>,
    pub customers: Option<usize>,
    pub warmup: Option<usize>,
    pub paths: Option<usize>,
    pub horizon: Option<f64>,
    pub mc_samples: Option<usize>,
}

/// Partial prior; missing keys take the defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorFile {
    pub m: Option<f64>,
    pub k: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c_alpha: Option<f64>,
    pub d_alpha: Option<f64>,
    pub c_beta: Option<f64>,
    pub d_beta: Option<f64>,
}

impl PriorFile {
    fn resolve(&self) -> PriorSpec {
        let d = PriorSpec::default();
        PriorSpec {
            m: self.m.unwrap_or(d.m),
            k: self.k.unwrap_or(d.k),
            a: self.a.unwrap_or(d.a),
            b: self.b.unwrap_or(d.b),
            c_alpha: self.c_alpha.unwrap_or(d.c_alpha),
            d_alpha: self.d_alpha.unwrap_or(d.d_alpha),
            c_beta: self.c_beta.unwrap_or(d.c_beta),
            d_beta: self.d_beta.unwrap_or(d.d_beta),
        }
    }
}

pub fn load_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Parse { line: None, msg: format!("{}: {e}", path.display()) })
}

/// The merged configuration of one run. Serialized into every output header.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: Option<PathBuf>,
    pub chain: Option<PathBuf>,
    pub prior: PriorSpec,
    pub iterations: usize,
    pub burn_in: Option<usize>,
    pub thin: usize,
    pub tam_n: usize,
    pub tam_r: Vec<f64>,
    pub tam_q: Vec<f64>,
    pub stride: Option<usize>,
    pub n_max: usize,
    pub grid_points: usize,
    pub mu: Vec<f64>,
    pub service_data: Option<PathBuf>,
    pub mu_prior: [f64; 2],
    pub lambda: Vec<f64>,
    pub interclaim_data: Option<PathBuf>,
    pub lambda_prior: [f64; 2],
    pub u_grid: Option<Vec<f64>>,
    pub params: Option<[f64; 4]>,
    pub arrival: String,
    pub service: String,
    pub customers: usize,
    pub warmup: Option<usize>,
    pub paths: Option<usize>,
    pub horizon: f64,
    pub mc_samples: usize,
}

/// Vague gamma prior (shape, rate) for exponential rates.
pub const RATE_PRIOR: [f64; 2] = [1e-3, 1e-3];

impl RunConfig {
    pub fn merge(command: &str, flags: &Args, file: &FileConfig) -> Result<Self> {
        let grid = TamGrid::default();
        let rates = |single: Option<f64>, list: &Option<Vec<f64>>| -> Vec<f64> {
            let mut v: Vec<f64> = single.into_iter().collect();
            v.extend(list.iter().flatten().copied());
            v
        };
        let flag_mu = rates(flags.mu, &flags.mu_list);
        let flag_lambda = rates(flags.lambda, &flags.lambda_list);
        let params = match &flags.params {
            Some(s) => Some(parse_params(s)?),
            None => file.params,
        };
        let cfg = RunConfig {
            command: command.to_string(),
            seed: flags.seed.or(file.seed).unwrap_or(1),
            out_dir: flags.out_dir.clone().or(file.out_dir.clone()).unwrap_or_else(|| PathBuf::from(".")),
            data: flags.data.clone().or(file.data.clone()),
            chain: flags.chain.clone().or(file.chain.clone()),
            prior: file.prior.resolve(),
            iterations: flags.iterations.or(file.iterations).unwrap_or(DEFAULT_ITERATIONS),
            burn_in: flags.burn_in.or(file.burn_in),
            thin: flags.thin.or(file.thin).unwrap_or(DEFAULT_THIN),
            tam_n: flags.tam_n.or(file.tam_n).unwrap_or(DEFAULT_N),
            tam_r: file.tam_r.clone().unwrap_or(grid.r_values),
            tam_q: file.tam_q.clone().unwrap_or(grid.q_values),
            stride: flags.stride.or(file.stride),
            n_max: file.n_max.unwrap_or(20),
            grid_points: file.grid_points.unwrap_or(DEFAULT_GRID_POINTS),
            mu: if flag_mu.is_empty() { rates(file.mu, &file.mu_list) } else { flag_mu },
            service_data: flags.service_data.clone().or(file.service_data.clone()),
            mu_prior: file.mu_prior.unwrap_or(RATE_PRIOR),
            lambda: if flag_lambda.is_empty() { rates(file.lambda, &file.lambda_list) } else { flag_lambda },
            interclaim_data: flags.interclaim_data.clone().or(file.interclaim_data.clone()),
            lambda_prior: file.lambda_prior.unwrap_or(RATE_PRIOR),
            u_grid: flags.u_grid.clone().or(file.u_grid.clone()),
            params,
            arrival: flags.arrival.clone().or(file.arrival.clone()).unwrap_or_else(|| "exp:1".into()),
            service: flags.service.clone().or(file.service.clone()).unwrap_or_else(|| "exp:2".into()),
            customers: flags.customers.or(file.customers).unwrap_or(100_000),
            warmup: file.warmup,
            paths: flags.paths.or(file.paths),
            horizon: flags.horizon.or(file.horizon).unwrap_or(1e4),
            mc_samples: file.mc_samples.unwrap_or(200_000),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Precondition(msg));
        self.prior.validate()?;
        for (name, v) in [("mu", &self.mu), ("lambda", &self.lambda)] {
            if let Some(x) = v.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
                return bad(format!("{name} must be positive, got {x}"));
            }
        }
        if let Some(u) = &self.u_grid {
            if u.is_empty() || u.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                return bad("u-grid must be a nonempty list of nonnegative values".into());
            }
        }
        for (name, p) in [("mu_prior", self.mu_prior), ("lambda_prior", self.lambda_prior)] {
            if !(p[0] > 0.0 && p[1] > 0.0) {
                return bad(format!("{name} shape and rate must be positive"));
            }
        }
        if self.tam_n < 2 {
            return bad(format!("tam-n must be at least 2, got {}", self.tam_n));
        }
        if self.thin == 0 || self.stride == Some(0) {
            return bad("thin and stride must be at least 1".into());
        }
        if self.grid_points < 2 {
            return bad("grid_points must be at least 2".into());
        }
        for (name, path) in [
            ("data", &self.data),
            ("chain", &self.chain),
            ("service data", &self.service_data),
            ("interclaim data", &self.interclaim_data),
        ] {
            if let Some(p) = path {
                if !p.is_file() {
                    return bad(format!("{name} file {} does not exist", p.display()));
                }
            }
        }
        Ok(())
    }

    fn tam(&self) -> TamSettings {
        TamSettings {
            n: self.tam_n,
            grid: TamGrid { r_values: self.tam_r.clone(), q_values: self.tam_q.clone(), objective: Objective::Auto },
        }
    }

    /// Default stride visits at most 1000 draws.
    fn stride_for(&self, draws: usize) -> usize {
        self.stride.unwrap_or_else(|| draws.div_ceil(1000).max(1))
    }

    fn header(&self) -> String {
        format!(
            "# dpln {} {}\n# run {}\n",
            self.command,
            env!("CARGO_PKG_VERSION"),
            serde_json::to_string(self).expect("config serializes")
        )
    }
}

fn parse_params(s: &str) -> Result<[f64; 4]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Parse { line: None, msg: format!("params {t:?}: {e}") }))
        .collect::<Result<_>>()?;
    match v.as_slice() {
        [a, b, n, t] => Ok([*a, *b, *n, *t]),
        _ => Err(Error::Parse { line: None, msg: format!("params needs 4 values alpha,beta,nu,tau2, got {}", v.len()) }),
    }
}

/// `exp:RATE`, `dpln:A,B,NU,TAU2` or `det:VALUE`.
pub fn parse_law(s: &str) -> Result<Law> {
    let err = |msg: String| Error::Parse { line: None, msg };
    let (kind, rest) = s.split_once(':').ok_or_else(|| err(format!("law {s:?} must look like kind:value")))?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| err(format!("law {s:?}: {e}")));
    let law = match kind.trim() {
        "exp" => Law::Exponential { rate: num(rest)? },
        "det" => Law::Deterministic { value: num(rest)? },
        "dpln" => {
            let [a, b, n, t] = parse_params(rest)?;
            Law::Dpln { params: DplnParams::new(a, b, n, t)? }
        }
        k => return Err(err(format!("unknown law {k:?}, expected exp, dpln or det"))),
    };
    law.validate()?;
    Ok(law)
}

/// Positive reals, one per line. Blank lines and lines starting with '#'
/// are skipped. Errors name the 1-based line.
pub fn parse_positive_values(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse { line: Some(i + 1), msg };
        let v: f64 = line.parse().map_err(|e| err(format!("{line:?} is not a number: {e}")))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(err(format!("value {line} is not a positive finite number")));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::Precondition("input contains no values".into()));
    }
    Ok(out)
}

pub fn read_positive_values(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_positive_values(&text).map_err(|e| match e {
        Error::Parse { line, msg } => Error::Parse { line, msg: format!("{}: {msg}", path.display()) },
        Error::Precondition(msg) => Error::Precondition(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// What a run wrote.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub config: RunConfig,
    pub files: Vec<PathBuf>,
    pub results: serde_json::Value,
}

struct Writer<'a> {
    cfg: &'a RunConfig,
    files: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self> {
        std::fs::create_dir_all(&cfg.out_dir)?;
        Ok(Writer { cfg, files: Vec::new() })
    }

    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.cfg.out_dir.join(name);
        let mut text = self.cfg.header();
        text.push_str(body);
        std::fs::write(&path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.files.push(path);
        Ok(())
    }

    fn table(&mut self, name: &str, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut body = columns.join("\t");
        body.push('\n');
        for r in rows {
            body.push_str(&r.join("\t"));
            body.push('\n');
        }
        self.write(name, &body)
    }

    fn finish(mut self, results: serde_json::Value) -> Result<RunOutcome> {
        let path = self.cfg.out_dir.join("manifest.json");
        let names: Vec<String> =
            self.files.iter().map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned()).collect();
        let manifest = json!({
            "tool": "dpln",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.cfg.command,
            "config": self.cfg,
            "outputs": names,
            "results": results,
        });
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(&path, text + "\n")?;
        self.files.push(path);
        Ok(RunOutcome { config: self.cfg.clone(), files: self.files, results: manifest["results"].clone() })
    }
}

fn f(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(f).unwrap_or_else(|| "NA".into())
}

fn mean_ci(v: &[f64]) -> (f64, f64, f64) {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.iter().sum::<f64>() / s.len() as f64;
    (m, crate::gibbs::empirical_quantile(&s, 0.025), crate::gibbs::empirical_quantile(&s, 0.975))
}

/// Cap the global worker pool at `DPLN_THREADS` when set.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("DPLN_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::Precondition(format!("DPLN_THREADS must be a positive integer, got {v:?}")))?;
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parse arguments and run. `args` includes the program name.
pub fn run_args<I, T>(args: I) -> Result<RunOutcome>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Precondition(e.to_string()))?;
    run(cli.command)
}

pub fn run(command: Command) -> Result<RunOutcome> {
    init_threads()?;
    let (name, args) = command.split();
    let file = match &args.config {
        Some(p) => load_config(p)?,
        None => FileConfig::default(),
    };
    let cfg = RunConfig::merge(name, &args, &file)?;
    match name {
        "fit" => cmd_fit(&cfg),
        "gm1" => cmd_gm1(&cfg),
        "mg1" => cmd_mg1(&cfg, false),
        "ruin" => cmd_mg1(&cfg, true),
        "simulate" => cmd_simulate(&cfg),
        _ => cmd_tam_diag(&cfg),
    }
}

/// Entry point for the binary: usage errors exit 2, run failures exit 1.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(out) => {
            for p in &out.files {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn need<'a, T>(v: &'a Option<T>, what: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| Error::Precondition(format!("{what} is required")))
}

fn load_chain(cfg: &RunConfig) -> Result<Vec<DplnParams>> {
    let path = need(&cfg.chain, "--chain")?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_draws(&text).map_err(|e| match e {
        Error::Parse { line, msg } => Error::Parse { line, msg: format!("{}: {msg}", path.display()) },
        other => other,
    })
}

fn cmd_fit(cfg: &RunConfig) -> Result<RunOutcome> {
    let path = need(&cfg.data, "--data")?;
    let raw = SampleBatch::new(read_positive_values(path)?, Scale::Raw)?;
    let gcfg = GibbsConfig {
        iterations: cfg.iterations,
        burn_in: cfg.burn_in.unwrap_or(cfg.iterations / 10),
        thin: cfg.thin,
        seed: cfg.seed,
        init: default_init(&raw.to_log())?,
    };
    gcfg.validate()?;
    if gcfg.draw_count() == 0 {
        return Err(Error::Precondition("iterations, burn-in and thin leave no draws".into()));
    }
    let mut w = Writer::new(cfg)?;
    let chain = run_gibbs(&raw, &cfg.prior, &gcfg)?;
    w.write("chain.tsv", &write_chain(&chain))?;

    let s = summarize(chain.draws())?;
    let mut rows = Vec::new();
    for (j, name) in PARAM_NAMES.iter().enumerate() {
        let mut r = vec![name.to_string(), f(s.mean[j]), f(s.ci95[j][0]), f(s.ci95[j][1])];
        r.extend(s.correlation[j].iter().map(|c| f(*c)));
        rows.push(r);
    }
    w.table(
        "summary.tsv",
        &["param", "mean", "ci_lo", "ci_hi", "corr_alpha", "corr_beta", "corr_nu", "corr_tau2"],
        &rows,
    )?;

    let logs = raw.to_log();
    let (lo, hi) = logs.values().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    let (lo, hi) = (lo - 1.0, hi + 1.0);
    let k = cfg.grid_points;
    let ys: Vec<f64> = (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect();
    let dens = predictive_density(chain.draws(), &ys, Scale::Log)?;
    let rows: Vec<Vec<String>> = ys
        .iter()
        .zip(&dens)
        .map(|(&y, &d)| {
            let x = y.exp();
            vec![f(x), f(d / x), f(y), f(d)]
        })
        .collect();
    w.table("predictive.tsv", &["x", "density_x", "log_x", "density_log_x"], &rows)?;

    w.finish(json!({
        "n_data": raw.len(),
        "data_digest": data_digest(&raw),
        "n_draws": chain.len(),
        "init": chain.config().init.to_array(),
        "summary": s,
    }))
}

fn gm1_row(label: String, r: &Gm1Report) -> Vec<String> {
    vec![
        label,
        r.n_draws.to_string(),
        r.stride.to_string(),
        f(r.stability_prob),
        opt(r.rho_mean),
        r.always_stable_draws.to_string(),
        r.stable_evaluated.to_string(),
        r.calibration_misses.to_string(),
        r.solver_failures.to_string(),
        opt(r.r0_mean),
        r.no_equilibrium.to_string(),
        opt(r.queue_pmf.first().copied().filter(|_| !r.no_equilibrium)),
    ]
}

fn cmd_gm1(cfg: &RunConfig) -> Result<RunOutcome> {
    let draws = load_chain(cfg)?;
    let opts = PosteriorOptions {
        tam: cfg.tam(),
        stride: cfg.stride_for(draws.len()),
        n_max: cfg.n_max,
        ..PosteriorOptions::default()
    };
    let mut mu_post = None;
    let (labels, reports): (Vec<String>, Vec<Gm1Report>) = if !cfg.mu.is_empty() {
        (cfg.mu.iter().map(|m| f(*m)).collect(), gm1_sweep(&draws, &cfg.mu, &opts)?)
    } else if let Some(p) = &cfg.service_data {
        let durations = read_positive_values(p)?;
        let mut r = rng::substream(cfg.seed, 11);
        let mus = fit_exponential_rate(&durations, cfg.mu_prior[0], cfg.mu_prior[1], &mut r, draws.len())?;
        mu_post = Some(mean_ci(&mus));
        (vec!["posterior".into()], vec![gm1_posterior(&draws, ServiceRate::Draws(&mus), &opts)?])
    } else {
        return Err(Error::Precondition("gm1 needs --mu, --mu-list or --service-data".into()));
    };

    let mut w = Writer::new(cfg)?;
    let rows: Vec<Vec<String>> = labels.iter().zip(&reports).map(|(l, r)| gm1_row(l.clone(), r)).collect();
    w.table(
        "gm1_summary.tsv",
        &[
            "mu",
            "n_draws",
            "stride",
            "p_stable",
            "rho_mean",
            "always_stable_draws",
            "stable_evaluated",
            "calibration_misses",
            "solver_failures",
            "r0_mean",
            "no_equilibrium",
            "p_q0",
        ],
        &rows,
    )?;
    if let Some((m, lo, hi)) = mu_post {
        w.table("mu_posterior.tsv", &["mean", "ci_lo", "ci_hi"], &[vec![f(m), f(lo), f(hi)]])?;
    }

    let mut cols = vec!["n".to_string()];
    cols.extend(labels.iter().map(|l| format!("mu={l}")));
    let rows: Vec<Vec<String>> = (0..=cfg.n_max)
        .map(|n| {
            let mut r = vec![n.to_string()];
            r.extend(reports.iter().map(|rep| rep.queue_pmf.get(n).map(|v| f(*v)).unwrap_or_else(|| "NA".into())));
            r
        })
        .collect();
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    w.table("gm1_queue_pmf.tsv", &col_refs, &rows)?;

    let mut rows = Vec::new();
    for (l, rep) in labels.iter().zip(&reports) {
        for ((t, wq), wc) in rep.time_grid.iter().zip(&rep.wq_cdf).zip(&rep.w_cdf) {
            rows.push(vec![l.clone(), f(*t), f(*wq), f(*wc)]);
        }
    }
    w.table("gm1_wait.tsv", &["mu", "t", "wq_cdf", "w_cdf"], &rows)?;

    let always_stable_only = reports.iter().all(|r| r.always_stable_draws == r.n_draws);
    w.finish(json!({
        "reports": reports,
        "mu_posterior": mu_post.map(|(m, lo, hi)| json!({"mean": m, "ci95": [lo, hi]})),
        "always_stable": always_stable_only,
    }))
}

/// Posterior mean and 95% interval.
type RateSummary = (f64, f64, f64);

/// Arrival rates from flags or from interclaim data (posterior mean).
fn arrival_rates(cfg: &RunConfig) -> Result<(Vec<f64>, Option<RateSummary>)> {
    if !cfg.lambda.is_empty() {
        return Ok((cfg.lambda.clone(), None));
    }
    if let Some(p) = &cfg.interclaim_data {
        let times = read_positive_values(p)?;
        let mut r = rng::substream(cfg.seed, 12);
        let draws = fit_exponential_rate(&times, cfg.lambda_prior[0], cfg.lambda_prior[1], &mut r, 10_000)?;
        let post = mean_ci(&draws);
        return Ok((vec![post.0], Some(post)));
    }
    Err(Error::Precondition(format!("{} needs --lambda, --lambda-list or --interclaim-data", cfg.command)))
}

fn mean_params(draws: &[DplnParams]) -> Result<DplnParams> {
    let s = summarize(draws)?;
    DplnParams::new(s.mean[0], s.mean[1], s.mean[2], s.mean[3])
}

/// Time horizon for the automatic W_q grid: the 0.999 quantile at the
/// posterior-mean θ and the largest λ when that is stable, else a multiple
/// of the median service time.
fn auto_horizon(cfg: &RunConfig, draws: &[DplnParams], lambdas: &[f64]) -> Result<f64> {
    let p = mean_params(draws)?;
    let lam = lambdas.iter().copied().fold(0.0, f64::max);
    let fallback = 1e3 * p.nu().exp();
    if let Ok(l) = mg1_rho(&p, lam) {
        if l.is_stable() {
            let cal = cfg.tam().calibrate(&p)?;
            let rho_tam = lam * cal.tam.mean();
            if rho_tam < 1.0 {
                if let Ok(t) = wq_upper_time(lam, rho_tam, &cal.tam, &Default::default()) {
                    return Ok(t);
                }
            }
        }
    }
    Ok(fallback)
}

fn cmd_mg1(cfg: &RunConfig, ruin: bool) -> Result<RunOutcome> {
    let draws = load_chain(cfg)?;
    let (lambdas, lambda_post) = arrival_rates(cfg)?;
    let opts = PosteriorOptions {
        tam: cfg.tam(),
        stride: cfg.stride_for(draws.len()),
        ..PosteriorOptions::default()
    };
    let u = match &cfg.u_grid {
        Some(u) => u.clone(),
        None if ruin => {
            let m = mean_params(&draws)?.nu().exp();
            (0..=20).map(|i| i as f64 * m).collect()
        }
        None => Vec::new(),
    };
    let grid = if u.is_empty() {
        log_time_grid(auto_horizon(cfg, &draws, &lambdas)?, cfg.grid_points)
    } else {
        reserve_grid(&u)?
    };
    let per = mg1_draws(&draws, &lambdas, &grid, &opts)?;
    let reports: Vec<Mg1Report> = summarize_mg1(&draws, &lambdas, &grid, &per, opts.stride)?;

    let mut w = Writer::new(cfg)?;
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                f(r.lambda),
                f(1.0 / r.lambda),
                r.n_draws.to_string(),
                r.stride.to_string(),
                f(r.stability_prob),
                opt(r.rho_mean),
                r.never_stable_draws.to_string(),
                r.stable_evaluated.to_string(),
                r.no_equilibrium.to_string(),
                f(r.max_adjustment),
            ]
        })
        .collect();
    w.table(
        "mg1_summary.tsv",
        &[
            "lambda",
            "inv_lambda",
            "n_draws",
            "stride",
            "p_stable",
            "rho_mean",
            "never_stable_draws",
            "stable_evaluated",
            "no_equilibrium",
            "max_adjustment",
        ],
        &rows,
    )?;
    if let Some((m, lo, hi)) = lambda_post {
        w.table("lambda_posterior.tsv", &["mean", "ci_lo", "ci_hi"], &[vec![f(m), f(lo), f(hi)]])?;
    }
    let mut rows = Vec::new();
    for r in &reports {
        for (t, c) in r.time_grid.iter().zip(&r.wq_cdf) {
            rows.push(vec![f(r.lambda), f(*t), f(*c)]);
        }
    }
    w.table("mg1_wq.tsv", &["lambda", "t", "wq_cdf_stable"], &rows)?;

    let mut results = json!({
        "reports": reports,
        "lambda_posterior": lambda_post.map(|(m, lo, hi)| json!({"mean": m, "ci95": [lo, hi]})),
    });
    if ruin {
        let surface = ruin_from_draws(&u, &lambdas, &per, opts.stride)?;
        let mut rows = Vec::new();
        for r in &surface {
            for (uu, psi) in r.u.iter().zip(&r.psi_mean) {
                rows.push(vec![f(*uu), f(1.0 / r.lambda), f(r.lambda), f(*psi)]);
            }
        }
        w.table("ruin_surface.tsv", &["u", "inv_lambda", "lambda", "psi_mean"], &rows)?;
        results["psi_mean"] = json!(surface.iter().map(|r| json!({"lambda": r.lambda, "u": r.u, "psi": r.psi_mean})).collect::<Vec<_>>());
    }
    w.finish(results)
}

fn cmd_simulate(cfg: &RunConfig) -> Result<RunOutcome> {
    let arrival = parse_law(&cfg.arrival)?;
    let service = parse_law(&cfg.service)?;
    let mut sc = SimConfig::new(cfg.customers, cfg.seed, arrival, service);
    if let Some(wu) = cfg.warmup {
        sc.warmup = wu;
    }
    sc.validate()?;
    let res = simulate(&sc)?;
    let mut w = Writer::new(cfg)?;
    w.table(
        "sim_summary.tsv",
        &["customers", "warmup", "utilization", "utilization_se", "mean_wait", "mean_wait_se"],
        &[vec![
            sc.n_customers.to_string(),
            sc.warmup.to_string(),
            f(res.utilization),
            f(res.utilization_se),
            f(res.mean_wait),
            f(res.mean_wait_se),
        ]],
    )?;
    w.write("sim_histogram.tsv", &res.export_histogram())?;
    w.write("sim_waits.tsv", &res.export_waits())?;
    let mut results = json!({
        "utilization": res.utilization,
        "utilization_se": res.utilization_se,
        "mean_wait": res.mean_wait,
        "mean_wait_se": res.mean_wait_se,
    });
    if let Some(n_paths) = cfg.paths {
        let lambda = *cfg.lambda.first().ok_or_else(|| Error::Precondition("ruin simulation needs --lambda".into()))?;
        let u = need(&cfg.u_grid, "--u-grid for the ruin simulation")?;
        let rs = simulate_ruin(lambda, &service, u, n_paths, cfg.horizon, cfg.seed)?;
        let rows: Vec<Vec<String>> =
            rs.u.iter().zip(&rs.frequency).zip(&rs.se).map(|((u, p), s)| vec![f(*u), f(*p), f(*s)]).collect();
        w.table("sim_ruin.tsv", &["u", "ruin_frequency", "se"], &rows)?;
        results["ruin_frequency"] = json!(rs.frequency);
    }
    w.finish(results)
}

fn cmd_tam_diag(cfg: &RunConfig) -> Result<RunOutcome> {
    let [a, b, n, t] = *need(&cfg.params, "--params")?;
    let p = DplnParams::new(a, b, n, t)?;
    let cal = calibrate(&p, cfg.tam_n, &cfg.tam().grid)?;
    let mut w = Writer::new(cfg)?;
    w.write("tam_points.tsv", &cal.tam.export())?;

    let mut r = rng::root(cfg.seed);
    let xs = sample_dpln(cfg.mc_samples, &p, &mut r)?;
    let m = xs.len() as f64;
    let mut rows = Vec::new();
    let mut max_diff: f64 = 0.0;
    for i in 0..=20 {
        let s = 10f64.powf(-3.0 + 5.0 * i as f64 / 20.0);
        let (mut sum, mut sq) = (0.0, 0.0);
        for &x in xs.values() {
            let e = (-s * x).exp();
            sum += e;
            sq += e * e;
        }
        let mc = sum / m;
        let se = ((sq / m - mc * mc).max(0.0) / m).sqrt();
        let approx = cal.tam.eval_transform(s)?;
        max_diff = max_diff.max((approx - mc).abs());
        rows.push(vec![f(s), f(approx), f(mc), f(se), f((approx - mc).abs())]);
    }
    w.table("tam_accuracy.tsv", &["s", "tam", "monte_carlo", "mc_se", "abs_diff"], &rows)?;

    let mut meta = String::new();
    let _ = writeln!(meta, "r\tq\tobjective\tresidual\ttarget_met\ttam_mean\tmean");
    let _ = writeln!(
        meta,
        "{}\t{}\t{:?}\t{}\t{}\t{}\t{}",
        cal.r,
        cal.q,
        cal.objective,
        cal.residual,
        cal.target_met,
        cal.tam.mean(),
        opt(dpln_moment(1.0, &p).ok())
    );
    w.write("tam_calibration.tsv", &meta)?;
    w.finish(json!({
        "r": cal.r,
        "q": cal.q,
        "objective": format!("{:?}", cal.objective),
        "residual": cal.residual,
        "target_met": cal.target_met,
        "max_abs_diff": max_diff,
    }))
}
