use dpln::distribution::{dpln_moment, DplnParams};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn dpln(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpln")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Data rows of a TSV output: everything after the `#` header and the column line.
fn rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split('\t').map(String::from).collect())
        .collect()
}

fn chain_file(dir: &Path, draws: &[[f64; 4]]) -> PathBuf {
    let mut text = String::from("alpha\tbeta\tnu\ttau2\n");
    for d in draws {
        text.push_str(&format!("{}\t{}\t{}\t{}\n", d[0], d[1], d[2], d[3]));
    }
    write(dir, "chain.tsv", &text)
}

#[test]
fn empty_file_fails() {
    let t = TempDir::new().unwrap();
    let data = write(t.path(), "empty.txt", "# nothing here\n\n");
    let out = dpln(&["fit", "--data", s(&data), "--out-dir", s(t.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no values"));
    assert!(!t.path().join("manifest.json").exists());
}

#[test]
fn negative_value_cites_line() {
    let t = TempDir::new().unwrap();
    let data = write(t.path(), "neg.txt", "1.0\n2.0\n# comment\n3.5\n0.4\n9\n-2.5\n1.1\n");
    let out = dpln(&["fit", "--data", s(&data), "--out-dir", s(t.path())]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 7"), "{err}");
}

#[test]
fn unparseable_line_is_named() {
    let t = TempDir::new().unwrap();
    let data = write(t.path(), "bad.txt", "1.0\n2,5\n");
    let out = dpln(&["fit", "--data", s(&data)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(dpln(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(dpln(&["gm1", "--mu", "fast"]).status.code(), Some(2));
}

#[test]
fn fit_writes_chain_summary_and_predictive() {
    let t = TempDir::new().unwrap();
    let mut r = dpln::rng::root(9);
    let p = DplnParams::new(3.0, 2.0, 0.0, 0.25).unwrap();
    let xs = dpln::distribution::sample_dpln(200, &p, &mut r).unwrap();
    let text: String = xs.values().iter().map(|x| format!("{x}\n")).collect();
    let data = write(t.path(), "data.txt", &text);
    let out_dir = t.path().join("fit");
    let out = dpln(&["fit", "--data", s(&data), "--iterations", "4000", "--thin", "10", "--seed", "4", "--out-dir", s(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let m = manifest(&out_dir);
    assert_eq!(m["outputs"], serde_json::json!(["chain.tsv", "summary.tsv", "predictive.tsv"]));
    assert_eq!(m["config"]["burn_in"], serde_json::Value::Null);
    assert_eq!(m["results"]["n_draws"], 360);

    let chain_text = std::fs::read_to_string(out_dir.join("chain.tsv")).unwrap();
    assert!(chain_text.starts_with("# dpln fit"));
    let chain = dpln::gibbs::read_chain(&chain_text).unwrap();
    assert_eq!(chain.len(), 360);
    assert_eq!(chain.config().burn_in, 400);

    let summary = rows(&out_dir.join("summary.tsv"));
    assert_eq!(summary.len(), 4);
    assert_eq!(summary[0][0], "alpha");
    for (row, truth) in summary.iter().zip([3.0, 2.0, 0.0, 0.25]) {
        let lo: f64 = row[2].parse().unwrap();
        let hi: f64 = row[3].parse().unwrap();
        assert!(lo < hi);
        // wide margin: this is a short chain on 200 points
        assert!(lo - 1.0 < truth && truth < hi + 1.0, "{row:?}");
    }
    let pred = rows(&out_dir.join("predictive.tsv"));
    assert_eq!(pred.len(), 200);
    // density on the log scale integrates to about one over the data range ± 1
    let ys: Vec<f64> = pred.iter().map(|r| r[2].parse().unwrap()).collect();
    let fs: Vec<f64> = pred.iter().map(|r| r[3].parse().unwrap()).collect();
    let mass: f64 = ys.windows(2).zip(fs.windows(2)).map(|(y, f)| 0.5 * (y[1] - y[0]) * (f[0] + f[1])).sum();
    assert!((mass - 1.0).abs() < 0.05, "{mass}");
}

#[test]
fn every_output_echoes_config() {
    let t = TempDir::new().unwrap();
    let out = dpln(&["tam-diag", "--params", "3,2,-0.5,0.25", "--tam-n", "300", "--seed", "17", "--out-dir", s(t.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["tam_points.tsv", "tam_accuracy.tsv", "tam_calibration.tsv"] {
        let text = std::fs::read_to_string(t.path().join(name)).unwrap();
        let run = text.lines().find_map(|l| l.strip_prefix("# run ")).expect("config line");
        let cfg: serde_json::Value = serde_json::from_str(run).unwrap();
        assert_eq!(cfg["seed"], 17);
        assert_eq!(cfg["tam_n"], 300);
        assert_eq!(cfg["params"], serde_json::json!([3.0, 2.0, -0.5, 0.25]));
    }
    let m = manifest(t.path());
    assert!(m["results"]["max_abs_diff"].as_f64().unwrap() < 5e-3);
    assert_eq!(rows(&t.path().join("tam_points.tsv")).len(), 300);
}

#[test]
fn flags_override_config_file() {
    let t = TempDir::new().unwrap();
    let cfg = write(
        t.path(),
        "run.toml",
        "seed = 5\ncustomers = 3000\nwarmup = 100\narrival = \"exp:1\"\nservice = \"exp:3\"\n[prior]\nk = 2.0\n",
    );
    let out_dir = t.path().join("o");
    let out = dpln(&["simulate", "--config", s(&cfg), "--seed", "6", "--service", "exp:4", "--out-dir", s(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let c = &manifest(&out_dir)["config"];
    assert_eq!(c["seed"], 6);
    assert_eq!(c["customers"], 3000);
    assert_eq!(c["warmup"], 100);
    assert_eq!(c["service"], "exp:4");
    assert_eq!(c["prior"]["k"], 2.0);
    assert_eq!(c["prior"]["a"], 1.0);
}

#[test]
fn unknown_config_key_is_rejected() {
    let t = TempDir::new().unwrap();
    let cfg = write(t.path(), "run.toml", "sede = 5\n");
    let out = dpln(&["simulate", "--config", s(&cfg), "--out-dir", s(t.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sede"));
}

#[test]
fn simulate_mm1_and_reproducible() {
    let t = TempDir::new().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    for dir in [&a, &b] {
        let out = dpln(&["simulate", "--arrival", "exp:1", "--service", "exp:2", "--customers", "200000", "--seed", "3", "--out-dir", s(dir)]);
        assert!(out.status.success());
    }
    for name in ["sim_summary.tsv", "sim_histogram.tsv", "sim_waits.tsv", "manifest.json"] {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).unwrap();
        // the out-dir differs, so compare with the directory name masked
        let mask = |v: Vec<u8>, d: &Path| String::from_utf8(v).unwrap().replace(s(d), "OUT");
        assert_eq!(mask(x, &a), mask(y, &b), "{name}");
    }
    let r = &manifest(&a)["results"];
    let (w, se) = (r["mean_wait"].as_f64().unwrap(), r["mean_wait_se"].as_f64().unwrap());
    assert!((w - 0.5).abs() < 4.0 * se + 0.01, "{w} ± {se}");
}

#[test]
fn simulate_gm1_histogram_wiring() {
    let t = TempDir::new().unwrap();
    let out = dpln(&["simulate", "--arrival", "dpln:3,2,0,0.25", "--service", "exp:1.765", "--customers", "50000", "--out-dir", s(t.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let hist = rows(&t.path().join("sim_histogram.tsv"));
    let total: u64 = hist.iter().map(|r| r[1].parse::<u64>().unwrap()).sum();
    assert_eq!(total, 45_000);
    let n: Vec<usize> = hist.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(n, (0..n.len()).collect::<Vec<_>>());
}

#[test]
fn gm1_mu_sweep_all_stable() {
    let t = TempDir::new().unwrap();
    let chain = chain_file(
        t.path(),
        &[[2.15, 1.07, -6.0, 0.36], [2.0, 1.1, -6.02, 0.34], [2.3, 1.02, -5.98, 0.38], [2.1, 1.05, -6.01, 0.37]],
    );
    let out = dpln(&["gm1", "--chain", s(&chain), "--mu-list", "1500,1000,500,400", "--tam-n", "400", "--out-dir", s(t.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = rows(&t.path().join("gm1_summary.tsv"));
    let mus: Vec<&str> = summary.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(mus, ["1500", "1000", "500", "400"]);
    assert!(summary.iter().all(|r| r[3] == "1"));
    // ρ scales like 1/μ
    let rho: Vec<f64> = summary.iter().map(|r| r[4].parse().unwrap()).collect();
    assert!((rho[1] / rho[0] - 1.5).abs() < 1e-12);
    let pmf = rows(&t.path().join("gm1_queue_pmf.tsv"));
    assert_eq!(pmf.len(), 21);
    assert!(pmf[0][1..].iter().map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>().windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn gm1_always_stable_flagged() {
    let t = TempDir::new().unwrap();
    let chain = chain_file(t.path(), &[[0.8, 1.5, 0.0, 0.3]]);
    let out = dpln(&["gm1", "--chain", s(&chain), "--mu", "0.01", "--tam-n", "300", "--out-dir", s(t.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(t.path());
    assert_eq!(m["results"]["always_stable"], true);
    assert_eq!(m["results"]["reports"][0]["always_stable_draws"], 1);
    assert_eq!(m["results"]["reports"][0]["rho_mean"], serde_json::Value::Null);
}

#[test]
fn gm1_service_data_gives_mu_posterior() {
    let t = TempDir::new().unwrap();
    let chain = chain_file(t.path(), &[[3.0, 2.0, 0.0, 0.25], [3.2, 2.1, 0.02, 0.24]]);
    let durations: Vec<f64> = (1..=400).map(|i| 0.5 * (i as f64 / 401.0).ln().abs()).collect();
    let text: String = durations.iter().map(|d| format!("{d}\n")).collect();
    let svc = write(t.path(), "svc.txt", &text);
    let out = dpln(&["gm1", "--chain", s(&chain), "--service-data", s(&svc), "--tam-n", "300", "--out-dir", s(t.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(t.path());
    let mean = m["results"]["mu_posterior"]["mean"].as_f64().unwrap();
    // conjugate G(a + n, b + Σd) with two draws: loose check on the mean
    let exact = (1e-3 + 400.0) / (1e-3 + durations.iter().sum::<f64>());
    assert!((mean / exact - 1.0).abs() < 0.15, "{mean} vs {exact}");
    assert!(t.path().join("mu_posterior.tsv").exists());
}

#[test]
fn gm1_requires_rate() {
    let t = TempDir::new().unwrap();
    let chain = chain_file(t.path(), &[[3.0, 2.0, 0.0, 0.25]]);
    let out = dpln(&["gm1", "--chain", s(&chain), "--out-dir", s(t.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--mu"));
}

#[test]
fn ruin_surface_rules() {
    let t = TempDir::new().unwrap();
    let draws = [[3.0, 2.0, 0.0, 0.25], [2.5, 2.0, 0.2, 0.3], [0.9, 2.0, 0.0, 0.25]];
    let chain = chain_file(t.path(), &draws);
    let out = dpln(&["ruin", "--chain", s(&chain), "--lambda-list", "0.3,0.7", "--u-grid", "0,0.5,1,2,4,8", "--tam-n", "500", "--out-dir", s(t.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let surface = rows(&t.path().join("ruin_surface.tsv"));
    assert_eq!(surface.len(), 12);
    for lambda in [0.3, 0.7] {
        let psi: Vec<f64> = surface
            .iter()
            .filter(|r| r[2].parse::<f64>().unwrap() == lambda)
            .map(|r| r[3].parse().unwrap())
            .collect();
        assert!(psi.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{psi:?}");
        // ψ(0): ρ for stable draws, 1 otherwise
        let want: f64 = draws
            .iter()
            .map(|d| {
                let p = DplnParams::new(d[0], d[1], d[2], d[3]).unwrap();
                match dpln_moment(1.0, &p) {
                    Ok(m) if lambda * m < 1.0 => lambda * m,
                    _ => 1.0,
                }
            })
            .sum::<f64>()
            / 3.0;
        assert!((psi[0] - want).abs() < 2e-3, "{} vs {want}", psi[0]);
        let inv: f64 = surface.iter().find(|r| r[2].parse::<f64>().unwrap() == lambda).unwrap()[1].parse().unwrap();
        assert!((inv - 1.0 / lambda).abs() < 1e-12);
    }
}

#[test]
fn heavy_claims_ruin_likely_above_critical_rate() {
    let t = TempDir::new().unwrap();
    // mean claim 2915: αβ/((α−1)(β+1)) = 1 at α = 3, β = 2
    let nu = 2915f64.ln() - 0.125;
    let chain = chain_file(t.path(), &[[3.0, 2.0, nu, 0.25], [3.1, 2.05, nu - 0.01, 0.25]]);
    let lambdas = format!("{},{},{}", 1.0 / 4000.0, 1.0 / 3000.0, 1.0 / 2500.0);
    let out = dpln(&["ruin", "--chain", s(&chain), "--lambda-list", &lambdas, "--u-grid", "0,1000,10000", "--tam-n", "500", "--out-dir", s(t.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let surface = rows(&t.path().join("ruin_surface.tsv"));
    let psi = |inv: f64, u: f64| -> f64 {
        surface
            .iter()
            .find(|r| r[0].parse::<f64>().unwrap() == u && (r[1].parse::<f64>().unwrap() - inv).abs() < 1e-6)
            .unwrap()[3]
            .parse()
            .unwrap()
    };
    assert_eq!(psi(2500.0, 10000.0), 1.0);
    assert!(psi(3000.0, 0.0) > 0.9);
    assert!(psi(4000.0, 0.0) < 0.8);
    assert!(psi(4000.0, 10000.0) < psi(4000.0, 0.0));
}

#[test]
fn mg1_writes_wq_tables_per_lambda() {
    let t = TempDir::new().unwrap();
    let chain = chain_file(t.path(), &[[3.0, 2.0, 0.0, 0.25]]);
    let out = dpln(&["mg1", "--chain", s(&chain), "--lambda-list", "0.2,0.5", "--tam-n", "400", "--out-dir", s(t.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let wq = rows(&t.path().join("mg1_wq.tsv"));
    assert_eq!(wq.len(), 400);
    let first: Vec<f64> = wq.iter().take(200).map(|r| r[2].parse().unwrap()).collect();
    assert!(first.windows(2).all(|w| w[1] >= w[0]));
    let rho = 0.2 * dpln_moment(1.0, &DplnParams::new(3.0, 2.0, 0.0, 0.25).unwrap()).unwrap();
    assert!((first[0] - (1.0 - rho)).abs() < 1e-3);
    assert!(*first.last().unwrap() > 0.99);
}

#[test]
fn interclaim_data_sets_lambda() {
    let t = TempDir::new().unwrap();
    let chain = chain_file(t.path(), &[[3.0, 2.0, 0.0, 0.25]]);
    let gaps: String = (1..=300).map(|i| format!("{}\n", 4.0 * (i as f64 / 301.0).ln().abs())).collect();
    let ic = write(t.path(), "gaps.txt", &gaps);
    let out = dpln(&["ruin", "--chain", s(&chain), "--interclaim-data", s(&ic), "--u-grid", "0,1", "--tam-n", "300", "--out-dir", s(t.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(t.path());
    let lam = m["results"]["lambda_posterior"]["mean"].as_f64().unwrap();
    assert!((lam - 0.25).abs() < 0.03, "{lam}");
}

#[test]
fn thread_cap_is_honoured() {
    let t = TempDir::new().unwrap();
    let run = |v: &str| {
        Command::new(env!("CARGO_BIN_EXE_dpln"))
            .env("DPLN_THREADS", v)
            .args(["tam-diag", "--params", "3,2,0,0.25", "--tam-n", "200", "--out-dir", s(t.path())])
            .output()
            .unwrap()
    };
    assert!(run("1").status.success());
    let bad = run("zero");
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("DPLN_THREADS"));
}
