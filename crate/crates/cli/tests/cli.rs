use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rindler-rates"));
    c.env_remove("RINDLER_RATES_LOG");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rd = csv::Reader::from_path(path).unwrap();
    let h = rd.headers().unwrap().iter().map(str::to_string).collect();
    let rows = rd.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect();
    (h, rows)
}

fn col(h: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let i = h.iter().position(|c| c == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn tmp() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

fn out(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

#[test]
fn rates_scan_is_deterministic_and_valid() {
    let d = tmp();
    let (a, b) = (out(d.path(), "a.csv"), out(d.path(), "b.csv"));
    for p in [&a, &b] {
        let o = run(d.path(), &["rates", "--out", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (h, rows) = csv_rows(&a);
    assert_eq!(
        h,
        ["E", "xi", "eta", "tau_relax", "fgr_satisfied", "err_est", "status", "config_hash", "schema_version", "tool_version"]
    );
    assert_eq!(rows.len(), 100);
    assert!(col(&h, &rows, "xi").iter().all(|&x| x >= 0.0));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let meta: Value = serde_json::from_slice(&std::fs::read(d.path().join("a.csv.meta.json")).unwrap()).unwrap();
    assert!(meta["created_unix"].as_u64().unwrap() > 0);
    assert_eq!(meta["config_hash"], rows[0][7].as_str());
    let v = run(d.path(), &["validate", a.to_str().unwrap()]);
    assert_eq!(code(&v), 0, "{}", String::from_utf8_lossy(&v.stdout));
}

#[test]
fn rates_json_output_validates() {
    let d = tmp();
    let p = out(d.path(), "r.json");
    let o = run(d.path(), &["rates", "--format", "json", "--set", "rates.points=7", "--out", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let doc: Value = serde_json::from_slice(&std::fs::read(&p).unwrap()).unwrap();
    assert_eq!(doc["rows"].as_array().unwrap().len(), 7);
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(code(&run(d.path(), &["validate", p.to_str().unwrap()])), 0);
}

#[test]
fn kms_check_output_regression() {
    let d = tmp();
    let p = out(d.path(), "k.csv");
    let o = run(d.path(), &["kms-check", "--out", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let (h, rows) = csv_rows(&p);
    let (s, sp, sm) = (col(&h, &rows, "s"), col(&h, &rows, "S(s)"), col(&h, &rows, "S(-s)"));
    let (ratio, dev) = (col(&h, &rows, "ratio"), col(&h, &rows, "rel_dev"));
    let (x, y): (Vec<f64>, Vec<f64>) = s
        .iter()
        .zip(&sp)
        .zip(&sm)
        .filter(|((s, _), _)| **s >= 0.2 - 1e-12 && **s <= 1.5 + 1e-12)
        .map(|((s, p), m)| (*s, (m / p).ln()))
        .unzip();
    assert!(x.len() >= 10);
    let k = slope(&x, &y);
    assert!((k + 2.0 * PI).abs() <= 5e-3 * 2.0 * PI, "{k}");
    let i0 = s.iter().position(|&v| v == 0.0).unwrap();
    assert!((ratio[i0] - 1.0).abs() <= 1e-6);
    for i in 0..s.len() {
        let kms = (-2.0 * PI * s[i]).exp();
        assert!((dev[i] - (ratio[i] - kms).abs() / kms).abs() <= 1e-12);
    }
}

#[test]
fn simulate_relaxes_to_gibbs() {
    let d = tmp();
    let p = out(d.path(), "s.csv");
    let o = run(
        d.path(),
        &["simulate", "--set", "simulate.p_plus=0.7", "--set", "simulate.coherence_im=0.2", "--out", p.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = csv_rows(&p);
    let (sigma, dist) = (col(&h, &rows, "sigma"), col(&h, &rows, "trace_dist_to_gibbs"));
    assert_eq!(col(&h, &rows, "p_plus")[0], 0.7);
    assert_eq!(col(&h, &rows, "im_c")[0], 0.2);
    assert!(*dist.last().unwrap() <= 1e-6);
    let meta: Value = serde_json::from_slice(&std::fs::read(d.path().join("s.csv.meta.json")).unwrap()).unwrap();
    let target = meta["summary"]["lambda2_eta"].as_f64().unwrap();
    let (x, y): (Vec<f64>, Vec<f64>) = sigma.iter().zip(&dist).map(|(s, v)| (*s, v.ln())).unzip();
    let rate = -slope(&x, &y);
    assert!((rate / target - 1.0).abs() <= 1e-3, "{rate} vs {target}");
    assert_eq!(code(&run(d.path(), &["validate", p.to_str().unwrap()])), 0);
}

#[test]
fn localized_limit_scan_and_restrictions() {
    let d = tmp();
    let p = out(d.path(), "l.csv");
    assert_eq!(code(&run(d.path(), &["localized-limit", "--out", p.to_str().unwrap()])), 0);
    let (h, rows) = csv_rows(&p);
    let (shape, gap, xi) = (col(&h, &rows, "sharpness"), col(&h, &rows, "rel_gap"), col(&h, &rows, "xi_epsilon"));
    for s in [1.0, 2.0] {
        let g: Vec<f64> = gap.iter().zip(&shape).filter(|(_, &p)| p == s).map(|(g, _)| *g).collect();
        assert_eq!(g.len(), 3);
        assert!(g[1] < g[0] && g[2] < g[1] && g[2] <= 0.05);
    }
    assert!((xi[2] - xi[5]).abs() / xi[2] <= 0.05);
    let bad = run(d.path(), &["localized-limit", "--set", "model.d=2"]);
    assert_eq!(code(&bad), 2);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("d = 3"));
}

#[test]
fn resonances_report_at_zero_coupling_and_theta_check() {
    let d = tmp();
    let p = out(d.path(), "z.json");
    let o = run(
        d.path(),
        &[
            "resonances",
            "--set",
            "resonances.lambdas=[0.0]",
            "--set",
            "resonances.n_s=101",
            "--set",
            "resonances.s_max=20.0",
            "--set",
            "resonances.n_k=6",
            "--out",
            p.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_slice(&std::fs::read(&p).unwrap()).unwrap();
    let truncated = doc["summary"]["lambdas"][0]["truncated"].as_array().unwrap();
    assert_eq!(truncated.len(), 2);
    for t in truncated {
        for (k, want) in [("zero", 0.0), ("eps0", 0.0), ("eps_plus", 1.0), ("eps_minus", -1.0)] {
            assert_eq!(t[k][0].as_f64().unwrap(), want);
            assert_eq!(t[k][1].as_f64().unwrap(), 0.0);
        }
    }
    assert!(doc["checks"].as_array().unwrap().iter().any(|c| c["name"].as_str().unwrap().starts_with("theta robustness")));
    assert_eq!(code(&run(d.path(), &["validate", p.to_str().unwrap()])), 0);
}

#[test]
fn resonances_width_ratio_at_reference_lambda() {
    let d = tmp();
    let p = out(d.path(), "w.json");
    let o = run(d.path(), &["resonances", "--set", "resonances.lambdas=[0.05]", "--out", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_slice(&std::fs::read(&p).unwrap()).unwrap();
    let l = &doc["summary"]["lambdas"][0];
    let pert = -l["perturbative"]["eps_plus"][1].as_f64().unwrap();
    for t in l["truncated"].as_array().unwrap() {
        let w = -t["eps_plus"][1].as_f64().unwrap();
        let ratio = w / pert;
        println!("theta' = {}: truncated/perturbative width ratio {ratio:.6}", t["theta"]);
        assert!((0.9..=1.1).contains(&ratio), "width ratio {ratio}");
    }
}

#[test]
fn resonance_extraction_failure_dumps_spectrum() {
    let d = tmp();
    let p = out(d.path(), "bad.json");
    let o = run(
        d.path(),
        &["resonances", "--set", "resonances.lambdas=[0.05]", "--set", "resonances.n_s=11", "--set", "resonances.n_k=2", "--out", p.to_str().unwrap()],
    );
    assert_eq!(code(&o), 3);
    let dump = d.path().join("bad.json.spectrum.json");
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.json.spectrum.json"));
    let doc: Value = serde_json::from_slice(&std::fs::read(dump).unwrap()).unwrap();
    assert!(!doc["eigenvalues"].as_array().unwrap().is_empty());
}

#[test]
fn memory_budget_is_enforced() {
    let d = tmp();
    let o = run(d.path(), &["resonances", "--set", "resonances.max_dimension=1000"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn configuration_errors_exit_with_2() {
    let d = tmp();
    assert_eq!(code(&run(d.path(), &["rates", "--set", "model.acceleration=2"])), 2);
    assert_eq!(code(&run(d.path(), &["rates", "--config", "does-not-exist.toml"])), 2);
    assert_eq!(code(&run(d.path(), &["simulate", "--set", "simulate.p_plus=2"])), 2);
    std::fs::write(d.path().join("c.toml"), "schema_version = 1\n").unwrap();
    assert_eq!(code(&run(d.path(), &["rates", "--config", "c.toml"])), 2);
}

#[test]
fn show_config_round_trips_through_a_file() {
    let d = tmp();
    let o = run(d.path(), &["show-config", "--set", "model.lambda=0.02"]);
    assert_eq!(code(&o), 0);
    std::fs::write(d.path().join("c.toml"), &o.stdout).unwrap();
    let a = run(d.path(), &["rates", "--config", "c.toml", "--set", "rates.points=3"]);
    let b = run(d.path(), &["rates", "--set", "model.lambda=0.02", "--set", "rates.points=3"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn validator_detects_tampering() {
    let d = tmp();
    let p = out(d.path(), "k.csv");
    assert_eq!(code(&run(d.path(), &["kms-check", "--set", "kms.points=4", "--out", p.to_str().unwrap()])), 0);
    let text = std::fs::read_to_string(&p).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut f: Vec<String> = lines[2].split(',').map(str::to_string).collect();
    f[3] = "1.0e0".into();
    lines[2] = f.join(",");
    std::fs::write(&p, lines.join("\n") + "\n").unwrap();
    let v = run(d.path(), &["validate", p.to_str().unwrap()]);
    assert_eq!(code(&v), 3);
    assert!(String::from_utf8_lossy(&v.stdout).contains("ratio != S(-s)/S(s)"));
}
