//! Re-reads an output file and re-checks provenance and row-level invariants.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rindler_core::dynamics::{gibbs_state, trace_distance, DetectorState};
use rindler_core::resonances::ZERO_SEPARATION;
use serde_json::Value;

use crate::commands::{KMS_COLUMNS, LOCALIZED_COLUMNS, RATES_COLUMNS, RESONANCE_COLUMNS, SIMULATE_COLUMNS};
use crate::config::{RunConfig, SCHEMA_VERSION};
use crate::error::CliError;
use crate::output::{sidecar_path, PROVENANCE_COLUMNS};

type Row = HashMap<String, String>;

#[derive(Debug, Default)]
pub struct ValidationReport {
    pub kind: String,
    pub rows: usize,
    pub checked: usize,
    pub violations: Vec<String>,
    /// whether the sidecar config was available (needed for config-dependent checks)
    pub with_config: bool,
}

impl ValidationReport {
    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.violations.push(msg());
        }
    }
}

fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Row>), CliError> {
    let text = std::fs::read_to_string(path)?;
    if text.trim_start().starts_with('{') {
        let doc: Value = serde_json::from_str(&text)?;
        let mut cols: Vec<String> = doc["columns"]
            .as_array()
            .ok_or_else(|| CliError::Numerical("JSON output without a columns array".into()))?
            .iter()
            .filter_map(|v| v.as_str().map(str::to_string))
            .collect();
        let prov: Vec<(String, String)> = PROVENANCE_COLUMNS
            .iter()
            .map(|k| {
                let v = &doc[*k];
                (k.to_string(), v.as_str().map_or_else(|| v.to_string(), str::to_string))
            })
            .collect();
        let mut rows = Vec::new();
        for r in doc["rows"].as_array().into_iter().flatten() {
            let mut row: Row = cols
                .iter()
                .map(|c| {
                    let v = &r[c];
                    let s = match v {
                        Value::Null => String::new(),
                        Value::String(s) => s.clone(),
                        other => other.to_string(),
                    };
                    (c.clone(), s)
                })
                .collect();
            row.extend(prov.iter().cloned());
            rows.push(row);
        }
        cols.extend(PROVENANCE_COLUMNS.iter().map(|s| s.to_string()));
        return Ok((cols, rows));
    }
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let cols: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        rows.push(cols.iter().cloned().zip(rec.iter().map(str::to_string)).collect());
    }
    Ok((cols, rows))
}

fn num(row: &Row, k: &str) -> f64 {
    row.get(k).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + 1e-300
}

fn detect(cols: &[String]) -> Option<&'static str> {
    let data: Vec<&str> = cols.iter().map(String::as_str).filter(|c| !PROVENANCE_COLUMNS.contains(c)).collect();
    let table: [(&str, &[&str]); 5] = [
        ("rates", &RATES_COLUMNS),
        ("kms-check", &KMS_COLUMNS),
        ("resonances", &RESONANCE_COLUMNS),
        ("simulate", &SIMULATE_COLUMNS),
        ("localized-limit", &LOCALIZED_COLUMNS),
    ];
    table.iter().find(|(_, c)| data == **c).map(|(k, _)| *k)
}

fn load_sidecar(path: &Path) -> Option<(RunConfig, String)> {
    let text = std::fs::read_to_string(sidecar_path(path)).ok()?;
    let meta: Value = serde_json::from_str(&text).ok()?;
    let cfg = RunConfig::from_toml(meta["config"].as_str()?, &[]).ok()?;
    Some((cfg, meta["config_hash"].as_str()?.to_string()))
}

pub fn validate_file(path: &Path) -> Result<ValidationReport, CliError> {
    let (cols, rows) = read_rows(path)?;
    let kind = detect(&cols)
        .ok_or_else(|| CliError::Numerical(format!("unrecognized column layout in {}: {cols:?}", path.display())))?;
    let mut rep = ValidationReport { kind: kind.to_string(), rows: rows.len(), ..Default::default() };
    let sidecar = load_sidecar(path);
    rep.with_config = sidecar.is_some();

    let hash = rows.first().map(|r| r["config_hash"].clone()).unwrap_or_default();
    for (i, r) in rows.iter().enumerate() {
        rep.check(r["config_hash"] == hash, || format!("row {i}: config hash differs from row 0"));
        rep.check(r["schema_version"] == SCHEMA_VERSION.to_string(), || {
            format!("row {i}: schema_version {} (expected {SCHEMA_VERSION})", r["schema_version"])
        });
        rep.check(!r["tool_version"].is_empty(), || format!("row {i}: missing tool_version"));
        rep.check(r.contains_key("err_est"), || format!("row {i}: missing err_est"));
    }
    if let Some((cfg, meta_hash)) = &sidecar {
        rep.check(cfg.hash() == *meta_hash, || "sidecar config does not reproduce its recorded hash".into());
        rep.check(rows.is_empty() || hash == *meta_hash, || "data rows carry a different config hash than the sidecar".into());
    }
    let cfg = sidecar.map(|s| s.0);
    match kind {
        "rates" => rates_rows(&rows, cfg.as_ref(), &mut rep),
        "kms-check" => kms_rows(&rows, &mut rep),
        "resonances" => resonance_rows(&rows, &mut rep),
        "simulate" => simulate_rows(&rows, cfg.as_ref(), &mut rep),
        _ => localized_rows(&rows, &mut rep),
    }
    Ok(rep)
}

fn rates_rows(rows: &[Row], cfg: Option<&RunConfig>, rep: &mut ValidationReport) {
    let ok: Vec<&Row> = rows.iter().filter(|r| r["status"] == "ok").collect();
    let max = ok.iter().map(|r| num(r, "xi")).fold(0.0, f64::max);
    for (i, r) in ok.iter().enumerate() {
        let (e, xi, eta) = (num(r, "E"), num(r, "xi"), num(r, "eta"));
        rep.check(xi >= 0.0, || format!("row {i}: xi = {xi} < 0"));
        rep.check(num(r, "err_est") >= 0.0, || format!("row {i}: negative or missing err_est"));
        rep.check(eta >= xi && eta <= 2.0 * xi, || format!("row {i}: eta = {eta} outside [xi, 2 xi]"));
        if let Some(c) = cfg {
            let want = (1.0 + (-2.0 * PI * e / c.model.a).exp()) * xi;
            rep.check(close(eta, want, 1e-12), || format!("row {i}: eta != (1 + e^(-2 pi E/a)) xi"));
            let l2 = c.model.lambda * c.model.lambda;
            let tau = num(r, "tau_relax");
            rep.check(l2 == 0.0 || close(tau * l2 * eta, 1.0, 1e-12), || format!("row {i}: tau_relax != 1/(lambda^2 eta)"));
            let sat = r["fgr_satisfied"] == "true";
            rep.check(sat == (xi > c.rates.threshold * max), || format!("row {i}: fgr_satisfied inconsistent with threshold"));
        }
    }
}

fn kms_rows(rows: &[Row], rep: &mut ValidationReport) {
    for (i, r) in rows.iter().enumerate() {
        let (s, p, m) = (num(r, "s"), num(r, "S(s)"), num(r, "S(-s)"));
        let (ratio, kms, dev) = (num(r, "ratio"), num(r, "kms"), num(r, "rel_dev"));
        rep.check(p > 0.0 && m >= 0.0, || format!("row {i}: spectral density not positive"));
        rep.check(close(ratio, m / p, 1e-12), || format!("row {i}: ratio != S(-s)/S(s)"));
        rep.check(close(kms, (-2.0 * PI * s).exp(), 1e-14), || format!("row {i}: kms != exp(-2 pi s)"));
        rep.check(close(dev, (ratio - kms).abs() / kms, 1e-9) || dev < 1e-15, || format!("row {i}: rel_dev not recomputable"));
        if s == 0.0 {
            rep.check((ratio - 1.0).abs() <= 1e-6, || format!("row {i}: ratio at s = 0 is {ratio}"));
        }
    }
}

fn resonance_rows(rows: &[Row], rep: &mut ValidationReport) {
    let key = |r: &Row| (r["lambda"].clone(), r["theta"].clone(), r["method"].clone());
    let eps0: HashMap<_, f64> = rows
        .iter()
        .filter(|r| r["eigenvalue"] == "eps0")
        .map(|r| (key(r), num(r, "re").hypot(num(r, "im"))))
        .collect();
    for (i, r) in rows.iter().enumerate() {
        let (lam, im) = (num(r, "lambda"), num(r, "im"));
        if r["eigenvalue"] == "zero" {
            // the persistent eigenvalue is only zero up to the extraction tolerance
            let bound = ZERO_SEPARATION * eps0.get(&key(r)).copied().unwrap_or(0.0);
            let z = num(r, "re").hypot(im);
            rep.check(z <= bound, || format!("row {i}: persistent eigenvalue {z:e} above {bound:e}"));
        } else {
            let scale = lam * lam * 100.0 + 1e-12;
            rep.check(im <= 1e-6 * scale, || format!("row {i}: Im eigenvalue {im} > 0"));
        }
        if r["method"] != "perturbative" {
            rep.check(num(r, "err_est") >= 0.0, || format!("row {i}: truncated row without convergence estimate"));
        }
        let name = r["eigenvalue"].as_str();
        rep.check(["zero", "eps0", "eps_plus", "eps_minus"].contains(&name), || format!("row {i}: eigenvalue '{name}'"));
    }
}

fn simulate_rows(rows: &[Row], cfg: Option<&RunConfig>, rep: &mut ValidationReport) {
    let mut prev = f64::INFINITY;
    let gibbs = cfg.map(|c| gibbs_state(c.model.e, 2.0 * PI / c.model.a));
    for (i, r) in rows.iter().enumerate() {
        let (pp, pm) = (num(r, "p_plus"), num(r, "p_minus"));
        let coh = Complex64::new(num(r, "re_c"), num(r, "im_c"));
        let d = num(r, "trace_dist_to_gibbs");
        rep.check((pp + pm - 1.0).abs() <= 1e-12, || format!("row {i}: populations do not sum to 1"));
        rep.check(coh.norm_sqr() <= pp * pm + 1e-12, || format!("row {i}: state not positive"));
        rep.check(d <= prev * (1.0 + 1e-12) + 1e-15, || format!("row {i}: distance to Gibbs increased"));
        prev = d;
        if let (Some(g), Ok(st)) = (&gibbs, DetectorState::from_parts(pp.clamp(0.0, 1.0), coh)) {
            let want = trace_distance(&st, g);
            rep.check((want - d).abs() <= 1e-12, || format!("row {i}: trace distance not recomputable"));
        }
        if i == 0 {
            if let Some(c) = cfg {
                let s = &c.simulate;
                let ok = (pp - s.p_plus).abs() <= 1e-15 && (coh - Complex64::new(s.coherence_re, s.coherence_im)).norm() <= 1e-15;
                rep.check(ok, || "initial row differs from the configured state".into());
            }
        }
    }
}

fn localized_rows(rows: &[Row], rep: &mut ValidationReport) {
    let limit = rows.first().map(|r| num(r, "xi_limit"));
    for (i, r) in rows.iter().enumerate() {
        let (x, l, g) = (num(r, "xi_epsilon"), num(r, "xi_limit"), num(r, "rel_gap"));
        rep.check(Some(l) == limit, || format!("row {i}: xi_limit differs between rows"));
        rep.check(x >= 0.0, || format!("row {i}: xi_epsilon < 0"));
        rep.check(close(g, (x - l).abs() / l, 1e-12), || format!("row {i}: rel_gap not recomputable"));
    }
}
