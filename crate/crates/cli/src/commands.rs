//! The computing subcommands. Each returns an [`Outcome`]; writing is left to the caller.

use std::f64::consts::PI;
use std::path::Path;

use log::{info, warn};
use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::{json, Value};

use rindler_core::dynamics::{self, DetectorState};
use rindler_core::formfactor::{FormFactor, ProfileSpec};
use rindler_core::rates::{self, RateOptions};
use rindler_core::resonances::{
    level_shift_extrapolated, resonances_perturbative, resonances_truncated_with, spectral_extent, LambShift,
    LevelShiftData, LevelShiftTarget, LevelShiftValue, ResonanceSet, TruncatedResonances, TruncationGrid,
};
use rindler_core::Error as CoreError;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{Cell, Check, Outcome, Table};

pub const RATES_COLUMNS: [&str; 7] = ["E", "xi", "eta", "tau_relax", "fgr_satisfied", "err_est", "status"];
pub const KMS_COLUMNS: [&str; 7] = ["s", "S(s)", "S(-s)", "ratio", "kms", "rel_dev", "err_est"];
pub const RESONANCE_COLUMNS: [&str; 8] = ["lambda", "theta", "method", "eigenvalue", "re", "im", "err_est", "width_ratio"];
pub const SIMULATE_COLUMNS: [&str; 7] = ["sigma", "p_plus", "p_minus", "re_c", "im_c", "trace_dist_to_gibbs", "err_est"];
pub const LOCALIZED_COLUMNS: [&str; 6] = ["sharpness", "epsilon", "xi_epsilon", "xi_limit", "rel_gap", "err_est"];

const EIGENVALUE_NAMES: [&str; 4] = ["zero", "eps0", "eps_plus", "eps_minus"];

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn c(z: Complex64) -> Value {
    json!([z.re, z.im])
}

fn form_factor(cfg: &RunConfig, spec: &ProfileSpec) -> Result<FormFactor, CliError> {
    Ok(FormFactor::new(spec, &cfg.params())?)
}

fn options(rel_tol: f64) -> RateOptions {
    RateOptions { rel_tol, inner_rel_tol: (rel_tol * 1e-2).max(1e-13) }
}

fn thermal(cfg: &RunConfig) -> Value {
    let beta = cfg.params().beta();
    json!({ "beta": beta, "temperature": 1.0 / beta })
}

pub fn rates(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let r = &cfg.rates;
    let ff = form_factor(cfg, &cfg.profile)?;
    let grid = linspace(r.e_min, r.e_max, r.points);
    let scan = rates::fgr_scan(&grid, &ff, r.threshold, &options(r.rel_tol))?;
    let mut table = Table::new(&RATES_COLUMNS);
    for x in &scan.results {
        table.push(vec![
            x.e.into(),
            x.xi.into(),
            x.eta.into(),
            x.tau_relax.into(),
            x.fgr_satisfied.into(),
            x.err_est.into(),
            x.failure.as_deref().unwrap_or("ok").into(),
        ]);
    }
    let computed: Vec<_> = scan.results.iter().filter(|x| x.failure.is_none()).collect();
    let nonneg = computed.iter().all(|x| x.xi >= 0.0);
    let above = computed.iter().filter(|x| x.fgr_satisfied).count();
    let checks = vec![
        Check::new("xi >= 0", nonneg, format!("{} computed points", computed.len())),
        Check::new(
            "golden-rule condition",
            above == computed.len(),
            format!("{above} of {} points above {:e} x max xi", computed.len(), r.threshold),
        ),
    ];
    let summary = json!({
        "points": grid.len(),
        "failures": scan.failures(),
        "max_xi": scan.max_xi,
        "threshold": r.threshold,
        "exceptional_candidates": scan.exceptional_candidates,
        "thermal": thermal(cfg),
    });
    Ok(Outcome { kind: "rates", table, summary, checks, failed_rows: scan.failures() })
}

pub fn kms_check(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let k = &cfg.kms;
    let ff = form_factor(cfg, &cfg.profile)?;
    let grid = linspace(k.s_min, k.s_max, k.points);
    let chk = rates::kms_check(&grid, &ff, &options(k.rel_tol), k.fit_min, k.fit_max)?;
    let mut table = Table::new(&KMS_COLUMNS);
    for r in &chk.rows {
        table.push(vec![
            r.s.into(),
            r.s_plus.into(),
            r.s_minus.into(),
            r.ratio.into(),
            r.kms.into(),
            r.rel_dev.into(),
            r.err_est.into(),
        ]);
    }
    let target = -2.0 * PI;
    let slope_dev = (chk.fitted_slope - target).abs() / (2.0 * PI);
    let mut checks = vec![
        Check::new(
            "fitted slope -2pi within 0.5%",
            slope_dev <= 5e-3,
            format!("slope {:.10} +- {:.2e}", chk.fitted_slope, chk.fitted_slope_stderr),
        ),
        Check::new(
            "pointwise log deviation",
            chk.max_log_dev <= 1e-2,
            format!("max |log ratio + 2 pi s| / (1 + 2 pi s) = {:.3e}", chk.max_log_dev),
        ),
    ];
    if let Some(r0) = chk.rows.iter().find(|r| r.s == 0.0) {
        checks.push(Check::new("ratio at s = 0", (r0.ratio - 1.0).abs() <= 1e-6, format!("{:.16e}", r0.ratio)));
    }
    let summary = json!({
        "max_rel_dev": chk.max_rel_dev,
        "max_log_dev": chk.max_log_dev,
        "fitted_slope": chk.fitted_slope,
        "fitted_slope_stderr": chk.fitted_slope_stderr,
        "target_slope": target,
        "fit_window": [k.fit_min, k.fit_max],
        "thermal": thermal(cfg),
    });
    Ok(Outcome { kind: "kms-check", table, summary, checks, failed_rows: 0 })
}

/// Writes the located eigenvalues of a failed extraction and returns the matching error.
fn dump_spectrum(path: &Path, lambda: f64, theta: f64, msg: &str, eig: &[Complex64]) -> CliError {
    let doc = json!({
        "error": msg,
        "lambda": lambda,
        "theta": theta,
        "eigenvalues": eig.iter().map(|z| c(*z)).collect::<Vec<_>>(),
    });
    let written = serde_json::to_vec_pretty(&doc)
        .map_err(std::io::Error::other)
        .and_then(|b| std::fs::write(path, b));
    match written {
        Ok(()) => CliError::Extraction { msg: msg.to_string(), dump: path.display().to_string() },
        Err(e) => CliError::Numerical(format!("{msg} (spectrum dump to {} failed: {e})", path.display())),
    }
}

fn lamb_shift(ff: &FormFactor) -> Result<LambShift, CliError> {
    let regs: Vec<f64> = (0..7).map(|j| 0.1 * 0.5f64.powi(j)).collect();
    let mut out = [0.0; 4];
    for (i, t) in [LevelShiftTarget::PlusE, LevelShiftTarget::MinusE].into_iter().enumerate() {
        let x = level_shift_extrapolated(t, &regs, ff)?;
        let LevelShiftValue::Scalar(z) = x.extrapolated else {
            return Err(CliError::Numerical("unexpected matrix-valued level shift".into()));
        };
        out[2 * i] = z.re;
        out[2 * i + 1] = x.error;
    }
    Ok(LambShift { plus: out[0], minus: out[2], plus_err: out[1], minus_err: out[3] })
}

fn mean_width(s: &ResonanceSet) -> f64 {
    0.5 * (s.width_plus() + s.width_minus())
}

pub fn resonances(cfg: &RunConfig, dump: &Path) -> Result<Outcome, CliError> {
    let z = &cfg.resonances;
    let ff = form_factor(cfg, &cfg.profile)?;
    let e = cfg.model.e;
    let (xi, xi_err) = rates::xi_with_error(e, &ff, &RateOptions::default())?;
    let ls = LevelShiftData::from_xi(e, cfg.model.a, xi);
    let eta_err = xi_err * (1.0 + ls.q * ls.q);
    let lamb = if z.lamb_shift { Some(lamb_shift(&ff)?) } else { None };
    let s_max = match z.s_max {
        Some(v) => v,
        None => spectral_extent(&ff, 1e-4)?,
    };
    let k_max = z.k_max.unwrap_or_else(|| rates::transverse_cutoff(&ff, 1e-8));
    let mut grids = Vec::new();
    for &th in &z.thetas {
        let g = TruncationGrid::uniform(&ff, z.n_s, s_max, z.n_k, k_max, z.boson_cutoff, th)?;
        let largest = g.refined(&ff)?.dimension().max(g.extended(&ff)?.dimension());
        if largest > z.max_dimension {
            return Err(CliError::Config(format!(
                "grid at theta' = {th} needs dimension {largest} (refinement included), above max_dimension {}",
                z.max_dimension
            )));
        }
        grids.push(g);
    }

    let mut table = Table::new(&RESONANCE_COLUMNS);
    let mut checks = Vec::new();
    let mut per_lambda = Vec::new();
    let mut widths: Vec<Vec<(f64, f64)>> = vec![Vec::new(); z.thetas.len()];
    for &lam in &z.lambdas {
        let pert = resonances_perturbative(lam, &ls, lamb.as_ref());
        let pert_err = lam * lam * eta_err;
        for (name, v) in EIGENVALUE_NAMES.iter().zip(pert.as_array()) {
            let err = if *name == "zero" { Cell::Null } else { pert_err.into() };
            table.push(vec![lam.into(), Cell::Null, "perturbative".into(), (*name).into(), v.re.into(), v.im.into(), err, Cell::Null]);
        }
        let mut runs: Vec<(f64, TruncatedResonances)> = Vec::new();
        for (ti, g) in grids.iter().enumerate() {
            let th = g.theta_im;
            info!("resonances: lambda = {lam}, theta' = {th}, dimension {}", g.dimension());
            let r = match resonances_truncated_with(lam, g, &ff, z.dense) {
                Ok(r) => r,
                Err(CoreError::Extraction { msg, eigenvalues }) => {
                    return Err(dump_spectrum(dump, lam, th, &msg, &eigenvalues));
                }
                Err(err) => return Err(err.into()),
            };
            let set = r.report.set;
            for (j, (name, v)) in EIGENVALUE_NAMES.iter().zip(set.as_array()).enumerate() {
                let p = pert.as_array()[j];
                let ratio = if j > 0 && p.im != 0.0 { Cell::F(v.im / p.im) } else { Cell::Null };
                table.push(vec![
                    lam.into(),
                    th.into(),
                    r.report.method.into(),
                    (*name).into(),
                    v.re.into(),
                    v.im.into(),
                    r.convergence[j].into(),
                    ratio,
                ]);
            }
            if lam > 0.0 {
                let ratio = mean_width(&set) / mean_width(&pert);
                checks.push(Check::new(
                    format!("width ratio truncated/perturbative, lambda = {lam}, theta' = {th}"),
                    (ratio - 1.0).abs() <= z.width_tolerance,
                    format!("{ratio:.6} (allowed 1 +- {})", z.width_tolerance),
                ));
                widths[ti].push((lam, mean_width(&set)));
            } else {
                let exact = [0.0, 0.0, e, -e];
                let dev = set.as_array().iter().zip(exact).map(|(v, x)| (v - x).norm()).fold(0.0, f64::max);
                checks.push(Check::new(
                    format!("lambda = 0 spectrum is {{0, 0, +-E}}, theta' = {th}"),
                    dev <= 1e-12,
                    format!("max deviation {dev:.3e}"),
                ));
            }
            runs.push((th, r));
        }
        let mut agreement = Vec::new();
        for (i, (ta, a)) in runs.iter().enumerate() {
            for (tb, b) in &runs[i + 1..] {
                let (sa, sb) = (a.report.set.as_array(), b.report.set.as_array());
                let rows: Vec<Value> = (0..4)
                    .map(|j| {
                        let diff = (sa[j] - sb[j]).norm();
                        let est = a.convergence[j] + b.convergence[j];
                        json!({ "eigenvalue": EIGENVALUE_NAMES[j], "difference": diff, "estimate": est })
                    })
                    .collect();
                let ok = (1..4).all(|j| (sa[j] - sb[j]).norm() <= a.convergence[j] + b.convergence[j]);
                checks.push(Check::new(
                    format!("theta robustness, lambda = {lam}, theta' = {ta} vs {tb}"),
                    ok,
                    "resonance differences within the summed grid-convergence estimates",
                ));
                agreement.push(json!({ "thetas": [ta, tb], "rows": rows }));
            }
        }
        if runs.len() < 2 {
            warn!("only one theta' configured: robustness check skipped");
        }
        per_lambda.push(json!({
            "lambda": lam,
            "perturbative": {
                "eps0": c(pert.eps0), "eps_plus": c(pert.eps_plus), "eps_minus": c(pert.eps_minus),
                "lamb_shift_included": pert.lamb_shift_included,
            },
            "truncated": runs.iter().map(|(th, r)| json!({
                "theta": th,
                "method": r.report.method,
                "dimension": r.report.dimension,
                "zero": c(r.report.set.zero),
                "eps0": c(r.report.set.eps0),
                "eps_plus": c(r.report.set.eps_plus),
                "eps_minus": c(r.report.set.eps_minus),
                "convergence": r.convergence,
                "ball_counts": r.report.balls.iter().map(|b| b.found).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
            "theta_agreement": agreement,
        }));
    }
    let mut slopes = Vec::new();
    for (ti, w) in widths.iter().enumerate() {
        if w.len() >= 2 {
            let (x, y): (Vec<f64>, Vec<f64>) = w.iter().map(|(l, v)| (l.ln(), v.ln())).unzip();
            let (slope, _, _) = rates::linear_fit(&x, &y);
            let th = z.thetas[ti];
            checks.push(Check::new(
                format!("log-log width slope, theta' = {th}"),
                (slope - 2.0).abs() <= 0.2,
                format!("{slope:.4} (allowed 2 +- 0.2)"),
            ));
            slopes.push(json!({ "theta": th, "slope": slope }));
        }
    }
    let summary = json!({
        "E": e,
        "xi": xi,
        "eta": ls.eta,
        "eta_err": eta_err,
        "lamb_shift": lamb.map(|l| json!({ "plus": l.plus, "minus": l.minus, "plus_err": l.plus_err, "minus_err": l.minus_err })),
        "grid": { "n_s": z.n_s, "n_k": z.n_k, "s_max": s_max, "k_max": k_max, "boson_cutoff": z.boson_cutoff,
                  "dimensions": grids.iter().map(|g| g.dimension()).collect::<Vec<_>>() },
        "lambdas": per_lambda,
        "width_slopes": slopes,
    });
    Ok(Outcome { kind: "resonances", table, summary, checks, failed_rows: 0 })
}

pub fn simulate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = &cfg.simulate;
    let params = cfg.params();
    if params.lambda == 0.0 {
        return Err(CliError::Config("simulate needs lambda != 0 (no relaxation at zero coupling)".into()));
    }
    let ff = form_factor(cfg, &cfg.profile)?;
    let e = params.e;
    let (xi, xi_err) = rates::xi_with_error(e, &ff, &RateOptions::default())?;
    let r = dynamics::davies_rates_from_xi(e, xi, &params);
    let eta = rates::eta_from_xi(e, xi, params.a);
    let target = params.lambda * params.lambda * eta;
    let tau = rates::tau_relax_from_eta(params.lambda, eta);
    if !tau.is_finite() {
        return Err(CliError::Numerical(format!("relaxation time is infinite (eta = {eta:e})")));
    }
    let rho0 = DetectorState::from_parts(s.p_plus, Complex64::new(s.coherence_re, s.coherence_im))?;
    let sigma = linspace(0.0, s.horizon * tau, s.points);
    let profile_id = format!("bump(w1={}, w_perp={}, sharpness={})", cfg.profile.w1, cfg.profile.w_perp, cfg.profile.sharpness);
    let traj = dynamics::evolve(&rho0, &sigma, &r, e)?.with_metadata(params.lambda, params.a, profile_id.clone());
    let dist = traj.distances_to_gibbs();
    let mut table = Table::new(&SIMULATE_COLUMNS);
    for ((t, st), d) in traj.sigma.iter().zip(&traj.states).zip(&dist) {
        let coh = st.coherence();
        table.push(vec![(*t).into(), st.p_plus().into(), st.p_minus().into(), coh.re.into(), coh.im.into(), (*d).into(), Cell::Null]);
    }
    let fit = dynamics::fit_decay_rate(&traj);
    let ratio = fit.rate / target;
    let last = *dist.last().unwrap();
    let mut checks = Vec::new();
    if fit.degenerate {
        checks.push(Check::new("fitted rate", true, "initial state is the Gibbs state; fit skipped"));
    } else {
        checks.push(Check::new("fitted rate / (lambda^2 eta) in [0.999, 1.001]", (ratio - 1.0).abs() <= 1e-3, format!("{ratio:.12}")));
    }
    if s.horizon >= 20.0 {
        checks.push(Check::new("final trace distance <= 1e-6", last <= 1e-6, format!("{last:.3e}")));
    }
    let summary = json!({
        "profile": profile_id,
        "xi": xi,
        "xi_err": xi_err,
        "eta": eta,
        "tau_relax": tau,
        "lambda2_eta": target,
        "fitted_rate": if fit.degenerate { Value::Null } else { json!(fit.rate) },
        "fitted_rate_stderr": if fit.degenerate { Value::Null } else { json!(fit.stderr) },
        "rate_ratio": if fit.degenerate { Value::Null } else { json!(ratio) },
        "final_trace_distance": last,
        "gibbs_p_plus": traj.gibbs.p_plus(),
        "rates": { "gamma_down": r.gamma_down, "gamma_up": r.gamma_up, "dephasing": r.dephasing },
        "thermal": thermal(cfg),
    });
    Ok(Outcome { kind: "simulate", table, summary, checks, failed_rows: 0 })
}

pub fn localized_limit(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let params = cfg.params();
    if params.d != 3 || !(params.m > 0.0) {
        return Err(CliError::Config(format!(
            "localized-limit is only available for d = 3 and m > 0 (got d = {}, m = {})",
            params.d, params.m
        )));
    }
    let l = &cfg.localized;
    let e = params.e;
    let limit = rates::xi_localized_limit(e, &params)?;
    let mut eps = l.epsilons.clone();
    eps.sort_by(|a, b| b.partial_cmp(a).unwrap());
    eps.dedup();
    let jobs: Vec<(f64, f64)> = l.sharpness.iter().flat_map(|&p| eps.iter().map(move |&x| (p, x))).collect();
    let vals: Vec<Result<(f64, f64), CliError>> = jobs
        .par_iter()
        .map(|&(p, x)| {
            let mut spec = cfg.profile.scaled(x);
            spec.sharpness = p;
            let ff = form_factor(cfg, &spec)?;
            Ok(rates::xi_with_error(e, &ff, &RateOptions::default())?)
        })
        .collect();
    let mut table = Table::new(&LOCALIZED_COLUMNS);
    let mut gaps: Vec<Vec<f64>> = vec![Vec::new(); l.sharpness.len()];
    let mut finals = Vec::new();
    for (i, (&(p, x), v)) in jobs.iter().zip(vals).enumerate() {
        let (xe, err) = v?;
        let gap = (xe - limit).abs() / limit;
        table.push(vec![p.into(), x.into(), xe.into(), limit.into(), gap.into(), err.into()]);
        gaps[i / eps.len()].push(gap);
        if x == *eps.last().unwrap() {
            finals.push(xe);
        }
    }
    let mut checks = Vec::new();
    for (p, g) in l.sharpness.iter().zip(&gaps) {
        checks.push(Check::new(
            format!("gap shrinks monotonically, sharpness {p}"),
            g.windows(2).all(|w| w[1] < w[0]),
            format!("{:?}", g.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>()),
        ));
        let f = *g.last().unwrap();
        checks.push(Check::new(
            format!("final gap <= {}, sharpness {p}", l.max_gap),
            f <= l.max_gap,
            format!("{f:.3e}"),
        ));
    }
    for (p, x) in l.sharpness.iter().zip(&finals).skip(1) {
        let d = (x - finals[0]).abs() / finals[0];
        checks.push(Check::new(
            format!("shape independence, sharpness {} vs {p}", l.sharpness[0]),
            d <= l.shape_tolerance,
            format!("{d:.3e} at epsilon = {}", eps.last().unwrap()),
        ));
    }
    let summary = json!({ "E": e, "xi_limit": limit, "epsilons": eps, "sharpness": l.sharpness });
    Ok(Outcome { kind: "localized-limit", table, summary, checks, failed_rows: 0 })
}
