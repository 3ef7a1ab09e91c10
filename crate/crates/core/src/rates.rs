//! Golden-rule rates ξ, η, τ_relax, FGR scans, the localized limit and the
//! Rindler-frequency detailed-balance test.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::formfactor::{FormFactor, GHatTolerance};
use crate::kinematics::ModelParameters;
use crate::quadrature::{integrate, integrate_panels, Tolerance};

#[derive(Debug, Clone, Copy)]
pub struct RateOptions {
    /// relative tolerance of the transverse integral
    pub rel_tol: f64,
    /// relative tolerance of each inner ϰ-integral
    pub inner_rel_tol: f64,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions { rel_tol: 1e-8, inner_rel_tol: 1e-10 }
    }
}

impl RateOptions {
    /// Settings used for massless fields, where the k⊥ → 0 region is oscillatory.
    pub fn loose() -> Self {
        RateOptions { rel_tol: 1e-6, inner_rel_tol: 1e-8 }
    }
}

/// Upper transverse momentum past which |ĝ|² is negligible at relative level `tol`.
pub fn transverse_cutoff(ff: &FormFactor, tol: f64) -> f64 {
    let (x_min, _) = ff.profile.x_range();
    let m = ff.params.m;
    // ĝ decays like e^{-x_min ω}
    let omega_max = m + (1.0 / tol).ln().max(1.0) / (2.0 * x_min) + 6.0 / x_min;
    let k = (omega_max * omega_max - m * m).max(0.0).sqrt();
    k.min(ff.profile.rho_perp_cutoff(1e-15))
}

/// S(s) = ∫ dk⊥ |ĝ(s, k⊥)|² with its error estimate.
pub fn spectral_density_at(ff: &FormFactor, s: f64, opts: &RateOptions) -> Result<(f64, f64)> {
    let d = ff.params.d;
    if ff.profile.amplitude() == 0.0 {
        return Ok((0.0, 0.0));
    }
    if d == 1 {
        let (g, e) = ff.g_hat_real(s, 0.0, GHatTolerance { rel: opts.inner_rel_tol, abs: 0.0 })?;
        return Ok((g * g, 2.0 * g.abs() * e));
    }
    let k_max = transverse_cutoff(ff, opts.rel_tol);
    let k_lo = if ff.params.m == 0.0 { 1e-9 * k_max } else { 0.0 };
    let k_ref = (0.25 * k_max).min(0.5);
    let (g_ref, _) = ff.g_hat_real(s, k_ref, GHatTolerance { rel: opts.inner_rel_tol, abs: 0.0 })?;
    let inner = GHatTolerance { rel: opts.inner_rel_tol, abs: 1e-3 * opts.inner_rel_tol * g_ref.abs() };
    let measure = if d == 3 { 2.0 * PI } else { 2.0 };
    let err_cell = std::cell::Cell::new(None::<Error>);
    let f = |k: f64| -> f64 {
        match ff.g_hat_real(s, k, inner) {
            Ok((g, _)) => {
                let w = if d == 3 { k } else { 1.0 };
                measure * w * g * g
            }
            Err(e) => {
                err_cell.set(Some(e));
                0.0
            }
        }
    };
    let est = integrate(&f, k_lo, k_max, 6, Tolerance::new(0.0, opts.rel_tol), 400)?;
    if let Some(e) = err_cell.take() {
        return Err(e);
    }
    Ok((est.value, est.error + 2.0 * opts.inner_rel_tol * est.value.abs()))
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralDensity {
    pub s: Vec<f64>,
    pub value: Vec<f64>,
    pub error: Vec<f64>,
}

pub fn spectral_density(s_grid: &[f64], ff: &FormFactor, opts: &RateOptions) -> Result<SpectralDensity> {
    let vals: Vec<Result<(f64, f64)>> = s_grid.par_iter().map(|&s| spectral_density_at(ff, s, opts)).collect();
    let mut value = Vec::with_capacity(s_grid.len());
    let mut error = Vec::with_capacity(s_grid.len());
    for v in vals {
        let (x, e) = v?;
        value.push(x);
        error.push(e);
    }
    Ok(SpectralDensity { s: s_grid.to_vec(), value, error })
}

/// ξ(E) = S(E/a) / (2a), with error estimate.
pub fn xi_with_error(e: f64, ff: &FormFactor, opts: &RateOptions) -> Result<(f64, f64)> {
    if !(e >= 0.0) {
        return Err(Error::domain(format!("E must be >= 0 (got {e})")));
    }
    let a = ff.params.a;
    let (s, err) = spectral_density_at(ff, e / a, opts)?;
    Ok((s / (2.0 * a), err / (2.0 * a)))
}

pub fn xi(e: f64, ff: &FormFactor) -> Result<f64> {
    xi_with_error(e, ff, &RateOptions::default()).map(|r| r.0)
}

pub fn eta_from_xi(e: f64, xi: f64, a: f64) -> f64 {
    (1.0 + (-2.0 * PI * e / a).exp()) * xi
}

pub fn eta(e: f64, ff: &FormFactor) -> Result<f64> {
    Ok(eta_from_xi(e, xi(e, ff)?, ff.params.a))
}

/// 1/(λ²η); infinite when λ = 0 or η = 0.
pub fn tau_relax_from_eta(lambda: f64, eta: f64) -> f64 {
    let g = lambda * lambda * eta;
    if g == 0.0 {
        f64::INFINITY
    } else {
        1.0 / g
    }
}

pub fn tau_relax(e: f64, ff: &FormFactor) -> Result<f64> {
    Ok(tau_relax_from_eta(ff.params.lambda, eta(e, ff)?))
}

#[derive(Debug, Clone, Serialize)]
pub struct RateResult {
    #[serde(rename = "E")]
    pub e: f64,
    pub xi: f64,
    pub eta: f64,
    pub tau_relax: f64,
    pub fgr_satisfied: bool,
    pub threshold: f64,
    pub err_est: f64,
    /// set when the point failed numerically
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FgrScan {
    pub results: Vec<RateResult>,
    pub max_xi: f64,
    pub threshold: f64,
    /// grid intervals where ξ/max ξ dips below the threshold
    pub exceptional_candidates: Vec<(f64, f64)>,
}

impl FgrScan {
    pub fn failures(&self) -> usize {
        self.results.iter().filter(|r| r.failure.is_some()).count()
    }
}

pub fn fgr_scan(e_grid: &[f64], ff: &FormFactor, threshold: f64, opts: &RateOptions) -> Result<FgrScan> {
    if !(threshold > 0.0) {
        return Err(Error::domain("threshold must be > 0"));
    }
    if e_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("E grid must be sorted"));
    }
    let raw: Vec<Result<(f64, f64)>> = e_grid.par_iter().map(|&e| xi_with_error(e, ff, opts)).collect();
    Ok(classify_scan(e_grid, raw, ff.params.a, ff.params.lambda, threshold))
}

/// Threshold classification of precomputed ξ values.
pub fn classify_scan(
    e_grid: &[f64],
    raw: Vec<Result<(f64, f64)>>,
    a: f64,
    lambda: f64,
    threshold: f64,
) -> FgrScan {
    let max_xi = raw.iter().filter_map(|r| r.as_ref().ok()).map(|r| r.0).fold(0.0, f64::max);
    let mut results = Vec::with_capacity(e_grid.len());
    for (&e, r) in e_grid.iter().zip(raw) {
        results.push(match r {
            Ok((x, err)) => {
                let eta = eta_from_xi(e, x, a);
                RateResult {
                    e,
                    xi: x,
                    eta,
                    tau_relax: tau_relax_from_eta(lambda, eta),
                    fgr_satisfied: x > threshold * max_xi,
                    threshold,
                    err_est: err,
                    failure: None,
                }
            }
            Err(err) => RateResult {
                e,
                xi: f64::NAN,
                eta: f64::NAN,
                tau_relax: f64::NAN,
                fgr_satisfied: false,
                threshold,
                err_est: f64::NAN,
                failure: Some(err.to_string()),
            },
        });
    }
    let mut exceptional = Vec::new();
    let mut i = 0;
    while i < results.len() {
        if results[i].fgr_satisfied || results[i].failure.is_some() {
            i += 1;
            continue;
        }
        let start = i;
        while i < results.len() && !results[i].fgr_satisfied && results[i].failure.is_none() {
            i += 1;
        }
        let lo = e_grid[start.saturating_sub(1)];
        let hi = e_grid[i.min(e_grid.len() - 1)];
        exceptional.push((lo, hi));
    }
    FgrScan { results, max_xi, threshold, exceptional_candidates: exceptional }
}

/// Kernel of the strictly localized coupling, [2sinh²ϰ − c coshϰ − 1]/(c + coshϰ)⁴, c = E/ω.
pub fn localized_kernel(kappa: f64, c: f64) -> f64 {
    let sh = kappa.sinh();
    let ch = kappa.cosh();
    (2.0 * sh * sh - c * ch - 1.0) / (c + ch).powi(4)
}

/// ∫ dϰ R(ϰ) e^{-i[(E/a)ϰ + (ω/a) sinhϰ]} along the real axis, via y = sinh ϰ.
pub fn localized_inner(e: f64, omega: f64, a: f64, abs_tol: f64) -> Result<Complex64> {
    let s = e / a;
    let z = omega / a;
    let c = e / omega;
    let amp = |y: f64| {
        let ch = (1.0 + y * y).sqrt();
        (2.0 * y * y - c * ch - 1.0) / ((c + ch).powi(4) * ch)
    };
    let phase = |y: f64| -(s * y.asinh() + z * y);
    let dphase = |y: f64| -(s / (1.0 + y * y).sqrt() + z);
    // tail after the endpoint correction is ~ |A'(Y)| / φ'² ~ 6 / (Y⁴ z²)
    let y_max = (6.0 / (abs_tol * z * z)).powf(0.25).max(20.0);
    let rate = |y: f64| z + s / (1.0 + y * y).sqrt();
    let mut half = vec![0.0];
    let mut y = 0.0;
    while y < y_max {
        let step = (2.0 * PI / rate(y)).min(0.25 * (1.0 + y * y).sqrt());
        y = (y + step).min(y_max);
        half.push(y);
    }
    let mut breaks: Vec<f64> = half.iter().rev().map(|x| -x).collect();
    breaks.extend_from_slice(&half[1..]);
    let f = |y: f64| Complex64::from_polar(amp(y), phase(y));
    let est = integrate_panels(&f, &breaks, Tolerance::new(abs_tol, 0.0), 40 * breaks.len() + 1000)?;
    // two-term integration by parts for the tails beyond ±Y
    let tail = |y: f64, sign: f64| {
        let i = Complex64::i();
        let g = |t: f64| amp(t) / dphase(t);
        let h = 1e-4 * y.abs().max(1.0);
        let dg = (g(y + h) - g(y - h)) / (2.0 * h);
        let e = Complex64::from_polar(1.0, phase(y));
        // ∫_Y^∞ ≈ -(g/i) e^{iφ} + (g'/i²) e^{iφ}/φ' ... evaluated at Y; mirrored for -Y
        -sign * (e * (g(y) / i) - e * (dg / (i * i * dphase(y))))
    };
    let value = est.value + tail(y_max, 1.0) + tail(-y_max, -1.0);
    Ok(value)
}

/// The ε → 0 limit of ξ for d = 3, m > 0, as a Rindler-frequency integral.
///
/// The displayed integral carries e^{-i(...)}; in this crate's transform convention it
/// is the absorption-side value, and the emission-side rate is e^{2πE/a} times it.
pub fn xi_localized_limit(e: f64, params: &ModelParameters) -> Result<f64> {
    xi_localized_limit_tol(e, params, 1e-9)
}

pub fn xi_localized_limit_tol(e: f64, params: &ModelParameters, rel_tol: f64) -> Result<f64> {
    if params.d != 3 || !(params.m > 0.0) {
        return Err(Error::Unsupported(format!(
            "localized limit is only available for d = 3 and m > 0 (got d = {}, m = {})",
            params.d, params.m
        )));
    }
    let a = params.a;
    let m = params.m;
    let omega_max = m + a * ((1.0 / rel_tol).ln() + 12.0) / 2.0;
    let k_max = (omega_max * omega_max - m * m).sqrt();
    let err_cell = std::cell::Cell::new(None::<Error>);
    let f = |k: f64| -> f64 {
        let w = k.hypot(m);
        match localized_inner(e, w, a, 1e-13) {
            Ok(i) => 2.0 * PI * k * i.norm_sqr() / w.powi(4),
            Err(err) => {
                err_cell.set(Some(err));
                0.0
            }
        }
    };
    let est = integrate(&f, 0.0, k_max, 8, Tolerance::new(0.0, rel_tol), 400)?;
    if let Some(err) = err_cell.take() {
        return Err(err);
    }
    Ok((2.0 * PI * e / a).exp() * 0.5 * a * est.value)
}

/// S(−s)/S(s).
pub fn detailed_balance_ratio(s: f64, ff: &FormFactor, opts: &RateOptions) -> Result<f64> {
    let (plus, _) = spectral_density_at(ff, s, opts)?;
    if !(plus > 1e-30) {
        return Err(Error::IllConditioned(format!("S({s}) = {plus:e} is below the 1e-30 floor")));
    }
    let (minus, _) = spectral_density_at(ff, -s, opts)?;
    Ok(minus / plus)
}

#[derive(Debug, Clone, Serialize)]
pub struct KmsRow {
    pub s: f64,
    pub s_plus: f64,
    pub s_minus: f64,
    pub ratio: f64,
    pub kms: f64,
    pub rel_dev: f64,
    /// propagated quadrature error of `ratio`
    pub err_est: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KmsCheck {
    pub rows: Vec<KmsRow>,
    pub fitted_slope: f64,
    pub fitted_slope_stderr: f64,
    pub max_rel_dev: f64,
    pub max_log_dev: f64,
}

/// Least-squares slope of y on x with its standard error.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum();
    let se = if x.len() > 2 { (ss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    (slope, icpt, se)
}

/// Detailed-balance rows on `s_grid` (s ≥ 0) plus the log-ratio slope over [fit_lo, fit_hi].
pub fn kms_check(s_grid: &[f64], ff: &FormFactor, opts: &RateOptions, fit_lo: f64, fit_hi: f64) -> Result<KmsCheck> {
    let pairs: Vec<Result<[f64; 4]>> = s_grid
        .par_iter()
        .map(|&s| {
            let (p, ep) = spectral_density_at(ff, s, opts)?;
            let (m, em) = if s == 0.0 { (p, ep) } else { spectral_density_at(ff, -s, opts)? };
            Ok([p, ep, m, em])
        })
        .collect();
    let mut rows = Vec::with_capacity(s_grid.len());
    for (&s, r) in s_grid.iter().zip(pairs) {
        let [p, ep, m, em] = r?;
        if !(p > 1e-30) {
            return Err(Error::IllConditioned(format!("S({s}) = {p:e} is below the 1e-30 floor")));
        }
        let ratio = m / p;
        let kms = (-2.0 * PI * s).exp();
        let err_est = if s == 0.0 { 0.0 } else { ratio * (ep / p + em / m.abs().max(1e-300)) };
        rows.push(KmsRow { s, s_plus: p, s_minus: m, ratio, kms, rel_dev: (ratio - kms).abs() / kms, err_est });
    }
    let (fx, fy): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.s >= fit_lo - 1e-12 && r.s <= fit_hi + 1e-12)
        .map(|r| (r.s, r.ratio.ln()))
        .unzip();
    let (slope, _, se) = if fx.len() >= 2 { linear_fit(&fx, &fy) } else { (f64::NAN, f64::NAN, f64::NAN) };
    let max_rel_dev = rows.iter().map(|r| r.rel_dev).fold(0.0, f64::max);
    let max_log_dev = rows
        .iter()
        .map(|r| (r.ratio.ln() + 2.0 * PI * r.s).abs() / (1.0 + 2.0 * PI * r.s))
        .fold(0.0, f64::max);
    Ok(KmsCheck { rows, fitted_slope: slope, fitted_slope_stderr: se, max_rel_dev, max_log_dev })
}
