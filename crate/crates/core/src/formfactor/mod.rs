//! Form factor g(ϰ, k⊥) = ρ̂⊥(k⊥) ĥ(ω⊥ sinh ϰ) and its Rindler-frequency transform.
//!
//! Transforms use the `+` sign, ∫ e^{+ikx} f(x) dx, with no 2π prefactor (see
//! [`FourierConvention`]). The Rindler-frequency transform is ĝ(s) = ∫ e^{-isϰ} g(ϰ) dϰ,
//! so that s > 0 is the emission side and S(-s) = e^{-2πs} S(s).

pub mod profile;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kinematics::ModelParameters;
use crate::quadrature::{gauss_legendre, integrate_panels, Tolerance};
pub use profile::{build_profile, bump, CouplingProfile, ProfileSpec};

/// Recorded transform conventions, copied into output metadata.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FourierConvention {
    /// sign of the exponent in the spatial transform
    pub spatial_sign: i32,
    /// multiplicative prefactor of the spatial transform
    pub spatial_prefactor: f64,
    /// sign of the exponent in the Rindler-frequency transform
    pub rindler_sign: i32,
    /// ĝ(E/a, k⊥) = J_CONST · ρ̂⊥(k⊥) · J(E, ω⊥)
    pub j_constant_re: f64,
    pub j_constant_im: f64,
}

pub const CONVENTION: FourierConvention = FourierConvention {
    spatial_sign: 1,
    spatial_prefactor: 1.0,
    rindler_sign: -1,
    j_constant_re: 0.0,
    j_constant_im: 1.0,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticStrip {
    /// half-width θ₀; `f64::INFINITY` for a massive field
    pub theta0: f64,
}

pub fn strip_width(params: &ModelParameters) -> AnalyticStrip {
    if params.m > 0.0 {
        AnalyticStrip { theta0: f64::INFINITY }
    } else {
        AnalyticStrip { theta0: (params.d as f64 - 1.0) / 2.0 }
    }
}

/// Accuracy request for one ϰ-integral.
#[derive(Debug, Clone, Copy)]
pub struct GHatTolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for GHatTolerance {
    fn default() -> Self {
        GHatTolerance { rel: 1e-10, abs: 1e-16 }
    }
}

#[derive(Debug, Clone)]
pub struct FormFactor {
    pub profile: CouplingProfile,
    pub params: ModelParameters,
    pub strip: AnalyticStrip,
}

impl FormFactor {
    pub fn new(spec: &ProfileSpec, params: &ModelParameters) -> Result<Self> {
        let profile = build_profile(spec, params)?;
        Ok(FormFactor { profile, params: *params, strip: strip_width(params) })
    }

    pub fn reference() -> Self {
        FormFactor::new(&ProfileSpec::reference(), &ModelParameters::reference()).unwrap()
    }

    /// ω⊥ = √(k² + m²); for d = 1 there is no transverse momentum and ω⊥ = m.
    pub fn omega(&self, k: f64) -> f64 {
        if self.params.d == 1 {
            self.params.m
        } else {
            k.hypot(self.params.m)
        }
    }

    pub fn h_hat(&self, y: f64) -> Complex64 {
        self.profile.h_hat(y)
    }

    /// f(y) = -i ĥ(y), the y-form amplitude.
    pub fn f_y(&self, y: f64) -> Complex64 {
        -Complex64::i() * self.profile.h_hat_fast(y)
    }

    /// e^{-iy/a}((-i/a)ρ̂₁(y) + ρ̂₁'(y)) with ρ̂₁ in the e^{-iky} convention; equals f(-y).
    pub fn f_minus_convention(&self, y: f64) -> Complex64 {
        let (r, dr) = self.profile.rho1_hat_minus(y);
        let a = self.params.a;
        Complex64::from_polar(1.0, -y / a) * (Complex64::new(0.0, -1.0 / a) * r + dr)
    }

    fn check_kperp(&self, kperp: &[f64]) -> Result<f64> {
        let want = self.params.d as usize - 1;
        if kperp.len() != want {
            return Err(Error::domain(format!("k_perp must have {want} components (got {})", kperp.len())));
        }
        Ok(kperp.iter().map(|x| x * x).sum::<f64>().sqrt())
    }

    pub fn g_eval(&self, kappa: f64, kperp: &[f64]) -> Result<Complex64> {
        let k = self.check_kperp(kperp)?;
        Ok(self.g_radial(kappa, k))
    }

    pub fn g_radial(&self, kappa: f64, k: f64) -> Complex64 {
        self.profile.h_hat_fast(self.omega(k) * kappa.sinh()) * self.profile.rho_perp_hat(k)
    }

    /// Half-width of the ϰ-window at which the tail of g (weighted by e^{θ'|ϰ|}) is negligible.
    pub fn kappa_window(&self, omega: f64, tol: f64, theta_im: f64) -> f64 {
        let y = self.profile.h_hat_cutoff(1e-3 * tol);
        let mut w = (y / omega).asinh();
        // widen for the deformation weight
        if theta_im > 0.0 {
            let y2 = self.profile.h_hat_cutoff(1e-3 * tol * (-theta_im * w).exp());
            w = (y2 / omega).asinh();
        }
        w
    }

    /// Breaks on [0, w] with each panel at most one local oscillation period of e^{-isϰ} ĥ(ω sinh ϰ).
    fn kappa_breaks_half(&self, w: f64, s_abs: f64, omega: f64, frac: f64) -> Vec<f64> {
        let (_, x_max) = self.profile.x_range();
        let rate = |k: f64| s_abs + x_max * omega * k.cosh();
        let mut b = vec![0.0];
        let mut k = 0.0;
        while k < w {
            let guess = (frac * 2.0 * PI / rate(k)).min(0.5);
            let step = (frac * 2.0 * PI / rate(k + guess)).min(0.5);
            k = (k + step).min(w);
            b.push(k);
        }
        b
    }

    fn kappa_breaks(&self, w: f64, s_abs: f64, omega: f64) -> Vec<f64> {
        let half = self.kappa_breaks_half(w, s_abs, omega, 1.0);
        let mut b: Vec<f64> = half.iter().rev().map(|x| -x).collect();
        b.extend_from_slice(&half[1..]);
        b
    }

    /// ĝ(s, k) = ∫ e^{-isϰ} g(ϰ, k) dϰ by adaptive Gauss-Kronrod on oscillation-sized panels.
    pub fn g_hat_radial(&self, s: f64, k: f64, tol: GHatTolerance) -> Result<(Complex64, f64)> {
        let omega = self.omega(k);
        if omega == 0.0 {
            return Err(Error::domain("omega_perp = 0: the Rindler transform of a k-independent g is singular"));
        }
        let w = self.kappa_window(omega, tol.rel, 0.0);
        let breaks = self.kappa_breaks(w, s.abs(), omega);
        let rp = self.profile.rho_perp_hat(k);
        let f = |kap: f64| Complex64::from_polar(rp, -s * kap) * self.profile.h_hat_fast(omega * kap.sinh());
        let est = integrate_panels(&f, &breaks, Tolerance::new(tol.abs, tol.rel), 40 * breaks.len() + 2000)?;
        Ok((est.value, est.error))
    }

    pub fn g_hat_rindler(&self, s: f64, kperp: &[f64]) -> Result<Complex64> {
        let k = self.check_kperp(kperp)?;
        Ok(self.g_hat_radial(s, k, GHatTolerance::default())?.0)
    }

    /// Real-s transform using g(-ϰ) = conj g(ϰ): ĝ(s) = 2 Re ∫₀^∞ e^{-isϰ} g dϰ.
    pub fn g_hat_real(&self, s: f64, k: f64, tol: GHatTolerance) -> Result<(f64, f64)> {
        let omega = self.omega(k);
        if omega == 0.0 {
            return Err(Error::domain("omega_perp = 0: the Rindler transform of a k-independent g is singular"));
        }
        let w = self.kappa_window(omega, tol.rel, 0.0);
        let breaks = self.kappa_breaks_half(w, s.abs(), omega, 1.0);
        let rp = self.profile.rho_perp_hat(k);
        if rp == 0.0 {
            return Ok((0.0, 0.0));
        }
        let f = |kap: f64| {
            let h = self.profile.h_hat_fast(omega * kap.sinh());
            let (sn, cs) = (s * kap).sin_cos();
            2.0 * rp * (h.re * cs + h.im * sn)
        };
        let est = integrate_panels(&f, &breaks, Tolerance::new(tol.abs, tol.rel), 40 * breaks.len() + 2000)?;
        Ok((est.value, est.error))
    }

    /// ϰ-form inner integral −i∫ e^{−i(E/a)ϰ} ĥ(ω sinh ϰ) dϰ; equal to the y-form after y = ω sinh ϰ.
    pub fn j_kappa_form_tol(&self, e: f64, omega: f64, tol: GHatTolerance) -> Result<(Complex64, f64)> {
        if !(omega > 0.0) {
            return Err(Error::domain("J_kappa_form requires omega_perp > 0"));
        }
        let s = e / self.params.a;
        let w = self.kappa_window(omega, tol.rel, 0.0);
        let breaks = self.kappa_breaks(w, s.abs(), omega);
        let f = |kap: f64| Complex64::from_polar(1.0, -s * kap) * self.profile.h_hat_fast(omega * kap.sinh());
        let est = integrate_panels(&f, &breaks, Tolerance::new(tol.abs, tol.rel), 40 * breaks.len() + 2000)?;
        Ok((-Complex64::i() * est.value, est.error))
    }

    /// y-form inner integral ∫ e^{-i(E/a) asinh(y/ω)} (ω²+y²)^{-1/2} f(y) dy.
    pub fn j_y_form(&self, e: f64, omega: f64) -> Result<Complex64> {
        self.j_y_form_tol(e, omega, GHatTolerance::default()).map(|r| r.0)
    }

    pub fn j_y_form_tol(&self, e: f64, omega: f64, tol: GHatTolerance) -> Result<(Complex64, f64)> {
        if !(omega > 0.0) {
            return Err(Error::domain("J_y_form requires omega_perp != 0"));
        }
        let s = e / self.params.a;
        let (_, x_max) = self.profile.x_range();
        let y_w = self.profile.h_hat_cutoff(1e-3 * tol.rel);
        let rate = |y: f64| x_max + s.abs() / omega.hypot(y);
        let mut half = vec![0.0];
        let mut y = 0.0;
        while y < y_w {
            let step = (2.0 * PI / rate(y)).min(0.5 * omega.hypot(y));
            y = (y + step).min(y_w);
            half.push(y);
        }
        let mut breaks: Vec<f64> = half.iter().rev().map(|x| -x).collect();
        breaks.extend_from_slice(&half[1..]);
        let f = |y: f64| {
            let r = omega.hypot(y);
            Complex64::from_polar(1.0 / r, -s * (y / omega).asinh()) * self.f_y(y)
        };
        let est = integrate_panels(&f, &breaks, Tolerance::new(tol.abs, tol.rel), 40 * breaks.len() + 2000)?;
        Ok((est.value, est.error))
    }

    /// Fixed composite Gauss-Legendre sampling of g(·, k) for batched transforms.
    pub fn sampled_transform(&self, k: f64, s_abs_max: f64, theta_im: f64, tol: f64) -> SampledTransform {
        let omega = self.omega(k);
        let w = self.kappa_window(omega, tol, theta_im);
        let half = self.kappa_breaks_half(w, s_abs_max, omega, 1.0);
        let mut breaks: Vec<f64> = half.iter().rev().map(|x| -x).collect();
        breaks.extend_from_slice(&half[1..]);
        let (gx, gw) = gauss_legendre(16);
        let rp = self.profile.rho_perp_hat(k);
        let mut nodes = Vec::with_capacity(16 * breaks.len());
        let mut values = Vec::with_capacity(16 * breaks.len());
        for p in breaks.windows(2) {
            let c = 0.5 * (p[0] + p[1]);
            let h = 0.5 * (p[1] - p[0]);
            for (x, wt) in gx.iter().zip(&gw) {
                let kap = c + h * x;
                nodes.push(kap);
                values.push(self.profile.h_hat_fast(omega * kap.sinh()) * (rp * h * wt));
            }
        }
        SampledTransform { nodes, values }
    }
}

/// Quadrature nodes ϰ_n and weighted samples w_n g(ϰ_n); ĝ(z) ≈ Σ w_n g_n e^{-izϰ_n}.
#[derive(Debug, Clone)]
pub struct SampledTransform {
    pub nodes: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl SampledTransform {
    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.nodes
            .iter()
            .zip(&self.values)
            .map(|(&k, &v)| v * (-Complex64::i() * z * k).exp())
            .sum()
    }

    /// ĝ(s₀ + jh - iθ') for j = 0..n on a uniform grid.
    pub fn eval_uniform(&self, s0: f64, h: f64, n: usize, theta_im: f64) -> Vec<Complex64> {
        let m = self.nodes.len();
        let wv: Vec<Complex64> = self
            .nodes
            .iter()
            .zip(&self.values)
            .map(|(&k, &v)| v * (-theta_im * k).exp())
            .collect();
        let rot: Vec<Complex64> = self.nodes.iter().map(|&k| Complex64::from_polar(1.0, -h * k)).collect();
        let mut cur = vec![Complex64::new(0.0, 0.0); m];
        let mut out = Vec::with_capacity(n);
        for j in 0..n {
            if j % 64 == 0 {
                let s = s0 + j as f64 * h;
                for (c, &k) in cur.iter_mut().zip(&self.nodes) {
                    *c = Complex64::from_polar(1.0, -s * k);
                }
            } else {
                for (c, r) in cur.iter_mut().zip(&rot) {
                    *c *= r;
                }
            }
            out.push(wv.iter().zip(&cur).map(|(a, b)| a * b).sum());
        }
        out
    }
}
