//! Separable bump profiles ρ = ρ₁(x_*) ρ⊥(x⊥) and their Fourier data.
//!
//! `x_*` is the longitudinal coordinate measured from the detector position 1/a.

use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::ModelParameters;

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    /// longitudinal centre in x_*
    pub c1: f64,
    /// longitudinal half-width
    pub w1: f64,
    /// transverse half-width
    pub w_perp: f64,
    #[serde(default = "one")]
    pub epsilon: f64,
    /// p in exp(-p / (1 - t²)); 1 is the standard mollifier
    #[serde(default = "one")]
    pub sharpness: f64,
    /// overall factor applied after normalization
    #[serde(default = "one")]
    pub amplitude: f64,
}

impl ProfileSpec {
    pub fn reference() -> Self {
        ProfileSpec { c1: 0.0, w1: 0.4, w_perp: 0.4, epsilon: 1.0, sharpness: 1.0, amplitude: 1.0 }
    }

    pub fn scaled(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }
}

/// exp(-p/(1-t²)) on |t| < 1, zero outside.
pub fn bump(t: f64, p: f64) -> f64 {
    let s = 1.0 - t * t;
    if s <= 0.0 {
        0.0
    } else {
        (-p / s).exp()
    }
}

/// Decay envelope of the unit bump's Fourier transform, normalized to 1 at k=0.
#[derive(Debug)]
pub struct BumpSpectrum {
    pub sharpness: f64,
    step: f64,
    /// env[i] = sup over k ≥ i·step of |φ̂(k)| / φ̂(0)
    env: Vec<f64>,
}

const ENVELOPE_FLOOR: f64 = 3e-16;

impl BumpSpectrum {
    fn compute(p: f64) -> Self {
        let n = 4096usize;
        let h = 2.0 / n as f64;
        // nodes t_j = j h for j = 0..n/2 (symmetric sum)
        let half = n / 2;
        let mut amp = Vec::with_capacity(half);
        for j in 0..half {
            let t = j as f64 * h;
            let w = if j == 0 { h } else { 2.0 * h };
            amp.push(w * bump(t, p));
        }
        let t: Vec<f64> = (0..half).map(|j| j as f64 * h).collect();
        let total: f64 = amp.iter().sum();
        let step = 0.25;
        let mut raw = Vec::new();
        let mut cur: Vec<Complex64> = vec![Complex64::new(1.0, 0.0); half];
        let rot: Vec<Complex64> = t.iter().map(|&t| Complex64::from_polar(1.0, step * t)).collect();
        let window = (50.0 / step) as usize;
        let max_k = 40_000.0;
        let mut i = 0usize;
        loop {
            let k = i as f64 * step;
            if i.is_multiple_of(32) {
                for (c, &tj) in cur.iter_mut().zip(&t) {
                    *c = Complex64::from_polar(1.0, k * tj);
                }
            }
            let v: f64 = amp.iter().zip(&cur).map(|(a, c)| a * c.re).sum();
            raw.push((v / total).abs());
            if raw.len() > window {
                let recent = raw[raw.len() - window..].iter().cloned().fold(0.0, f64::max);
                if recent < ENVELOPE_FLOOR || k > max_k {
                    break;
                }
            }
            for (c, r) in cur.iter_mut().zip(&rot) {
                *c *= r;
            }
            i += 1;
        }
        let mut env = raw;
        for j in (0..env.len() - 1).rev() {
            env[j] = env[j].max(env[j + 1]);
        }
        BumpSpectrum { sharpness: p, step, env }
    }

    /// Process-wide memo keyed by sharpness; filled when a profile is built.
    pub fn for_sharpness(p: f64) -> Arc<BumpSpectrum> {
        static CACHE: OnceLock<Mutex<Vec<Arc<BumpSpectrum>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(Vec::new()));
        if let Some(s) = cache.lock().unwrap().iter().find(|s| s.sharpness == p) {
            return s.clone();
        }
        let s = Arc::new(BumpSpectrum::compute(p));
        cache.lock().unwrap().push(s.clone());
        s
    }

    /// Smallest k beyond which the normalized transform stays below `tol`.
    pub fn tail_frequency(&self, tol: f64) -> f64 {
        let tol = tol.max(ENVELOPE_FLOOR);
        match self.env.iter().position(|&e| e <= tol) {
            Some(i) => i as f64 * self.step,
            None => self.env.len() as f64 * self.step,
        }
    }

    /// Envelope value at k (sup over the tail).
    pub fn envelope(&self, k: f64) -> f64 {
        let i = (k.abs() / self.step) as usize;
        if i >= self.env.len() {
            0.0
        } else {
            self.env[i]
        }
    }
}

/// A built, normalized coupling profile with cached transform nodes.
#[derive(Debug, Clone)]
pub struct CouplingProfile {
    pub spec: ProfileSpec,
    pub a: f64,
    pub d: u32,
    /// effective (ε-scaled) longitudinal centre and half-width
    pub center: f64,
    pub half_width: f64,
    pub perp_half_width: f64,
    pub norm_long: f64,
    pub norm_perp: f64,
    spectrum: Arc<BumpSpectrum>,
    // longitudinal transform: ĥ(y) = e^{iy x_c} Σ w_j e^{iy τ_j}
    long_tau0: f64,
    long_h: f64,
    long_w: Vec<f64>,
    y_max: f64,
    // envelope-removed transform H(y) = e^{-iy x_c} ĥ(y) tabulated for 8-point interpolation
    table: Vec<Complex64>,
    table_step: f64,
    // transverse transform: ρ̂⊥(k) = Σ w_j cos(k x_j)
    perp_x: Vec<f64>,
    perp_w: Vec<f64>,
    k_perp_max: f64,
}

pub fn build_profile(spec: &ProfileSpec, params: &ModelParameters) -> Result<CouplingProfile> {
    params.validate()?;
    let ProfileSpec { c1, w1, w_perp, epsilon, sharpness, amplitude } = *spec;
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::config(format!("epsilon must be > 0 (got {epsilon})")));
    }
    if !(w1.is_finite() && w1 > 0.0) {
        return Err(Error::config(format!("w1 must be > 0 (got {w1})")));
    }
    if params.d >= 2 && !(w_perp.is_finite() && w_perp > 0.0) {
        return Err(Error::config(format!("w_perp must be > 0 (got {w_perp})")));
    }
    if !(0.25..=4.0).contains(&sharpness) {
        return Err(Error::config(format!("sharpness must lie in [0.25, 4] (got {sharpness})")));
    }
    if !amplitude.is_finite() {
        return Err(Error::config("amplitude must be finite"));
    }
    let a = params.a;
    let center = epsilon * c1;
    let hw = epsilon * w1;
    let lower = center - hw;
    if !(lower > -1.0 / a) {
        return Err(Error::config(format!(
            "longitudinal support leaks out of (-1/a, inf): lower edge {lower} <= -1/a = {}",
            -1.0 / a
        )));
    }
    let spectrum = BumpSpectrum::for_sharpness(sharpness);
    let k_star = spectrum.tail_frequency(1e-15);

    // longitudinal nodes: interior trapezoid points of [-hw, hw]
    let y_max = k_star / hw;
    let n_long = ((2.0 * hw * y_max / PI).ceil() as usize + 16).next_multiple_of(2);
    let long_h = 2.0 * hw / n_long as f64;
    let tau: Vec<f64> = (1..n_long).map(|j| -hw + j as f64 * long_h).collect();
    let shape: Vec<f64> = tau.iter().map(|&t| bump(t / hw, sharpness)).collect();
    let z: f64 = shape.iter().sum::<f64>() * long_h;
    let norm_long = 1.0 / z;
    let x_c = 1.0 / a + center;
    let long_w: Vec<f64> = tau
        .iter()
        .zip(&shape)
        .map(|(&t, &s)| long_h * (x_c + t) * norm_long * s)
        .collect();

    let wp = epsilon * w_perp;
    let (perp_x, perp_w, norm_perp, k_perp_max) = match params.d {
        1 => (vec![0.0], vec![amplitude], 1.0, f64::INFINITY),
        _ => {
            let k_max = 1.2 * k_star / wp;
            let m = ((2.0 * wp * k_max / PI).ceil() as usize + 16).next_multiple_of(2);
            let h = 2.0 * wp / m as f64;
            // nodes x_j = j h, j = 0 .. m/2 - 1, symmetric about 0
            let xs: Vec<f64> = (0..m / 2).map(|j| j as f64 * h).collect();
            let line: Vec<f64> = xs
                .iter()
                .map(|&x| if params.d == 2 { bump(x / wp, sharpness) } else { projected_disc(x, wp, sharpness) })
                .collect();
            let mut w: Vec<f64> = line
                .iter()
                .enumerate()
                .map(|(j, &v)| if j == 0 { h * v } else { 2.0 * h * v })
                .collect();
            // for d=3 the projected line density integrates to the plane integral
            let total: f64 = w.iter().sum();
            for v in w.iter_mut() {
                *v *= amplitude / total;
            }
            (xs, w, 1.0 / total, k_max)
        }
    };

    let mut prof = CouplingProfile {
        spec: *spec,
        a,
        d: params.d,
        center,
        half_width: hw,
        perp_half_width: wp,
        norm_long,
        norm_perp,
        spectrum,
        long_tau0: tau[0],
        long_h,
        long_w,
        y_max,
        perp_x,
        perp_w,
        k_perp_max,
        table: Vec::new(),
        table_step: 0.05 / hw,
    };
    let n_tab = (prof.y_max / prof.table_step).ceil() as usize + 2 * TABLE_PAD + 1;
    prof.table = (0..n_tab)
        .map(|i| {
            let y = (i as f64 - TABLE_PAD as f64) * prof.table_step;
            prof.h_direct(y) * Complex64::from_polar(1.0, -y * x_c)
        })
        .collect();
    Ok(prof)
}

const TABLE_PAD: usize = 8;

// 1 / Π_{m≠k} (k - m) for the stencil offsets -3..=4
const LAGRANGE_DENOM: [f64; 8] = [
    -1.0 / 5040.0,
    1.0 / 720.0,
    -1.0 / 240.0,
    1.0 / 144.0,
    -1.0 / 144.0,
    1.0 / 240.0,
    -1.0 / 720.0,
    1.0 / 5040.0,
];

/// ∫ φ(√(x²+t²)/w) dt over the chord of the disc of radius w.
fn projected_disc(x: f64, w: f64, p: f64) -> f64 {
    let l2 = w * w - x * x;
    if l2 <= 0.0 {
        return 0.0;
    }
    let l = l2.sqrt();
    let n = 320;
    let h = 2.0 * l / n as f64;
    let mut s = 0.0;
    for i in 1..n {
        let t = -l + i as f64 * h;
        s += bump((x * x + t * t).sqrt() / w, p);
    }
    s * h
}

impl CouplingProfile {
    /// Longitudinal density ρ₁ at x_* (normalized, no amplitude).
    pub fn rho1(&self, x_star: f64) -> f64 {
        self.norm_long * bump((x_star - self.center) / self.half_width, self.spec.sharpness)
    }

    /// Transverse density ρ⊥ at radius r (normalized, no amplitude). Returns 1 for d=1.
    pub fn rho_perp(&self, r: f64) -> f64 {
        match self.d {
            1 => 1.0,
            _ => self.norm_perp * bump(r / self.perp_half_width, self.spec.sharpness),
        }
    }

    pub fn amplitude(&self) -> f64 {
        self.spec.amplitude
    }

    /// Support edges of x ρ₁(x - 1/a) in the x variable.
    pub fn x_range(&self) -> (f64, f64) {
        let xc = 1.0 / self.a + self.center;
        (xc - self.half_width, xc + self.half_width)
    }

    pub fn spectrum(&self) -> &BumpSpectrum {
        &self.spectrum
    }

    /// |y| beyond which ĥ is below `tol`·ĥ(0).
    pub fn h_hat_cutoff(&self, tol: f64) -> f64 {
        (self.spectrum.tail_frequency(tol) / self.half_width).min(self.y_max)
    }

    /// |k⊥| beyond which ρ̂⊥ is below `tol`.
    pub fn rho_perp_cutoff(&self, tol: f64) -> f64 {
        if self.d == 1 {
            return f64::INFINITY;
        }
        (self.spectrum.tail_frequency(tol) / self.perp_half_width).min(self.k_perp_max)
    }

    /// ĥ(y) = ∫ e^{iyx} x ρ₁(x - 1/a) dx. Zero (below 1e-15 relative) for |y| past the cached range.
    pub fn h_hat(&self, y: f64) -> Complex64 {
        if y.abs() > self.y_max {
            return Complex64::new(0.0, 0.0);
        }
        self.h_direct(y)
    }

    /// ĥ(y) from the interpolation table; used inside the oscillatory integrals.
    pub fn h_hat_fast(&self, y: f64) -> Complex64 {
        let ay = y.abs();
        if ay > self.y_max {
            return Complex64::new(0.0, 0.0);
        }
        let u = ay / self.table_step;
        let i = u.floor();
        let t = u - i;
        let base = i as usize + TABLE_PAD - 3;
        let mut left = [1.0f64; 8];
        let mut right = [1.0f64; 8];
        for k in 1..8 {
            left[k] = left[k - 1] * (t - (k as f64 - 4.0));
        }
        for k in (0..7).rev() {
            right[k] = right[k + 1] * (t - (k as f64 - 2.0));
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..8 {
            acc += self.table[base + k] * (left[k] * right[k] * LAGRANGE_DENOM[k]);
        }
        let xc = 1.0 / self.a + self.center;
        let v = acc * Complex64::from_polar(1.0, ay * xc);
        if y < 0.0 {
            v.conj()
        } else {
            v
        }
    }

    fn h_direct(&self, y: f64) -> Complex64 {
        let xc = 1.0 / self.a + self.center;
        let step = Complex64::from_polar(1.0, y * self.long_h);
        let mut acc = Complex64::new(0.0, 0.0);
        let mut cur = Complex64::new(0.0, 0.0);
        for (j, &w) in self.long_w.iter().enumerate() {
            if j % 128 == 0 {
                cur = Complex64::from_polar(1.0, y * (self.long_tau0 + j as f64 * self.long_h));
            } else {
                cur *= step;
            }
            acc += cur * w;
        }
        acc * Complex64::from_polar(1.0, y * xc)
    }

    /// ρ̂⊥(|k⊥|) including the amplitude; equals the amplitude for d=1.
    pub fn rho_perp_hat(&self, k: f64) -> f64 {
        if self.d == 1 {
            return self.spec.amplitude;
        }
        let k = k.abs();
        if k > self.k_perp_max {
            return 0.0;
        }
        self.perp_x.iter().zip(&self.perp_w).map(|(&x, &w)| w * (k * x).cos()).sum()
    }

    /// Transform of ρ₁ itself in the e^{-iky} convention, with its y-derivative.
    pub fn rho1_hat_minus(&self, y: f64) -> (Complex64, Complex64) {
        let mut v = Complex64::new(0.0, 0.0);
        let mut dv = Complex64::new(0.0, 0.0);
        let n = self.long_w.len();
        for j in 0..n {
            let t = self.center + self.long_tau0 + j as f64 * self.long_h;
            let r = self.long_h * self.rho1(t);
            let e = Complex64::from_polar(r, -y * t);
            v += e;
            dv += e * Complex64::new(0.0, -t);
        }
        (v, dv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, Tolerance};

    fn reference() -> CouplingProfile {
        build_profile(&ProfileSpec::reference(), &ModelParameters::reference()).unwrap()
    }

    #[test]
    fn envelope_matches_known_decay() {
        let s = BumpSpectrum::for_sharpness(1.0);
        assert!(s.envelope(10.0) > 1e-2 && s.envelope(10.0) < 1e-1);
        assert!(s.envelope(100.0) > 1e-6 && s.envelope(100.0) < 1e-5);
        let k = s.tail_frequency(1e-14);
        assert!(k > 600.0 && k < 1000.0, "{k}");
    }

    #[test]
    fn normalization_against_adaptive_quadrature() {
        let p = reference();
        let tol = Tolerance::new(0.0, 1e-13);
        let l = integrate(&|x| p.rho1(x), -0.4, 0.4, 4, tol, 2000).unwrap().value;
        assert!((l - 1.0).abs() < 1e-10, "{l}");
        let t = integrate(&|r| 2.0 * PI * r * p.rho_perp(r), 0.0, 0.4, 4, tol, 2000).unwrap().value;
        assert!((t - 1.0).abs() < 1e-10, "{t}");
        assert!((p.rho_perp_hat(0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn support_constraint() {
        let params = ModelParameters::reference();
        let mut s = ProfileSpec::reference();
        s.c1 = -1.0;
        assert!(matches!(build_profile(&s, &params), Err(Error::Config(_))));
        s.c1 = -0.55;
        assert!(build_profile(&s, &params).is_ok());
        s.c1 = -1.0;
        // shrinking pulls the support back inside
        assert!(build_profile(&s.scaled(0.5), &params).is_ok());
    }

    #[test]
    fn h_hat_against_direct_quadrature() {
        let p = reference();
        let y = 2.0;
        let tol = Tolerance::new(0.0, 1e-13);
        let f = |x: f64| Complex64::from_polar(x * p.rho1(x - 1.0), y * x);
        let want = integrate(&f, 0.6, 1.4, 8, tol, 5000).unwrap().value;
        assert!((p.h_hat(y) - want).norm() / want.norm() < 1e-8);
        assert!((p.h_hat(0.0) - 1.0).norm() < 1e-12);
    }

    #[test]
    fn interpolated_transform_matches_direct_sum() {
        for spec in [ProfileSpec::reference(), ProfileSpec { sharpness: 2.0, w1: 0.3, ..ProfileSpec::reference() }.scaled(0.1)] {
            let p = build_profile(&spec, &ModelParameters::reference()).unwrap();
            let mut worst = 0.0f64;
            for i in 0..4000 {
                let y = -p.h_hat_cutoff(1e-14) + i as f64 * 0.7377 / p.half_width;
                worst = worst.max((p.h_hat_fast(y) - p.h_hat(y)).norm());
            }
            assert!(worst < 1e-13, "{worst}");
        }
    }

    #[test]
    fn rho_perp_hat_against_hankel_quadrature() {
        // 2-D radial transform = 2π ∫ r ρ(r) J0(kr) dr, J0 via its integral representation
        let p = reference();
        let tol = Tolerance::new(0.0, 1e-12);
        let j0 = |z: f64| integrate(&|t: f64| (z * t.sin()).cos() / PI, 0.0, PI, 4, tol, 500).unwrap().value;
        for &k in &[0.5, 3.0, 11.0] {
            let want = integrate(&|r: f64| 2.0 * PI * r * p.rho_perp(r) * j0(k * r), 0.0, 0.4, 4, tol, 500)
                .unwrap()
                .value;
            let got = p.rho_perp_hat(k);
            assert!((got - want).abs() < 1e-10, "k={k} got={got} want={want}");
        }
    }
}
