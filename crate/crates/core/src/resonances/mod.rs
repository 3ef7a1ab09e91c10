//! Level-shift operators, perturbative resonances and the truncated deformed Liouvillean.
//!
//! Detector-sector basis of the Liouvillean: [|−,−⟩, |+,+⟩, |+,−⟩, |−,+⟩] with
//! L_D eigenvalues [0, 0, E, −E]. Resonances are reported with Im ε ≤ 0.

mod lab;

pub use lab::{
    build_truncated_liouvillean, deformed_spectrum, level_shift_extrapolated, level_shift_numeric,
    resonances_truncated, resonances_truncated_with, spectral_extent, BallCount, DeformedLiouvillean, ExtrapolatedShift, LevelShiftNumeric,
    LevelShiftValue, Sector, SpectrumReport, TruncatedResonances, TruncationGrid, DENSE_LIMIT, ZERO_SEPARATION,
};

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::Result;
use crate::formfactor::FormFactor;
use crate::rates::{self, RateOptions};

/// Unperturbed eigenvalue whose level shift is requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LevelShiftTarget {
    Zero,
    PlusE,
    MinusE,
}

impl LevelShiftTarget {
    pub fn energy(self, e: f64) -> f64 {
        match self {
            LevelShiftTarget::Zero => 0.0,
            LevelShiftTarget::PlusE => e,
            LevelShiftTarget::MinusE => -e,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LevelShiftData {
    #[serde(rename = "E")]
    pub e: f64,
    pub xi: f64,
    pub eta: f64,
    /// e^{−πE/a}
    pub q: f64,
    /// rows/cols |−,−⟩, |+,+⟩
    pub lambda0: [[Complex64; 2]; 2],
    pub lambda_plus_e: Complex64,
    pub lambda_minus_e: Complex64,
}

impl LevelShiftData {
    /// Closed forms from a given ξ.
    pub fn from_xi(e: f64, a: f64, xi: f64) -> Self {
        let q = (-std::f64::consts::PI * e / a).exp();
        let i = Complex64::i();
        let eta = (1.0 + q * q) * xi;
        let s = i * xi * q;
        let lambda0 = [[s * q, -s], [-s, s / q]];
        LevelShiftData {
            e,
            xi,
            eta,
            q,
            lambda0,
            lambda_plus_e: i * eta,
            lambda_minus_e: i * eta,
        }
    }

    pub fn lambda0_matrix(&self) -> Matrix2<Complex64> {
        let l = &self.lambda0;
        Matrix2::new(l[0][0], l[0][1], l[1][0], l[1][1])
    }

    /// Normalized (1, q) direction.
    pub fn kernel_vector(&self) -> [f64; 2] {
        let n = (1.0 + self.q * self.q).sqrt();
        [1.0 / n, self.q / n]
    }

    /// Eigenvalues of Λ₀ from its characteristic polynomial, smaller modulus first.
    pub fn lambda0_eigenvalues(&self) -> [Complex64; 2] {
        let m = self.lambda0_matrix();
        let tr = m.trace();
        let det = m.determinant();
        let disc = (tr * tr - 4.0 * det).sqrt();
        let (r1, r2) = (0.5 * (tr + disc), 0.5 * (tr - disc));
        if r1.norm() <= r2.norm() {
            [r1, r2]
        } else {
            [r2, r1]
        }
    }
}

pub fn level_shift_analytic(e: f64, ff: &FormFactor) -> Result<LevelShiftData> {
    let (xi, _) = rates::xi_with_error(e, ff, &RateOptions::default())?;
    Ok(LevelShiftData::from_xi(e, ff.params.a, xi))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResonanceSet {
    pub eps0: Complex64,
    pub eps_plus: Complex64,
    pub eps_minus: Complex64,
    /// the persistent eigenvalue (exactly 0 for the perturbative set)
    pub zero: Complex64,
    pub lambda: f64,
    /// false when Re ε±^(2) was not available and set to 0
    pub lamb_shift_included: bool,
}

impl ResonanceSet {
    pub fn width_plus(&self) -> f64 {
        -self.eps_plus.im
    }

    pub fn width_minus(&self) -> f64 {
        -self.eps_minus.im
    }

    pub fn as_array(&self) -> [Complex64; 4] {
        [self.zero, self.eps0, self.eps_plus, self.eps_minus]
    }
}

/// Real parts of Λ±E with their error estimates.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LambShift {
    pub plus: f64,
    pub minus: f64,
    pub plus_err: f64,
    pub minus_err: f64,
}

/// ε_j = e_j − λ²ε_j^(2), ε₀^(2) = iη, ε±^(2) = Re Λ±E + iη.
pub fn resonances_perturbative(lambda: f64, ls: &LevelShiftData, lamb: Option<&LambShift>) -> ResonanceSet {
    let l2 = lambda * lambda;
    let (rp, rm) = lamb.map(|l| (l.plus, l.minus)).unwrap_or((0.0, 0.0));
    let i = Complex64::i();
    ResonanceSet {
        eps0: -l2 * i * ls.eta,
        eps_plus: Complex64::new(ls.e, 0.0) - l2 * (rp + i * ls.eta),
        eps_minus: Complex64::new(-ls.e, 0.0) - l2 * (rm + i * ls.eta),
        zero: Complex64::new(0.0, 0.0),
        lambda,
        lamb_shift_included: lamb.is_some(),
    }
}
