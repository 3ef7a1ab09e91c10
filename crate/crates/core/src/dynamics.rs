//! Weak-coupling reduced dynamics of the detector in the (|+⟩, |−⟩) ordering.

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::formfactor::FormFactor;
use crate::kinematics::ModelParameters;
use crate::rates::{self, linear_fit};

pub type C2 = Matrix2<Complex64>;

const STATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorState {
    pub rho: C2,
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Eigenvalues of a Hermitian 2×2 matrix, ascending.
fn herm_eigs(m: &C2) -> (f64, f64) {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let r = ((a - d) * (a - d) / 4.0 + m[(0, 1)].norm_sqr()).sqrt();
    let mid = 0.5 * (a + d);
    (mid - r, mid + r)
}

impl DetectorState {
    pub fn new(rho: C2) -> Result<Self> {
        let herm = (rho - rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > STATE_TOL {
            return Err(Error::domain(format!("density matrix is not Hermitian (defect {herm:e})")));
        }
        let tr = rho.trace();
        if (tr - c(1.0)).norm() > STATE_TOL {
            return Err(Error::domain(format!("density matrix trace is {tr}, not 1")));
        }
        let (lo, _) = herm_eigs(&rho);
        if lo < -STATE_TOL {
            return Err(Error::domain(format!("density matrix has negative eigenvalue {lo:e}")));
        }
        Ok(DetectorState { rho })
    }

    /// State with upper population `p_plus` and coherence ρ₊₋ = `coherence`.
    pub fn from_parts(p_plus: f64, coherence: Complex64) -> Result<Self> {
        DetectorState::new(C2::new(c(p_plus), coherence, coherence.conj(), c(1.0 - p_plus)))
    }

    pub fn ground() -> Self {
        DetectorState { rho: C2::new(c(0.0), c(0.0), c(0.0), c(1.0)) }
    }

    pub fn p_plus(&self) -> f64 {
        self.rho[(0, 0)].re
    }

    pub fn p_minus(&self) -> f64 {
        self.rho[(1, 1)].re
    }

    pub fn coherence(&self) -> Complex64 {
        self.rho[(0, 1)]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        herm_eigs(&self.rho).0
    }
}

/// diag(e^{−βE}, 1)/(1 + e^{−βE}).
pub fn gibbs_state(e: f64, beta: f64) -> DetectorState {
    let q = if beta.is_infinite() { 0.0 } else { (-beta * e).exp() };
    let z = 1.0 + q;
    DetectorState { rho: C2::new(c(q / z), c(0.0), c(0.0), c(1.0 / z)) }
}

/// Trace norm of a − b.
pub fn trace_distance(a: &DetectorState, b: &DetectorState) -> f64 {
    let d = a.rho - b.rho;
    let (lo, hi) = herm_eigs(&d);
    lo.abs() + hi.abs()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DaviesRates {
    /// emission |+⟩ → |−⟩
    pub gamma_down: f64,
    /// absorption |−⟩ → |+⟩
    pub gamma_up: f64,
    /// total decay rate of the coherence ρ₊₋
    pub dephasing: f64,
    pub lamb_shift: f64,
    pub beta: f64,
}

impl DaviesRates {
    pub fn population_gap(&self) -> f64 {
        self.gamma_down + self.gamma_up
    }
}

/// γ↓ = λ²ξ, γ↑ = λ²ξ e^{−βE}, coherence rate λ²η.
pub fn davies_rates_from_xi(e: f64, xi: f64, params: &ModelParameters) -> DaviesRates {
    let beta = params.beta();
    let l2 = params.lambda * params.lambda;
    let down = l2 * xi;
    let up = l2 * xi * (-beta * e).exp();
    DaviesRates { gamma_down: down, gamma_up: up, dephasing: down + up, lamb_shift: 0.0, beta }
}

pub fn davies_rates(e: f64, ff: &FormFactor) -> Result<DaviesRates> {
    let xi = rates::xi(e, ff)?;
    Ok(davies_rates_from_xi(e, xi, &ff.params))
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub sigma: Vec<f64>,
    pub states: Vec<DetectorState>,
    pub lambda: f64,
    pub e: f64,
    pub a: f64,
    pub profile_id: String,
    pub gibbs: DetectorState,
}

/// Closed-form solution of the two-level rate equations.
pub fn evolve(rho0: &DetectorState, sigma: &[f64], rates: &DaviesRates, e: f64) -> Result<Trajectory> {
    let rho0 = DetectorState::new(rho0.rho)?;
    if sigma.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("sigma grid must be strictly increasing"));
    }
    let gap = rates.population_gap();
    let p_eq = if gap > 0.0 { rates.gamma_up / gap } else { rho0.p_plus() };
    let dp0 = rho0.p_plus() - p_eq;
    let c0 = rho0.coherence();
    let omega = Complex64::new(-rates.dephasing, -(e + rates.lamb_shift));
    let mut states = Vec::with_capacity(sigma.len());
    for &t in sigma {
        let p = p_eq + dp0 * (-gap * t).exp();
        let coh = c0 * (omega * t).exp();
        states.push(DetectorState { rho: C2::new(c(p), coh, coh.conj(), c(1.0 - p)) });
    }
    Ok(Trajectory {
        sigma: sigma.to_vec(),
        states,
        lambda: 0.0,
        e,
        a: 0.0,
        profile_id: String::new(),
        gibbs: gibbs_state(e, rates.beta),
    })
}

impl Trajectory {
    pub fn with_metadata(mut self, lambda: f64, a: f64, profile_id: impl Into<String>) -> Self {
        self.lambda = lambda;
        self.a = a;
        self.profile_id = profile_id.into();
        self
    }

    pub fn distances_to_gibbs(&self) -> Vec<f64> {
        self.states.iter().map(|s| trace_distance(s, &self.gibbs)).collect()
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    pub stderr: f64,
    /// set when the trajectory starts at (numerical) equilibrium
    pub degenerate: bool,
}

/// Least-squares decay rate of log ‖ρ(σ) − ρ_Gibbs‖₁.
pub fn fit_decay_rate(traj: &Trajectory) -> DecayFit {
    let d = traj.distances_to_gibbs();
    let d0 = d.first().copied().unwrap_or(0.0);
    if !(d0 > 1e-14) {
        return DecayFit { rate: f64::NAN, stderr: f64::NAN, degenerate: true };
    }
    let (x, y): (Vec<f64>, Vec<f64>) = traj
        .sigma
        .iter()
        .zip(&d)
        .filter(|(_, &v)| v > 1e-12 * d0)
        .map(|(&s, &v)| (s, v.ln()))
        .unzip();
    if x.len() < 2 {
        return DecayFit { rate: f64::NAN, stderr: f64::NAN, degenerate: true };
    }
    let (slope, _, se) = linear_fit(&x, &y);
    DecayFit { rate: -slope, stderr: se, degenerate: false }
}

/// Tr(ρ_Gibbs B) at β = 2π/a.
pub fn asymptotic_expectation(b: &C2, params: &ModelParameters) -> f64 {
    let g = gibbs_state(params.e, params.beta());
    (g.rho * b).trace().re
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn gibbs_examples() {
        let g = gibbs_state(1.0, 0.0);
        assert!(close(g.p_plus(), 0.5, 1e-15));
        let g = gibbs_state(1.0, f64::INFINITY);
        assert_eq!((g.p_plus(), g.p_minus()), (0.0, 1.0));
        let g = gibbs_state(1.0, 2f64.ln());
        assert!(close(g.p_plus(), 1.0 / 3.0, 1e-15) && close(g.p_minus(), 2.0 / 3.0, 1e-15));
    }

    #[test]
    fn asymptotic_expectation_examples() {
        let p = ModelParameters::new(2.0 * PI, 1.0, 1.0, 3, 0.05).unwrap();
        assert!(close(asymptotic_expectation(&C2::identity(), &p), 1.0, 1e-15));
        let upper = C2::new(c(1.0), c(0.0), c(0.0), c(0.0));
        let want = (-1f64).exp() / (1.0 + (-1f64).exp());
        assert!(close(asymptotic_expectation(&upper, &p), want, 1e-15));
        assert!((want - 0.26894).abs() < 1e-5);
        let sx = C2::new(c(0.0), c(1.0), c(1.0), c(0.0));
        assert_eq!(asymptotic_expectation(&sx, &p), 0.0);
    }

    #[test]
    fn rates_detailed_balance() {
        let p = ModelParameters::reference();
        let r = davies_rates_from_xi(1.0, 14.8, &p);
        assert!(close(r.gamma_up / r.gamma_down, (-2.0 * PI).exp(), 1e-15));
        let eta = rates::eta_from_xi(1.0, 14.8, 1.0);
        assert!(close(r.population_gap(), p.lambda * p.lambda * eta, 1e-12 * eta));
        // stationary point of the rate pair
        let pe = r.gamma_up / r.population_gap();
        assert!(close(pe, gibbs_state(1.0, p.beta()).p_plus(), 1e-15));
    }

    #[test]
    fn zero_coupling_rotates_coherence_only() {
        let p = ModelParameters::reference().with_lambda(0.0);
        let r = davies_rates_from_xi(1.0, 14.8, &p);
        let s0 = DetectorState::from_parts(0.3, Complex64::new(0.2, 0.1)).unwrap();
        let t = evolve(&s0, &[0.0, 1.0, PI], &r, 1.0).unwrap();
        for (st, &sg) in t.states.iter().zip(&t.sigma) {
            assert!(close(st.p_plus(), 0.3, 1e-15));
            let want = Complex64::new(0.2, 0.1) * Complex64::from_polar(1.0, -sg);
            assert!((st.coherence() - want).norm() < 1e-14);
        }
    }

    #[test]
    fn gibbs_is_stationary_and_fit_flags_it() {
        let p = ModelParameters::reference();
        let r = davies_rates_from_xi(1.0, 14.8, &p);
        let g = gibbs_state(1.0, p.beta());
        let t = evolve(&g, &[0.0, 10.0, 100.0], &r, 1.0).unwrap();
        for s in &t.states {
            assert!(trace_distance(s, &g) < 1e-15);
        }
        assert!(fit_decay_rate(&t).degenerate);
    }

    #[test]
    fn invalid_states_rejected() {
        assert!(DetectorState::from_parts(1.2, c(0.0)).is_err());
        assert!(DetectorState::from_parts(0.5, c(0.6)).is_err());
        let bad = C2::new(c(0.5), c(0.1), c(0.2), c(0.5));
        assert!(DetectorState::new(bad).is_err());
    }
}
