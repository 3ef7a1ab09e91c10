//! Rindler-wedge geometry and the shared physical parameter record.
//!
//! Units: ħ = c = k_B = 1.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    /// proper acceleration
    pub a: f64,
    /// detector gap
    #[serde(rename = "E")]
    pub e: f64,
    /// field mass
    pub m: f64,
    /// spatial dimension, 1..=3
    pub d: u32,
    pub lambda: f64,
}

impl ModelParameters {
    pub fn new(a: f64, e: f64, m: f64, d: u32, lambda: f64) -> Result<Self> {
        let p = ModelParameters { a, e, m, d, lambda };
        p.validate()?;
        Ok(p)
    }

    /// The desk-scale reference point a=1, E=1, m=1, d=3, λ=0.05.
    pub fn reference() -> Self {
        ModelParameters { a: 1.0, e: 1.0, m: 1.0, d: 3, lambda: 0.05 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::config(format!("a must be finite and > 0 (got {})", self.a)));
        }
        if !(self.e.is_finite() && self.e >= 0.0) {
            return Err(Error::config(format!("E must be finite and >= 0 (got {})", self.e)));
        }
        if !(self.m.is_finite() && self.m >= 0.0) {
            return Err(Error::config(format!("m must be finite and >= 0 (got {})", self.m)));
        }
        if !(1..=3).contains(&self.d) {
            return Err(Error::config(format!("d must be 1, 2 or 3 (got {})", self.d)));
        }
        if self.m == 0.0 && self.d < 2 {
            return Err(Error::config("massless field requires d >= 2"));
        }
        if !self.lambda.is_finite() {
            return Err(Error::config("lambda must be finite"));
        }
        Ok(())
    }

    pub fn beta(&self) -> f64 {
        unruh_beta(self)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_gap(mut self, e: f64) -> Self {
        self.e = e;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpacetimePoint {
    pub x0: f64,
    pub x1: f64,
    pub xperp: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RindlerPoint {
    pub tau: f64,
    pub u: f64,
    pub xperp: Vec<f64>,
}

pub fn to_rindler(p: &SpacetimePoint) -> Result<RindlerPoint> {
    if !(p.x1 > p.x0.abs()) {
        return Err(Error::domain(format!(
            "point outside the right wedge: x1 > |x0| fails ({} vs {})",
            p.x1,
            p.x0.abs()
        )));
    }
    // (x1-x0)(x1+x0) avoids cancellation near the light cone
    let u = ((p.x1 - p.x0) * (p.x1 + p.x0)).sqrt();
    let tau = 0.5 * ((p.x1 + p.x0) / (p.x1 - p.x0)).ln();
    Ok(RindlerPoint { tau, u, xperp: p.xperp.clone() })
}

pub fn from_rindler(p: &RindlerPoint) -> Result<SpacetimePoint> {
    if !(p.u > 0.0) {
        return Err(Error::domain(format!("u must be > 0 (got {})", p.u)));
    }
    Ok(SpacetimePoint {
        x0: p.u * p.tau.sinh(),
        x1: p.u * p.tau.cosh(),
        xperp: p.xperp.clone(),
    })
}

/// Hyperbolic rotation in the (x0, x1) plane; a Rindler-time translation on the wedge.
pub fn boost(p: &SpacetimePoint, tau_prime: f64) -> SpacetimePoint {
    let (sh, ch) = (tau_prime.sinh(), tau_prime.cosh());
    SpacetimePoint {
        x0: ch * p.x0 + sh * p.x1,
        x1: sh * p.x0 + ch * p.x1,
        xperp: p.xperp.clone(),
    }
}

pub fn worldline(sigma: f64, params: &ModelParameters) -> SpacetimePoint {
    let a = params.a;
    SpacetimePoint {
        x0: (a * sigma).sinh() / a,
        x1: (a * sigma).cosh() / a,
        xperp: vec![0.0; params.d.saturating_sub(1) as usize],
    }
}

pub fn unruh_beta(params: &ModelParameters) -> f64 {
    2.0 * PI / params.a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x0: f64, x1: f64) -> SpacetimePoint {
        SpacetimePoint { x0, x1, xperp: vec![0.0, 0.0] }
    }

    #[test]
    fn reference_examples() {
        let r = to_rindler(&pt(0.0, 1.0)).unwrap();
        assert_eq!((r.tau, r.u), (0.0, 1.0));
        let r = to_rindler(&pt(1f64.sinh(), 1f64.cosh())).unwrap();
        assert!((r.tau - 1.0).abs() < 1e-14 && (r.u - 1.0).abs() < 1e-14);
        assert!(matches!(to_rindler(&pt(1.0, 1.0)), Err(Error::Domain(_))));

        let p = ModelParameters::new(2.0, 1.0, 1.0, 3, 0.0).unwrap();
        let s = from_rindler(&RindlerPoint { tau: 0.0, u: 1.0 / p.a, xperp: vec![0.0; 2] }).unwrap();
        assert_eq!((s.x0, s.x1), (0.0, 0.5));
        let s = from_rindler(&RindlerPoint { tau: 2f64.ln(), u: 1.0, xperp: vec![] }).unwrap();
        assert!((s.x0 - 0.75).abs() < 1e-15 && (s.x1 - 1.25).abs() < 1e-15);
        assert!(from_rindler(&RindlerPoint { tau: 0.0, u: 0.0, xperp: vec![] }).is_err());

        assert_eq!(boost(&pt(0.0, 1.0), 0.0), pt(0.0, 1.0));
        let w = worldline(0.0, &p);
        assert_eq!((w.x0, w.x1), (0.0, 0.5));
    }

    #[test]
    fn beta_values() {
        let mk = |a| ModelParameters::new(a, 1.0, 1.0, 3, 0.0).unwrap();
        assert!((unruh_beta(&mk(2.0 * PI)) - 1.0).abs() < 1e-15);
        assert!((unruh_beta(&mk(1.0)) - 2.0 * PI).abs() < 1e-15);
        assert!((unruh_beta(&mk(PI)) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn parameter_constraints() {
        assert!(ModelParameters::new(0.0, 1.0, 1.0, 3, 0.0).is_err());
        assert!(ModelParameters::new(1.0, 1.0, 0.0, 1, 0.0).is_err());
        assert!(ModelParameters::new(1.0, 1.0, 0.0, 2, 0.0).is_ok());
        assert!(ModelParameters::new(1.0, 1.0, 1.0, 4, 0.0).is_err());
        assert!(ModelParameters::new(1.0, 1.0, -1.0, 3, 0.0).is_err());
    }

    #[test]
    fn worldline_velocity_is_unit() {
        let p = ModelParameters::new(1.7, 1.0, 1.0, 3, 0.0).unwrap();
        let h = 1e-5;
        for &s in &[-1.3, 0.0, 0.4, 2.2] {
            let (a, b) = (worldline(s - h, &p), worldline(s + h, &p));
            let v0 = (b.x0 - a.x0) / (2.0 * h);
            let v1 = (b.x1 - a.x1) / (2.0 * h);
            assert!((v0 * v0 - v1 * v1 - 1.0).abs() < 1e-8);
        }
    }
}
