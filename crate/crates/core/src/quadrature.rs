//! Gauss-Kronrod adaptive integration and Gauss-Legendre rules.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub trait QuadValue:
    Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn modulus(self) -> f64;
}

impl QuadValue for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Kronrod panel with the QUADPACK error heuristic.
pub fn gk15<T: QuadValue, F: Fn(f64) -> T>(f: &F, a: f64, b: f64) -> (T, f64) {
    let (v, e, _) = gk15_abs(f, a, b);
    (v, e)
}

/// As [`gk15`], also returning ∫|f| over the panel.
fn gk15_abs<T: QuadValue, F: Fn(f64) -> T>(f: &F, a: f64, b: f64) -> (T, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut resg = fc * WG[3];
    let mut resk = fc * WGK[7];
    let mut resabs = fc.modulus() * WGK[7];
    let mut fv1 = [T::default(); 7];
    let mut fv2 = [T::default(); 7];
    for j in 0..7 {
        let x = h * XGK[j];
        let f1 = f(c - x);
        let f2 = f(c + x);
        fv1[j] = f1;
        fv2[j] = f2;
        resk = resk + (f1 + f2) * WGK[j];
        resabs += WGK[j] * (f1.modulus() + f2.modulus());
        if j % 2 == 1 {
            resg = resg + (f1 + f2) * WG[j / 2];
        }
    }
    let reskh = resk * 0.5;
    let mut resasc = WGK[7] * (fc - reskh).modulus();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - reskh).modulus() + (fv2[j] - reskh).modulus());
    }
    let ah = h.abs();
    let result = resk * h;
    resabs *= ah;
    resasc *= ah;
    let mut err = ((resk - resg) * h).modulus();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (result, err, resabs)
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Tolerance { abs, rel }
    }
    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
    pub evaluations: usize,
}

struct Segment<T> {
    a: f64,
    b: f64,
    value: T,
    err: f64,
    abs: f64,
}

impl<T> PartialEq for Segment<T> {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl<T> Eq for Segment<T> {}
impl<T> PartialOrd for Segment<T> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl<T> Ord for Segment<T> {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Globally adaptive GK15 over a list of initial panels (consecutive break points).
///
/// Bisects the panel with the largest error estimate until the summed estimate
/// meets `tol` or `max_subdivisions` is spent.
pub fn integrate_panels<T: QuadValue, F: Fn(f64) -> T>(
    f: &F,
    breaks: &[f64],
    tol: Tolerance,
    max_subdivisions: usize,
) -> Result<Estimate<T>> {
    assert!(breaks.len() >= 2);
    let mut heap = BinaryHeap::with_capacity(breaks.len() * 2);
    let mut total = T::default();
    let mut total_err = 0.0;
    let mut total_abs = 0.0;
    for w in breaks.windows(2) {
        let (v, e, r) = gk15_abs(f, w[0], w[1]);
        total = total + v;
        total_err += e;
        total_abs += r;
        heap.push(Segment { a: w[0], b: w[1], value: v, err: e, abs: r });
    }
    // the per-panel roundoff floor is 50 eps ∫|f|; never ask for less than twice that
    let floor = |abs: f64| 100.0 * f64::EPSILON * abs;
    let mut evaluations = 15 * (breaks.len() - 1);
    let mut frozen_err = 0.0;
    let mut splits = 0;
    while total_err > tol.target(total.modulus()).max(floor(total_abs)) {
        if splits >= max_subdivisions {
            return Err(Error::Numerical {
                msg: format!("adaptive quadrature did not converge after {splits} subdivisions"),
                estimate: total_err,
            });
        }
        let Some(seg) = heap.pop() else { break };
        let mid = 0.5 * (seg.a + seg.b);
        if !(mid > seg.a && mid < seg.b) || (seg.b - seg.a) < 1e-13 * seg.a.abs().max(seg.b.abs()) {
            // cannot refine further; keep the estimate but stop looking at it
            frozen_err += seg.err;
            heap.push(Segment { err: 0.0, ..seg });
            if heap.iter().all(|s| s.err == 0.0) {
                break;
            }
            continue;
        }
        let (v1, e1, r1) = gk15_abs(f, seg.a, mid);
        let (v2, e2, r2) = gk15_abs(f, mid, seg.b);
        evaluations += 30;
        splits += 1;
        total = total - seg.value + v1 + v2;
        total_err += e1 + e2 - seg.err;
        total_abs += r1 + r2 - seg.abs;
        heap.push(Segment { a: seg.a, b: mid, value: v1, err: e1, abs: r1 });
        heap.push(Segment { a: mid, b: seg.b, value: v2, err: e2, abs: r2 });
    }
    // resum to shed drift from the running updates
    let mut value = T::default();
    let mut err = frozen_err;
    let mut abs = 0.0;
    for s in heap.iter() {
        value = value + s.value;
        err += s.err;
        abs += s.abs;
    }
    if frozen_err > 0.0 && err > tol.target(value.modulus()).max(floor(abs)) {
        return Err(Error::Numerical {
            msg: "adaptive quadrature hit the resolution floor".into(),
            estimate: err,
        });
    }
    Ok(Estimate { value, error: err, evaluations })
}

/// Convenience wrapper: `n` equal initial panels on `[a, b]`.
pub fn integrate<T: QuadValue, F: Fn(f64) -> T>(
    f: &F,
    a: f64,
    b: f64,
    n: usize,
    tol: Tolerance,
    max_subdivisions: usize,
) -> Result<Estimate<T>> {
    let n = n.max(1);
    let breaks: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    integrate_panels(f, &breaks, tol, max_subdivisions)
}

/// Gauss-Legendre nodes and weights on [-1, 1], Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        // recompute derivative at the converged node
        let (mut p0, mut p1) = (1.0, z);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        if n > 1 {
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Gauss-Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    (
        x.iter().map(|t| c + h * t).collect(),
        w.iter().map(|t| h * t).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_integrates_polynomials_exactly() {
        for n in [1, 2, 5, 16, 33] {
            let (x, w) = gauss_legendre(n);
            for p in 0..(2 * n) {
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                let want = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!((got - want).abs() < 1e-13, "n={n} p={p} got={got}");
            }
        }
    }

    #[test]
    fn adaptive_handles_oscillation_and_peaks() {
        let f = |x: f64| (50.0 * x).cos() * (-x).exp();
        let want = (1.0 - (-1.0f64).exp() * ((50.0f64).cos() - 50.0 * (50.0f64).sin())) / 2501.0;
        let r = integrate(&f, 0.0, 1.0, 1, Tolerance::new(0.0, 1e-12), 1000).unwrap();
        assert!((r.value - want).abs() < 1e-13);

        let g = |x: f64| 1.0 / (1e-4 + x * x);
        let r = integrate(&g, -1.0, 1.0, 1, Tolerance::new(0.0, 1e-10), 1000).unwrap();
        let want = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((r.value - want).abs() / want < 1e-10);
    }

    #[test]
    fn complex_values() {
        let f = |x: f64| Complex64::new(0.0, x).exp();
        let r = integrate(&f, 0.0, 3.0, 2, Tolerance::new(1e-14, 0.0), 100).unwrap();
        let want = (Complex64::new(0.0, 3.0).exp() - 1.0) / Complex64::i();
        assert!((r.value - want).norm() < 1e-13);
    }

    #[test]
    fn reports_failure_with_estimate() {
        let f = |x: f64| if x > 0.3 { 1.0 } else { 0.0 };
        match integrate(&f, 0.0, 1.0, 1, Tolerance::new(0.0, 1e-15), 5) {
            Err(Error::Numerical { estimate, .. }) => assert!(estimate > 0.0),
            other => panic!("expected failure, got {other:?}"),
        }
    }
}
