//! Grid-truncated, complex-deformed Liouvillean in the Rindler-frequency representation.
//!
//! One-boson modes are products of s-nodes and transverse radial nodes, mode n = j·N_k + l.
//! The deformation θ = iθ' moves the one-boson energies to a(s − iθ').

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use log::{debug, warn};
use nalgebra::{DMatrix, Matrix2, Matrix4};
use num_complex::Complex64;
use serde::Serialize;

use super::{LevelShiftTarget, ResonanceSet};
use crate::error::{Error, Result};
use crate::formfactor::{FormFactor, SampledTransform};
use crate::quadrature::gauss_legendre;
use crate::rates::transverse_cutoff;

/// Overlap constant of the interaction in this normalization (u = ĝ/√(2π)).
const COUPLING: f64 = FRAC_1_SQRT_2;
/// L_D eigenvalues in units of E, basis [−−, ++, +−, −+].
const DET_SIGN: [f64; 4] = [0.0, 0.0, 1.0, -1.0];
/// Largest dimension `to_dense` will assemble.
pub const DENSE_LIMIT: usize = 6000;
const TRANSFORM_TOL: f64 = 1e-10;

fn cx(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn det_bits(d: usize) -> (usize, usize) {
    [(0, 0), (1, 1), (1, 0), (0, 1)][d]
}

fn det_index(alpha: usize, beta: usize) -> usize {
    match (alpha, beta) {
        (0, 0) => 0,
        (1, 1) => 1,
        (1, 0) => 2,
        _ => 3,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Link {
    /// G ⊗ 1 flips the left index
    Left,
    /// 1 ⊗ Ḡ flips the right index, carried by the J-conjugated term
    Right,
}

fn flip(d: usize, link: Link) -> usize {
    let (a, b) = det_bits(d);
    match link {
        Link::Left => det_index(1 - a, b),
        Link::Right => det_index(a, 1 - b),
    }
}

fn link_between(d1: usize, d2: usize) -> Option<Link> {
    if flip(d1, Link::Left) == d2 {
        Some(Link::Left)
    } else if flip(d1, Link::Right) == d2 {
        Some(Link::Right)
    } else {
        None
    }
}

/// Transverse radial nodes with the measure of ℝ^{d−1} folded into the weights.
fn transverse_rule(d: u32, n_k: usize, k_max: f64) -> (Vec<f64>, Vec<f64>) {
    if d == 1 {
        return (vec![0.0], vec![1.0]);
    }
    let (x, w) = gauss_legendre(n_k);
    let h = 0.5 * k_max;
    let k: Vec<f64> = x.iter().map(|t| h * (1.0 + t)).collect();
    let wk = k
        .iter()
        .zip(&w)
        .map(|(&k, &w)| if d == 3 { 2.0 * PI * k * h * w } else { 2.0 * h * w })
        .collect();
    (k, wk)
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncationGrid {
    pub s: Vec<f64>,
    pub s_weights: Vec<f64>,
    pub kperp: Vec<f64>,
    pub k_weights: Vec<f64>,
    pub boson_cutoff: usize,
    /// Im θ
    pub theta_im: f64,
    /// (s₀, h) when the s-nodes are s₀ + jh, symmetric about 0
    pub uniform: Option<(f64, f64)>,
}

impl TruncationGrid {
    pub fn uniform(
        ff: &FormFactor,
        n_s: usize,
        s_max: f64,
        n_k: usize,
        k_max: f64,
        boson_cutoff: usize,
        theta_im: f64,
    ) -> Result<Self> {
        if n_s < 2 || !(s_max > 0.0) {
            return Err(Error::domain("s-grid needs at least 2 nodes and s_max > 0"));
        }
        if ff.params.d > 1 && (n_k == 0 || !(k_max > 0.0)) {
            return Err(Error::domain("transverse grid needs n_k >= 1 and k_max > 0"));
        }
        let h = 2.0 * s_max / (n_s - 1) as f64;
        let s: Vec<f64> = (0..n_s).map(|j| -s_max + j as f64 * h).collect();
        let (kperp, k_weights) = transverse_rule(ff.params.d, n_k, k_max);
        let g = TruncationGrid {
            s_weights: vec![h; n_s],
            s,
            kperp,
            k_weights,
            boson_cutoff,
            theta_im,
            uniform: Some((-s_max, h)),
        };
        g.check(ff)?;
        Ok(g)
    }

    /// N_s = 401 on [−S, S] with S from the decay of the spectral density, N_k = 24.
    pub fn default_for(ff: &FormFactor, theta_im: f64) -> Result<Self> {
        let s_max = spectral_extent(ff, 1e-4)?;
        let k_max = transverse_cutoff(ff, 1e-8);
        TruncationGrid::uniform(ff, 401, s_max, 24, k_max, 1, theta_im)
    }

    /// Composite Gauss-Legendre s-grid refined geometrically around `poles` (and their mirrors) down to `delta`.
    pub fn graded(ff: &FormFactor, poles: &[f64], delta: f64, s_max: f64, n_k: usize, k_max: f64) -> Result<Self> {
        if !(delta > 0.0 && s_max > 0.0) {
            return Err(Error::domain("graded grid needs delta > 0 and s_max > 0"));
        }
        let coarse = 0.25;
        let nb = (2.0 * s_max / coarse).ceil() as usize;
        let mut br: Vec<f64> = (0..=nb).map(|i| -s_max + 2.0 * s_max * i as f64 / nb as f64).collect();
        for &p in poles {
            for c in [p, -p] {
                if c.abs() >= s_max {
                    continue;
                }
                br.push(c);
                let mut w = 0.5 * delta;
                while w < coarse {
                    for x in [c - w, c + w] {
                        if x.abs() < s_max {
                            br.push(x);
                        }
                    }
                    w *= 2.0;
                }
            }
        }
        br.sort_by(|a, b| a.partial_cmp(b).unwrap());
        br.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let (gx, gw) = gauss_legendre(8);
        let mut s = Vec::new();
        let mut sw = Vec::new();
        for p in br.windows(2) {
            let c = 0.5 * (p[0] + p[1]);
            let h = 0.5 * (p[1] - p[0]);
            for (x, w) in gx.iter().zip(&gw) {
                s.push(c + h * x);
                sw.push(h * w);
            }
        }
        let (kperp, k_weights) = transverse_rule(ff.params.d, n_k, k_max);
        let g = TruncationGrid { s, s_weights: sw, kperp, k_weights, boson_cutoff: 1, theta_im: 0.0, uniform: None };
        g.check(ff)?;
        Ok(g)
    }

    fn check(&self, ff: &FormFactor) -> Result<()> {
        if !(1..=2).contains(&self.boson_cutoff) {
            return Err(Error::domain(format!("boson cutoff must be 1 or 2 (got {})", self.boson_cutoff)));
        }
        if !(self.theta_im >= 0.0) {
            return Err(Error::domain("Im theta must be >= 0"));
        }
        if self.theta_im >= ff.strip.theta0 {
            return Err(Error::domain(format!(
                "Im theta = {} outside the analyticity strip (theta0 = {})",
                self.theta_im, ff.strip.theta0
            )));
        }
        if self.s_weights.iter().chain(&self.k_weights).any(|w| !(*w > 0.0)) {
            return Err(Error::domain("grid weights must be positive"));
        }
        Ok(())
    }

    pub fn n_s(&self) -> usize {
        self.s.len()
    }

    pub fn n_k(&self) -> usize {
        self.kperp.len()
    }

    pub fn n_modes(&self) -> usize {
        self.n_s() * self.n_k()
    }

    /// Dimension of the Liouvillean this grid produces.
    pub fn dimension(&self) -> usize {
        let nm = self.n_modes();
        let per = match self.boson_cutoff {
            1 => 1 + nm,
            _ => 1 + nm + nm * (nm + 1) / 2,
        };
        4 * per
    }

    pub fn s_max(&self) -> f64 {
        self.s.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn with_theta(&self, theta_im: f64) -> Self {
        TruncationGrid { theta_im, ..self.clone() }
    }

    pub fn with_cutoff(&self, boson_cutoff: usize) -> Self {
        TruncationGrid { boson_cutoff, ..self.clone() }
    }

    /// Halved s-spacing and 1.5× the transverse nodes.
    pub fn refined(&self, ff: &FormFactor) -> Result<Self> {
        let (k_max, _) = self.k_span(ff);
        let nk = self.n_k() + self.n_k() / 2;
        TruncationGrid::uniform(ff, 2 * self.n_s() - 1, self.s_max(), nk, k_max, self.boson_cutoff, self.theta_im)
    }

    /// Same spacing on a 1.25× wider s-window.
    pub fn extended(&self, ff: &FormFactor) -> Result<Self> {
        let (k_max, _) = self.k_span(ff);
        let steps = ((self.n_s() - 1) as f64 * 1.25).round() as usize;
        let s_max = self.s_max() * steps as f64 / (self.n_s() - 1) as f64;
        TruncationGrid::uniform(ff, steps + 1, s_max, self.n_k(), k_max, self.boson_cutoff, self.theta_im)
    }

    fn k_span(&self, ff: &FormFactor) -> (f64, usize) {
        if ff.params.d == 1 {
            return (1.0, 1);
        }
        // recover k_max from the Gauss-Legendre nodes, which sum to n·k_max/2
        let n = self.n_k();
        (2.0 * self.kperp.iter().sum::<f64>() / n as f64, n)
    }

    /// Gap between the two s-nodes bracketing `s0`.
    pub fn local_spacing(&self, s0: f64) -> f64 {
        let i = self.s.partition_point(|&x| x < s0);
        if i == 0 || i >= self.s.len() {
            return f64::INFINITY;
        }
        self.s[i] - self.s[i - 1]
    }
}

/// Smallest S ≥ the density peak with ∫ dk⊥ |ĝ(s, k⊥)|² < rel·max for s ∈ [S, S + 2].
pub fn spectral_extent(ff: &FormFactor, rel: f64) -> Result<f64> {
    const CAP: f64 = 80.0;
    let (k, wk) = transverse_rule(ff.params.d, 12, transverse_cutoff(ff, 1e-8));
    let st: Vec<SampledTransform> = k.iter().map(|&k| ff.sampled_transform(k, CAP, 0.0, 1e-8)).collect();
    let step = 0.25;
    let n = (CAP / step) as usize + 1;
    let mut dens = vec![0.0; n];
    for (t, w) in st.iter().zip(&wk) {
        for (j, v) in t.eval_uniform(0.0, step, n, 0.0).iter().enumerate() {
            dens[j] += w * v.norm_sqr();
        }
    }
    let (peak, max) = dens.iter().enumerate().fold((0, 0.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    if !(max > 0.0) {
        return Err(Error::IllConditioned("spectral density vanishes on the s-window".into()));
    }
    let span = (2.0 / step) as usize;
    for j in peak..n.saturating_sub(span) {
        if dens[j..=j + span].iter().all(|&v| v < rel * max) {
            return Ok((j as f64 * step).max(2.0));
        }
    }
    warn!("spectral density not below {rel:e} of its peak by s = {CAP}; truncating there");
    Ok(CAP)
}

/// ĝ(s − iθ') tabulated on a uniform s-grid, read back by 8-point Lagrange interpolation.
#[derive(Debug, Clone)]
struct TransformTable {
    s0: f64,
    h: f64,
    values: Vec<Complex64>,
}

impl TransformTable {
    fn new(st: &SampledTransform, s_abs: f64, theta_im: f64) -> Self {
        let w = st.nodes.iter().fold(0.0, |m: f64, k| m.max(k.abs()));
        let h = (0.3 / w.max(1e-3)).min(0.05);
        let s0 = -s_abs - 8.0 * h;
        let n = (2.0 * (s_abs + 8.0 * h) / h).ceil() as usize + 1;
        TransformTable { s0, h, values: st.eval_uniform(s0, h, n, theta_im) }
    }

    fn at(&self, s: f64) -> Complex64 {
        let t = (s - self.s0) / self.h;
        let j = (t.floor() as isize - 3).clamp(0, self.values.len() as isize - 8) as usize;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..8 {
            let xi = (j + i) as f64;
            if (t - xi).abs() < 1e-14 {
                return self.values[j + i];
            }
            let mut w = 1.0;
            for m in 0..8 {
                if m != i {
                    let xm = (j + m) as f64;
                    w *= (t - xm) / (xi - xm);
                }
            }
            acc += self.values[j + i] * w;
        }
        acc
    }
}

/// Particle-number sector of the truncated Fock space for one detector index.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Sector {
    pub detector: usize,
    pub bosons: usize,
    pub offset: usize,
    pub len: usize,
}

/// L_D + aL_F − aθN + λ(I(θ) − J I(θ) J) on the truncated grid. Held in structured
/// form (diagonal plus coupling vectors); [`DeformedLiouvillean::to_dense`] assembles the matrix.
#[derive(Debug, Clone)]
pub struct DeformedLiouvillean {
    pub lambda: f64,
    pub a: f64,
    pub e: f64,
    pub grid: TruncationGrid,
    pub sectors: Vec<Sector>,
    /// creation amplitudes of the left/right terms, √w-weighted
    ci: Vec<Complex64>,
    cj: Vec<Complex64>,
    /// annihilation amplitudes (entered conjugated)
    ai: Vec<Complex64>,
    aj: Vec<Complex64>,
}

pub fn build_truncated_liouvillean(lambda: f64, grid: &TruncationGrid, ff: &FormFactor) -> Result<DeformedLiouvillean> {
    grid.check(ff)?;
    if !lambda.is_finite() {
        return Err(Error::domain("lambda must be finite"));
    }
    let (ns, nk) = (grid.n_s(), grid.n_k());
    let nm = ns * nk;
    let th = grid.theta_im;
    let s_abs = grid.s_max() + 1.0;
    let zero = Complex64::new(0.0, 0.0);
    let (mut ci, mut ai, mut cj, mut aj) = (vec![zero; nm], vec![zero; nm], vec![zero; nm], vec![zero; nm]);
    let symmetric = grid.uniform.is_some() && (grid.s[0] + grid.s[ns - 1]).abs() < 1e-9 * grid.s_max();
    for (l, &k) in grid.kperp.iter().enumerate() {
        let st = ff.sampled_transform(k, s_abs, th, TRANSFORM_TOL);
        let (um, up, umm, upm) = if let (Some((s0, h)), true) = (grid.uniform, symmetric) {
            let um = st.eval_uniform(s0, h, ns, th);
            let up = st.eval_uniform(s0, h, ns, -th);
            let umm: Vec<_> = um.iter().rev().copied().collect();
            let upm: Vec<_> = up.iter().rev().copied().collect();
            (um, up, umm, upm)
        } else {
            let lo = TransformTable::new(&st, s_abs, th);
            let hi = if th == 0.0 { lo.clone() } else { TransformTable::new(&st, s_abs, -th) };
            let ev = |t: &TransformTable, sgn: f64| -> Vec<Complex64> { grid.s.iter().map(|&s| t.at(sgn * s)).collect() };
            (ev(&lo, 1.0), ev(&hi, 1.0), ev(&lo, -1.0), ev(&hi, -1.0))
        };
        for j in 0..ns {
            let n = j * nk + l;
            let norm = (grid.s_weights[j] * grid.k_weights[l] / (2.0 * PI)).sqrt();
            ci[n] = um[j] * norm;
            ai[n] = up[j] * norm;
            cj[n] = umm[j].conj() * norm;
            aj[n] = upm[j].conj() * norm;
        }
    }
    let mut sectors = Vec::new();
    let mut off = 0;
    let pairs = nm * (nm + 1) / 2;
    for (bosons, len) in [(0, 1), (1, nm), (2, pairs)].into_iter().take(grid.boson_cutoff + 1) {
        for d in 0..4 {
            sectors.push(Sector { detector: d, bosons, offset: off, len });
            off += len;
        }
    }
    debug!("truncated Liouvillean: {} modes, dimension {}", nm, off);
    Ok(DeformedLiouvillean { lambda, a: ff.params.a, e: ff.params.e, grid: grid.clone(), sectors, ci, cj, ai, aj })
}

impl DeformedLiouvillean {
    pub fn dim(&self) -> usize {
        self.sectors.iter().map(|s| s.len).sum()
    }

    pub fn n_modes(&self) -> usize {
        self.ci.len()
    }

    pub fn detector_energy(&self, d: usize) -> f64 {
        DET_SIGN[d] * self.e
    }

    /// a(s_j − iθ') for mode n.
    pub fn boson_energy(&self, n: usize) -> Complex64 {
        let j = n / self.grid.n_k();
        self.a * Complex64::new(self.grid.s[j], -self.grid.theta_im)
    }

    fn creation(&self, link: Link) -> (&[Complex64], f64) {
        match link {
            Link::Left => (&self.ci, COUPLING),
            Link::Right => (&self.cj, -COUPLING),
        }
    }

    fn annihilation(&self, link: Link) -> (&[Complex64], f64) {
        match link {
            Link::Left => (&self.ai, COUPLING),
            Link::Right => (&self.aj, -COUPLING),
        }
    }

    /// Σ(z)_{d₁d₂} = Σ_{d',n} ⟨d₁|V|d',n⟩⟨d',n|V|d₂⟩ / (L_D(d') + a(s_n − iθ') − z), with V at unit coupling.
    pub fn self_energy(&self, z: Complex64) -> Matrix4<Complex64> {
        let nm = self.n_modes();
        let mut out = Matrix4::zeros();
        let mut inv = vec![Complex64::new(0.0, 0.0); nm];
        for dp in 0..4 {
            let ed = self.detector_energy(dp);
            for (n, v) in inv.iter_mut().enumerate() {
                *v = (self.boson_energy(n) + ed - z).inv();
            }
            for d1 in 0..4 {
                let Some(l1) = link_between(d1, dp) else { continue };
                let (a, sa) = self.annihilation(l1);
                for d2 in 0..4 {
                    let Some(l2) = link_between(dp, d2) else { continue };
                    let (c, sc) = self.creation(l2);
                    let sum: Complex64 = a.iter().zip(c).zip(&inv).map(|((a, c), r)| a.conj() * c * r).sum();
                    out[(d1, d2)] += sum * (sa * sc);
                }
            }
        }
        out
    }

    /// M(z) = L_D − z − λ²Σ(z) on the vacuum sector; its zeros are the eigenvalues off the continuum lines.
    pub fn feshbach(&self, z: Complex64) -> Matrix4<Complex64> {
        let mut m = self.self_energy(z) * cx(-self.lambda * self.lambda);
        for d in 0..4 {
            m[(d, d)] += self.detector_energy(d) - z;
        }
        m
    }

    fn pair_index(&self, n: usize, m: usize) -> usize {
        let (n, m) = if n <= m { (n, m) } else { (m, n) };
        n * self.n_modes() - n * n.saturating_sub(1) / 2 + (m - n)
    }

    fn offset(&self, bosons: usize, d: usize) -> usize {
        self.sectors[bosons * 4 + d].offset
    }

    pub fn to_dense(&self) -> Result<DMatrix<Complex64>> {
        let dim = self.dim();
        if dim > DENSE_LIMIT {
            return Err(Error::Unsupported(format!("dense assembly limited to dimension {DENSE_LIMIT} (got {dim})")));
        }
        let nm = self.n_modes();
        let lam = self.lambda;
        let mut h = DMatrix::<Complex64>::zeros(dim, dim);
        for d in 0..4 {
            h[(d, d)] = cx(self.detector_energy(d));
            for n in 0..nm {
                let i = self.offset(1, d) + n;
                h[(i, i)] = self.boson_energy(n) + self.detector_energy(d);
            }
            if self.grid.boson_cutoff == 2 {
                for n in 0..nm {
                    for m in n..nm {
                        let i = self.offset(2, d) + self.pair_index(n, m);
                        h[(i, i)] = self.boson_energy(n) + self.boson_energy(m) + self.detector_energy(d);
                    }
                }
            }
        }
        for d in 0..4 {
            for link in [Link::Left, Link::Right] {
                let dp = flip(d, link);
                let (c, sc) = self.creation(link);
                let (a, sa) = self.annihilation(link);
                for n in 0..nm {
                    let one = self.offset(1, dp) + n;
                    h[(one, d)] += c[n] * (lam * sc);
                    h[(d, one)] += a[n].conj() * (lam * sa);
                }
                if self.grid.boson_cutoff == 2 {
                    // |d, n⟩ → |d', {n, m}⟩
                    for n in 0..nm {
                        let one = self.offset(1, d) + n;
                        for m in 0..nm {
                            let f = if n == m { 2f64.sqrt() } else { 1.0 };
                            let two = self.offset(2, dp) + self.pair_index(n, m);
                            h[(two, one)] += c[m] * (lam * sc * f);
                            h[(one, two)] += a[m].conj() * (lam * sa * f);
                        }
                    }
                }
            }
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BallCount {
    pub center: Complex64,
    pub radius: f64,
    pub expected: usize,
    pub found: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub set: ResonanceSet,
    pub balls: [BallCount; 3],
    pub method: &'static str,
    pub dimension: usize,
}

/// Eigenvalues of a 2×2 complex matrix.
fn eig2(m: &Matrix2<Complex64>) -> [Complex64; 2] {
    let tr = m.trace();
    let disc = (tr * tr - 4.0 * m.determinant()).sqrt();
    [0.5 * (tr + disc), 0.5 * (tr - disc)]
}

fn nearest(cands: [Complex64; 2], z: Complex64) -> Complex64 {
    if (cands[0] - z).norm() <= (cands[1] - z).norm() {
        cands[0]
    } else {
        cands[1]
    }
}

impl DeformedLiouvillean {
    fn block(&self, z: Complex64, block: usize) -> Matrix2<Complex64> {
        let full = self.self_energy(z) * cx(-self.lambda * self.lambda);
        let o = 2 * block;
        let mut m = Matrix2::new(full[(o, o)], full[(o, o + 1)], full[(o + 1, o)], full[(o + 1, o + 1)]);
        m[(0, 0)] += self.detector_energy(o);
        m[(1, 1)] += self.detector_energy(o + 1);
        m
    }

    /// Solve z = eig(L_D − λ²Σ(z)) on one detector block by fixed-point iteration from `start`.
    fn fixed_point(&self, block: usize, start: Complex64) -> Result<Complex64> {
        let mut z = start;
        let scale = self.e.max(1.0);
        for _ in 0..500 {
            let next = nearest(eig2(&self.block(z, block)), z);
            let step = (next - z).norm();
            z = next;
            if step <= 1e-15 * scale {
                return Ok(z);
            }
        }
        Err(Error::Numerical { msg: "resonance fixed-point iteration did not converge".into(), estimate: f64::NAN })
    }

    /// Zeros of det M(z) inside the circle, by the argument principle.
    fn winding(&self, center: Complex64, radius: f64) -> Result<usize> {
        let detm = |t: f64| self.feshbach(center + Complex64::from_polar(radius, t)).determinant();
        let mut n = 128;
        loop {
            let vals: Vec<Complex64> = (0..=n).map(|i| detm(2.0 * PI * i as f64 / n as f64)).collect();
            if vals.iter().any(|v| v.norm() == 0.0) {
                return Err(Error::IllConditioned("det M vanishes on the counting contour".into()));
            }
            let steps: Vec<f64> = vals.windows(2).map(|w| (w[1] / w[0]).arg()).collect();
            if steps.iter().all(|s| s.abs() < 0.5) {
                let total: f64 = steps.iter().sum();
                return Ok((total / (2.0 * PI)).round().max(0.0) as usize);
            }
            if n >= 16384 {
                return Err(Error::IllConditioned("argument of det M not resolved on the counting contour".into()));
            }
            n *= 2;
        }
    }
}

/// The persistent eigenvalue must sit 10³ times closer to 0 than ε₀.
pub const ZERO_SEPARATION: f64 = 1e-3;

fn persistent_zero_ok(zero: Complex64, eps0: Complex64) -> bool {
    zero.norm() <= ZERO_SEPARATION * eps0.norm()
}

fn balls(e: f64, radius: f64, found: [usize; 3]) -> [BallCount; 3] {
    let c = [cx(0.0), cx(e), cx(-e)];
    let exp = [2, 1, 1];
    std::array::from_fn(|i| BallCount { center: c[i], radius, expected: exp[i], found: found[i] })
}

/// The four eigenvalues of `l` inside the balls of `radius` about 0, ±E.
///
/// Grids with boson cutoff 1 are solved through the exact vacuum-sector reduction;
/// `dense` forces the full complex Schur decomposition (required at cutoff 2).
pub fn deformed_spectrum(l: &DeformedLiouvillean, radius: f64, dense: bool) -> Result<SpectrumReport> {
    let th = l.grid.theta_im;
    if !(radius > 0.0) || radius > 0.5 * l.a * th + 1e-15 {
        return Err(Error::domain(format!("radius must be in (0, a*theta'/2] (got {radius})")));
    }
    if l.e > 0.0 && radius >= 0.5 * l.e {
        return Err(Error::domain("target balls overlap: radius must be < E/2"));
    }
    if dense || l.grid.boson_cutoff == 2 {
        dense_spectrum(l, radius)
    } else {
        structured_spectrum(l, radius)
    }
}

fn structured_spectrum(l: &DeformedLiouvillean, radius: f64) -> Result<SpectrumReport> {
    let e = l.e;
    let zero = l.fixed_point(0, cx(0.0))?;
    let [r1, r2] = eig2(&l.block(cx(0.0), 0));
    let start0 = if r1.norm() >= r2.norm() { r1 } else { r2 };
    let eps0 = l.fixed_point(0, start0)?;
    let plus = l.fixed_point(1, cx(e))?;
    let minus = l.fixed_point(1, cx(-e))?;
    let found = [l.winding(cx(0.0), radius)?, l.winding(cx(e), radius)?, l.winding(cx(-e), radius)?];
    let roots = vec![zero, eps0, plus, minus];
    let located = [zero, eps0].iter().all(|z| z.norm() < radius)
        && (plus - e).norm() < radius
        && (minus + e).norm() < radius
        && (l.lambda == 0.0 || (zero - eps0).norm() > 1e-12 * radius);
    let msg = if found != [2, 1, 1] {
        Some(format!("ball counts {found:?} (expected [2, 1, 1])"))
    } else if !located {
        Some("fixed-point roots outside their balls".to_string())
    } else if !persistent_zero_ok(zero, eps0) {
        Some(format!("no eigenvalue within tolerance of 0 (closest {zero}, eps0 {eps0})"))
    } else {
        None
    };
    if let Some(msg) = msg {
        return Err(Error::Extraction { msg, eigenvalues: roots });
    }
    Ok(SpectrumReport {
        set: ResonanceSet {
            eps0,
            eps_plus: plus,
            eps_minus: minus,
            zero,
            lambda: l.lambda,
            lamb_shift_included: true,
        },
        balls: balls(e, radius, found),
        method: "feshbach",
        dimension: l.dim(),
    })
}

fn dense_spectrum(l: &DeformedLiouvillean, radius: f64) -> Result<SpectrumReport> {
    let h = l.to_dense()?;
    let ev = h
        .schur()
        .eigenvalues()
        .ok_or_else(|| Error::Numerical { msg: "Schur decomposition failed".into(), estimate: f64::NAN })?;
    let all: Vec<Complex64> = ev.iter().copied().collect();
    let e = l.e;
    let inside = |c: f64| -> Vec<Complex64> { all.iter().copied().filter(|z| (z - c).norm() < radius).collect() };
    let (mut z0, p, m) = (inside(0.0), inside(e), inside(-e));
    let found = [z0.len(), p.len(), m.len()];
    if found != [2, 1, 1] {
        return Err(Error::Extraction { msg: format!("ball counts {found:?} (expected [2, 1, 1])"), eigenvalues: all });
    }
    z0.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
    if !persistent_zero_ok(z0[0], z0[1]) {
        return Err(Error::Extraction {
            msg: format!("no eigenvalue within tolerance of 0 (closest {})", z0[0]),
            eigenvalues: all,
        });
    }
    Ok(SpectrumReport {
        set: ResonanceSet {
            eps0: z0[1],
            eps_plus: p[0],
            eps_minus: m[0],
            zero: z0[0],
            lambda: l.lambda,
            lamb_shift_included: true,
        },
        balls: balls(e, radius, found),
        method: "dense",
        dimension: l.dim(),
    })
}

/// Resonances on a grid plus the changes under s-refinement and s-window extension.
#[derive(Debug, Clone, Serialize)]
pub struct TruncatedResonances {
    pub report: SpectrumReport,
    pub refined: ResonanceSet,
    pub extended: ResonanceSet,
    /// max change over the two perturbed grids, per [zero, eps0, eps_plus, eps_minus]
    pub convergence: [f64; 4],
}

pub fn resonances_truncated(lambda: f64, grid: &TruncationGrid, ff: &FormFactor) -> Result<TruncatedResonances> {
    resonances_truncated_with(lambda, grid, ff, false)
}

/// As [`resonances_truncated`]; `dense` forces the Schur path on all three grids.
pub fn resonances_truncated_with(
    lambda: f64,
    grid: &TruncationGrid,
    ff: &FormFactor,
    dense: bool,
) -> Result<TruncatedResonances> {
    let radius = (0.5 * ff.params.a * grid.theta_im).min(0.45 * ff.params.e);
    let run = |g: &TruncationGrid| -> Result<SpectrumReport> {
        let l = build_truncated_liouvillean(lambda, g, ff)?;
        deformed_spectrum(&l, radius, dense)
    };
    let report = run(grid)?;
    let refined = run(&grid.refined(ff)?)?.set;
    let extended = run(&grid.extended(ff)?)?.set;
    let base = report.set.as_array();
    let (r, x) = (refined.as_array(), extended.as_array());
    let convergence = std::array::from_fn(|i| (r[i] - base[i]).norm().max((x[i] - base[i]).norm()));
    Ok(TruncatedResonances { report, refined, extended, convergence })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub enum LevelShiftValue {
    /// rows/cols |−,−⟩, |+,+⟩
    Matrix([[Complex64; 2]; 2]),
    Scalar(Complex64),
}

impl LevelShiftValue {
    fn components(&self) -> Vec<Complex64> {
        match self {
            LevelShiftValue::Matrix(m) => vec![m[0][0], m[0][1], m[1][0], m[1][1]],
            LevelShiftValue::Scalar(z) => vec![*z],
        }
    }

    fn from_components(target: LevelShiftTarget, c: &[Complex64]) -> Self {
        match target {
            LevelShiftTarget::Zero => LevelShiftValue::Matrix([[c[0], c[1]], [c[2], c[3]]]),
            _ => LevelShiftValue::Scalar(c[0]),
        }
    }

    pub fn trace(&self) -> Complex64 {
        match self {
            LevelShiftValue::Matrix(m) => m[0][0] + m[1][1],
            LevelShiftValue::Scalar(z) => *z,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LevelShiftNumeric {
    pub target: LevelShiftTarget,
    pub regulator: f64,
    pub value: LevelShiftValue,
    /// the s-grid does not resolve the regulated resolvent near its poles
    pub ill_conditioned: bool,
}

fn pole_positions(target: LevelShiftTarget, e: f64, a: f64) -> Vec<f64> {
    match target {
        LevelShiftTarget::Zero => vec![e / a, -e / a],
        _ => vec![target.energy(e) / a],
    }
}

/// Q_e V Q̄_e (L₀ − e − iδ)^{−1} Q̄_e V Q_e on the undeformed truncated space.
pub fn level_shift_numeric(
    target: LevelShiftTarget,
    regulator: f64,
    grid: &TruncationGrid,
    ff: &FormFactor,
) -> Result<LevelShiftNumeric> {
    if !(regulator > 0.0) {
        return Err(Error::domain("regulator must be > 0"));
    }
    if grid.theta_im != 0.0 {
        return Err(Error::domain("level shifts are evaluated on the undeformed grid (theta = 0)"));
    }
    let (a, e) = (ff.params.a, ff.params.e);
    let width = regulator / a;
    let ill = pole_positions(target, e, a).iter().any(|&p| grid.local_spacing(p) > 0.5 * width);
    if ill {
        warn!("regulator {regulator:e} is below the s-grid resolution; resolvent not resolved");
    }
    let l = build_truncated_liouvillean(1.0, &grid.with_cutoff(1), ff)?;
    let sig = l.self_energy(Complex64::new(target.energy(e), regulator));
    let value = match target {
        LevelShiftTarget::Zero => LevelShiftValue::Matrix([[sig[(0, 0)], sig[(0, 1)]], [sig[(1, 0)], sig[(1, 1)]]]),
        LevelShiftTarget::PlusE => LevelShiftValue::Scalar(sig[(2, 2)]),
        LevelShiftTarget::MinusE => LevelShiftValue::Scalar(sig[(3, 3)]),
    };
    Ok(LevelShiftNumeric { target, regulator, value, ill_conditioned: ill })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtrapolatedShift {
    pub target: LevelShiftTarget,
    pub regulators: Vec<f64>,
    pub values: Vec<LevelShiftValue>,
    pub extrapolated: LevelShiftValue,
    /// polynomial-extrapolation spread plus the s-window truncation change
    pub error: f64,
    pub s_max: f64,
}

/// Neville extrapolation of samples (x_i, y_i) to x = 0; returns the value and the last correction.
fn neville_at_zero(x: &[f64], y: &[Complex64]) -> (Complex64, f64) {
    let n = x.len();
    let mut p = y.to_vec();
    let mut last = 0.0;
    for m in 1..n {
        for i in 0..n - m {
            let num = p[i + 1] * x[i] - p[i] * x[i + m];
            p[i] = num / (x[i] - x[i + m]);
        }
        if m == n - 1 {
            last = (p[0] - p[1]).norm();
        }
    }
    (p[0], last)
}

/// Regulated level shifts on geometrically graded grids, extrapolated to zero regulator.
pub fn level_shift_extrapolated(
    target: LevelShiftTarget,
    regulators: &[f64],
    ff: &FormFactor,
) -> Result<ExtrapolatedShift> {
    if regulators.len() < 2 {
        return Err(Error::domain("need at least two regulators"));
    }
    let (a, e) = (ff.params.a, ff.params.e);
    let poles = pole_positions(target, e, a);
    let s_max = spectral_extent(ff, 1e-7)?.max(poles[0].abs() + 2.0);
    let k_max = transverse_cutoff(ff, 1e-8);
    let n_k = 24;
    let eval = |delta: f64, smax: f64| -> Result<LevelShiftValue> {
        let g = TruncationGrid::graded(ff, &poles, delta / a, smax, n_k, k_max)?;
        Ok(level_shift_numeric(target, delta, &g, ff)?.value)
    };
    let mut values = Vec::with_capacity(regulators.len());
    for &d in regulators {
        values.push(eval(d, s_max)?);
    }
    let comps: Vec<Vec<Complex64>> = values.iter().map(|v| v.components()).collect();
    let nc = comps[0].len();
    let mut out = Vec::with_capacity(nc);
    let mut err: f64 = 0.0;
    for c in 0..nc {
        let ys: Vec<Complex64> = comps.iter().map(|v| v[c]).collect();
        let (v, e) = neville_at_zero(regulators, &ys);
        out.push(v);
        err = err.max(e);
    }
    let d_min = regulators.iter().copied().fold(f64::INFINITY, f64::min);
    let wide = eval(d_min, 1.25 * s_max)?.components();
    let idx = regulators.iter().position(|&d| d == d_min).unwrap();
    let trunc = wide.iter().zip(&comps[idx]).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    Ok(ExtrapolatedShift {
        target,
        regulators: regulators.to_vec(),
        values,
        extrapolated: LevelShiftValue::from_components(target, &out),
        error: err + trunc,
        s_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid(ff: &FormFactor, n_s: usize, n_k: usize, cutoff: usize, th: f64) -> TruncationGrid {
        TruncationGrid::uniform(ff, n_s, 20.0, n_k, transverse_cutoff(ff, 1e-6), cutoff, th).unwrap()
    }

    #[test]
    fn links_are_involutions() {
        for d in 0..4 {
            for l in [Link::Left, Link::Right] {
                assert_eq!(flip(flip(d, l), l), d);
                assert_eq!(link_between(d, flip(d, l)), Some(l));
            }
            assert_eq!(link_between(d, d), None);
        }
    }

    #[test]
    fn pair_index_is_a_bijection() {
        let ff = FormFactor::reference();
        let l = build_truncated_liouvillean(0.0, &small_grid(&ff, 5, 2, 2, 0.25), &ff).unwrap();
        let nm = l.n_modes();
        let mut seen = vec![false; nm * (nm + 1) / 2];
        for n in 0..nm {
            for m in n..nm {
                let p = l.pair_index(n, m);
                assert!(!seen[p]);
                seen[p] = true;
                assert_eq!(p, l.pair_index(m, n));
            }
        }
        assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn dimension_counting() {
        let ff = FormFactor::reference();
        let g = small_grid(&ff, 7, 3, 1, 0.25);
        let l = build_truncated_liouvillean(0.05, &g, &ff).unwrap();
        assert_eq!(l.dim(), 4 * (1 + 21));
        let l2 = build_truncated_liouvillean(0.05, &g.with_cutoff(2), &ff).unwrap();
        assert_eq!(l2.dim(), 4 * (1 + 21 + 231));
        assert_eq!(g.dimension(), l.dim());
        assert_eq!(g.with_cutoff(2).dimension(), l2.dim());
    }

    #[test]
    fn hermitian_at_real_theta() {
        let ff = FormFactor::reference();
        for cutoff in [1, 2] {
            let l = build_truncated_liouvillean(0.05, &small_grid(&ff, 9, 2, cutoff, 0.0), &ff).unwrap();
            let h = l.to_dense().unwrap();
            let defect = (&h - h.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(defect < 1e-12, "defect {defect:e}");
        }
    }

    #[test]
    fn free_spectrum() {
        let ff = FormFactor::reference();
        let g = small_grid(&ff, 11, 2, 1, 0.25);
        let l = build_truncated_liouvillean(0.0, &g, &ff).unwrap();
        let r = deformed_spectrum(&l, 0.125, false).unwrap();
        assert_eq!(r.set.zero, cx(0.0));
        assert_eq!(r.set.eps_plus, cx(1.0));
        assert_eq!(r.set.eps_minus, cx(-1.0));
        let d = deformed_spectrum(&l, 0.125, true).unwrap();
        assert_eq!(d.set.zero, cx(0.0));
        assert_eq!(d.set.eps_plus, cx(1.0));
        let h = l.to_dense().unwrap();
        for n in 0..l.n_modes() {
            let i = l.offset(1, 2) + n;
            let want = 1.0 + Complex64::new(g.s[n / 2], -0.25);
            assert!((h[(i, i)] - want).norm() < 1e-15);
        }
    }

    #[test]
    fn structured_matches_dense() {
        let ff = FormFactor::reference();
        let g = small_grid(&ff, 41, 4, 1, 0.5);
        let l = build_truncated_liouvillean(0.05, &g, &ff).unwrap();
        let a = deformed_spectrum(&l, 0.25, false).unwrap().set.as_array();
        let b = deformed_spectrum(&l, 0.25, true).unwrap().set.as_array();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn level_shift_decays_like_inverse_regulator() {
        let ff = FormFactor::reference();
        let g = small_grid(&ff, 201, 8, 1, 0.0);
        let v1 = level_shift_numeric(LevelShiftTarget::PlusE, 1e5, &g, &ff).unwrap().value.trace();
        let v2 = level_shift_numeric(LevelShiftTarget::PlusE, 2e5, &g, &ff).unwrap().value.trace();
        assert!((v1 / v2 - 2.0).norm() < 1e-3);
        assert!(level_shift_numeric(LevelShiftTarget::PlusE, 1e-4, &g, &ff).unwrap().ill_conditioned);
    }

    #[test]
    fn strip_violation_rejected() {
        let p = crate::kinematics::ModelParameters::new(1.0, 1.0, 0.0, 2, 0.05).unwrap();
        let ff = FormFactor::new(&crate::formfactor::ProfileSpec::reference(), &p).unwrap();
        assert!(TruncationGrid::uniform(&ff, 11, 5.0, 4, 5.0, 1, 0.6).is_err());
        assert!(TruncationGrid::uniform(&ff, 11, 5.0, 4, 5.0, 3, 0.1).is_err());
    }

    #[test]
    fn table_interpolation_matches_direct_sum() {
        let ff = FormFactor::reference();
        let st = ff.sampled_transform(0.7, 12.0, 0.3, 1e-10);
        let t = TransformTable::new(&st, 12.0, 0.3);
        for s in [-11.3, -2.0, 0.013, 1.0, 7.77] {
            let want = st.eval(Complex64::new(s, -0.3));
            assert!((t.at(s) - want).norm() < 1e-9 * want.norm().max(1e-3), "s = {s}");
        }
    }

    #[test]
    fn neville_recovers_polynomial() {
        let x = [0.4, 0.2, 0.1, 0.05];
        let y: Vec<Complex64> = x.iter().map(|&t| Complex64::new(1.0 + 2.0 * t - t * t * t, t)).collect();
        let (v, _) = neville_at_zero(&x, &y);
        assert!((v - cx(1.0)).norm() < 1e-13);
    }
}
