//! Reference values independent of the asymptotic pipelines: eigenvalues
//! located as zeros of `det R(l - lambda)`, spectral zeta values by direct
//! summation with analytically continued tails, and closed form
//! determinants of the standard fixtures.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::fundsol::log_det_r;
use crate::numcore::{eigenvalues as matrix_eigenvalues, principal_angle, CMatrix, LogDet};
use crate::operator::{BoundaryCondition, EllipticOperator};

/// `|det R(l - lambda_j)|` relative to its size on the enclosing circle.
pub const LOCALIZATION_TOL: f64 = 1e-8;
/// Relative misfit above which a tail model is rejected.
pub const TAIL_MISFIT: f64 = 1e-4;
/// Fewest eigenvalues accepted by [`zeta_via_spectrum`].
pub const MIN_EIGENVALUES: usize = 30;

const DET_TOL: f64 = 1e-12;
const MAX_CLUSTER: usize = 6;
const MAX_BOX_DEPTH: usize = 10;
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

// Bernoulli numbers B_2, B_4, ..., B_16.
const BERNOULLI: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

/// Hurwitz zeta `sum_{k >= 0} (k + a)^{-s}` for real `s > 1`, `a > 0`,
/// by Euler-Maclaurin summation.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    assert!(s > 1.0 && a > 0.0, "hurwitz_zeta needs s > 1 and a > 0");
    let shift = (12.0 - a).max(0.0).ceil() as usize;
    let mut sum: f64 = (0..shift).map(|k| (a + k as f64).powf(-s)).sum();
    let x = a + shift as f64;
    sum += x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
    let mut rising = s; // s (s+1) ... (s + 2j - 2)
    let mut factorial = 2.0; // (2j)!
    for (j, b) in BERNOULLI.iter().enumerate() {
        let j = j + 1;
        sum += b / factorial * rising * x.powf(-s - 2.0 * j as f64 + 1.0);
        rising *= (s + 2.0 * j as f64 - 1.0) * (s + 2.0 * j as f64);
        factorial *= (2 * j + 1) as f64 * (2 * j + 2) as f64;
    }
    sum
}

/// `zeta_H(0, a) = 1/2 - a`.
pub fn hurwitz_zeta_at_zero(a: f64) -> f64 {
    0.5 - a
}

/// `d/ds zeta_H(s, a)` at `s = 0`, i.e. `ln Gamma(a) - ln(2 pi) / 2`.
pub fn hurwitz_zeta_prime_at_zero(a: f64) -> f64 {
    ln_gamma(a) - 0.5 * (2.0 * PI).ln()
}

/// Located eigenvalues with multiplicities.
#[derive(Clone, Debug, Serialize)]
pub struct Spectrum {
    /// Distinct eigenvalues ordered by real part, then imaginary part.
    pub eigenvalues: Vec<Complex64>,
    pub multiplicities: Vec<usize>,
    pub count_requested: usize,
    pub tolerance: f64,
    /// `|det R(l - lambda_j)|` relative to its size on the localization circle.
    pub residuals: Vec<f64>,
}

impl Spectrum {
    /// Builds a spectrum from known values, e.g. for tests of the summation.
    pub fn from_values(values: &[Complex64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        let mut eigenvalues: Vec<Complex64> = Vec::new();
        let mut multiplicities: Vec<usize> = Vec::new();
        for v in sorted {
            match eigenvalues.last() {
                Some(last) if (v - last).norm() <= 1e-12 * v.norm().max(1.0) => {
                    *multiplicities.last_mut().unwrap() += 1
                }
                _ => {
                    eigenvalues.push(v);
                    multiplicities.push(1);
                }
            }
        }
        let n = eigenvalues.len();
        Self { eigenvalues, multiplicities, count_requested: values.len(), tolerance: 0.0, residuals: vec![0.0; n] }
    }

    /// Number of eigenvalues counted with multiplicity.
    pub fn total(&self) -> usize {
        self.multiplicities.iter().sum()
    }

    /// Eigenvalues repeated according to multiplicity.
    pub fn expanded(&self) -> Vec<Complex64> {
        self.eigenvalues
            .iter()
            .zip(&self.multiplicities)
            .flat_map(|(&v, &m)| std::iter::repeat_n(v, m))
            .collect()
    }
}

/// Where [`eigenvalues`] searches.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SearchRegion {
    /// Real eigenvalues in `[lo, hi]`, scanned upward from `lo`.
    Real { lo: f64, hi: f64 },
    /// Complex eigenvalues in a rectangle, counted by the argument principle.
    Box { re: (f64, f64), im: (f64, f64) },
}

struct Characteristic<'a> {
    op: &'a EllipticOperator,
    bc: &'a BoundaryCondition,
}

impl Characteristic<'_> {
    /// `log det R(l - lambda)`, `None` at an exact zero.
    fn log(&self, lambda: Complex64) -> Result<Option<LogDet>> {
        match log_det_r(self.op, self.bc, -lambda, DET_TOL) {
            Ok(v) => Ok(Some(v)),
            Err(Error::SingularMatrix { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn log_modulus(&self, lambda: Complex64) -> Result<f64> {
        Ok(self.log(lambda)?.map_or(f64::NEG_INFINITY, |v| v.log_modulus))
    }
}

/// Zeros inside a circle, from the moments `(1/2 pi i) oint w^p f'/f dw`.
struct Cluster {
    roots: Vec<(Complex64, usize)>,
    /// Largest `log |f|` on the circle.
    scale: f64,
}

fn circle_cluster(f: &Characteristic<'_>, center: Complex64, radius: f64) -> Result<Cluster> {
    let mut planner = FftPlanner::<f64>::new();
    let mut n = 64;
    loop {
        let mut logs = Vec::with_capacity(n);
        for j in 0..n {
            let theta = 2.0 * PI * j as f64 / n as f64;
            let z = center + Complex64::from_polar(radius, theta);
            let v = f.log(z)?.ok_or_else(|| Error::NonFinite(format!("det R vanishes at {z} on a contour")))?;
            logs.push(v);
        }
        let mut phases = Vec::with_capacity(n + 1);
        let mut prev = logs[0].phase;
        let mut smooth = true;
        for v in logs.iter().chain(std::iter::once(&logs[0])) {
            let p = v.nearest_branch(prev).phase;
            smooth &= (p - prev).abs() <= PI / 2.0;
            phases.push(p);
            prev = p;
        }
        let winding = ((phases[n] - phases[0]) / (2.0 * PI)).round();
        let mut h: Vec<Complex64> = (0..n)
            .map(|j| {
                let theta = 2.0 * PI * j as f64 / n as f64;
                Complex64::new(logs[j].log_modulus, phases[j] - winding * theta)
            })
            .collect();
        planner.plan_fft_forward(n).process(&mut h);
        let peak = h.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let tail = h[n / 4..3 * n / 4].iter().map(|c| c.norm()).fold(0.0, f64::max);
        let resolved = smooth && tail <= 1e-10 * peak.max(1.0);
        if !resolved && n < 2048 {
            n *= 2;
            continue;
        }
        if !resolved {
            return Err(Error::NoConvergence { a: center.re - radius, b: center.re + radius, estimate: tail });
        }
        // d h / d theta spectrally, then d log f / d theta = h' + i k.
        for (m, c) in h.iter_mut().enumerate() {
            let freq = if m < n / 2 { m as f64 } else if m > n / 2 { m as f64 - n as f64 } else { 0.0 };
            *c *= I * freq / n as f64;
        }
        planner.plan_fft_inverse(n).process(&mut h);
        let k = winding.max(0.0) as usize;
        let scale = logs.iter().map(|v| v.log_modulus).fold(f64::NEG_INFINITY, f64::max);
        if k == 0 {
            return Ok(Cluster { roots: Vec::new(), scale });
        }
        if k > MAX_CLUSTER {
            return Err(Error::MissedRoots { found: 0, counted: k });
        }
        let dlog: Vec<Complex64> = h.iter().map(|d| d + I * winding).collect();
        let power_sums: Vec<Complex64> = (1..=k)
            .map(|p| {
                let s: Complex64 = (0..n)
                    .map(|j| {
                        let w = Complex64::from_polar(radius, 2.0 * PI * j as f64 / n as f64);
                        w.powi(p as i32) * dlog[j]
                    })
                    .sum();
                s / (I * n as f64)
            })
            .collect();
        let offsets = roots_from_power_sums(&power_sums)?;
        // Numerical noise splits a d-fold root by about noise^{1/d}.
        let merge = 1e-4 * radius;
        let mut roots: Vec<(Complex64, usize)> = Vec::new();
        for w in offsets {
            if let Some((r, m)) = roots.iter_mut().find(|(r, _)| (*r - w).norm() <= merge) {
                *r = (*r * *m as f64 + w) / (*m as f64 + 1.0);
                *m += 1;
            } else {
                roots.push((w, 1));
            }
        }
        let roots = roots.into_iter().map(|(w, m)| (center + w, m)).collect();
        return Ok(Cluster { roots, scale });
    }
}

/// Roots of the monic polynomial whose roots have the given power sums.
fn roots_from_power_sums(p: &[Complex64]) -> Result<Vec<Complex64>> {
    let k = p.len();
    let mut e = vec![Complex64::new(1.0, 0.0)];
    for q in 1..=k {
        let mut acc = ZERO;
        for i in 1..=q {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            acc += e[q - i] * p[i - 1] * sign;
        }
        e.push(acc / q as f64);
    }
    if k == 1 {
        return Ok(vec![e[1]]);
    }
    // Companion matrix of w^k - e1 w^{k-1} + e2 w^{k-2} - ...
    let mut c = CMatrix::zeros(k, k);
    for i in 1..k {
        c[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    for j in 0..k {
        let sign = if (j + 1) % 2 == 1 { 1.0 } else { -1.0 };
        c[(0, j)] = e[j + 1] * sign;
    }
    matrix_eigenvalues(&c)
}

fn residual(f: &Characteristic<'_>, root: Complex64, scale: f64) -> Result<f64> {
    let lm = f.log_modulus(root)?;
    Ok(if lm == f64::NEG_INFINITY { 0.0 } else { (lm - scale).exp() })
}

#[derive(Default)]
struct Found {
    roots: Vec<(Complex64, usize, f64)>,
}

impl Found {
    fn insert(&mut self, root: Complex64, mult: usize, res: f64) {
        let tol = 1e-9 * root.norm().max(1.0);
        if !self.roots.iter().any(|(r, _, _)| (*r - root).norm() <= tol) {
            self.roots.push((root, mult, res));
        }
    }
}

fn real_roots(f: &Characteristic<'_>, count: usize, lo: f64, hi: f64) -> Result<Found> {
    let n = f.op.order();
    let step = PI / (16.0 * f.op.length());
    let t_max = (hi - lo).powf(1.0 / n as f64);
    let lambda = |t: f64| lo + t.powi(n as i32);
    let mut found = Found::default();
    let mut ts = vec![0.0];
    let mut vals = vec![f.log_modulus(Complex64::new(lo, 0.0))?];
    let mut t = 0.0;
    while t < t_max {
        t = (t + step).min(t_max);
        ts.push(t);
        vals.push(f.log_modulus(Complex64::new(lambda(t), 0.0))?);
        let i = ts.len() - 2;
        // Every root below the frontier has been enclosed by some circle.
        let frontier = lambda(ts[i]);
        let below: usize = found.roots.iter().filter(|r| r.0.re < frontier).map(|r| r.1).sum();
        if below >= count {
            break;
        }
        let is_min = vals[i] <= vals[i + 1] && (i == 0 || vals[i] <= vals[i - 1]);
        if !is_min {
            continue;
        }
        let center = lambda(ts[i]);
        let left = if i == 0 { 0.0 } else { center - lambda(ts[i - 1]) };
        let radius = (lambda(ts[i + 1]) - center).max(left);
        let cluster = circle_cluster(f, Complex64::new(center, 0.0), radius)?;
        for (root, mult) in cluster.roots {
            if root.re >= lo && root.re <= hi && root.im.abs() <= radius {
                let res = residual(f, root, cluster.scale)?;
                found.insert(root, mult, res);
            }
        }
    }
    Ok(found)
}

/// Winding number of `det R` along the rectangle boundary.
fn box_count(f: &Characteristic<'_>, re: (f64, f64), im: (f64, f64)) -> Result<usize> {
    let corners = [
        Complex64::new(re.0, im.0),
        Complex64::new(re.1, im.0),
        Complex64::new(re.1, im.1),
        Complex64::new(re.0, im.1),
    ];
    let phase_at = |z: Complex64| -> Result<f64> {
        f.log(z)?
            .map(|v| v.phase)
            .ok_or_else(|| Error::NonFinite(format!("det R vanishes at {z} on a contour")))
    };
    let mut total = 0.0;
    for e in 0..4 {
        let (za, zb) = (corners[e], corners[(e + 1) % 4]);
        let mut stack = vec![(0.0, 1.0, phase_at(za)?, phase_at(zb)?, 0usize)];
        while let Some((s0, s1, p0, p1, depth)) = stack.pop() {
            let d = principal_angle(p1 - p0);
            if d.abs() <= PI / 4.0 || depth >= 40 {
                total += d;
                continue;
            }
            let sm = 0.5 * (s0 + s1);
            let pm = phase_at(za + (zb - za) * sm)?;
            stack.push((sm, s1, pm, p1, depth + 1));
            stack.push((s0, sm, p0, pm, depth + 1));
        }
    }
    let k = (total / (2.0 * PI)).round();
    Ok(k.max(0.0) as usize)
}

fn box_roots(
    f: &Characteristic<'_>,
    re: (f64, f64),
    im: (f64, f64),
    depth: usize,
    found: &mut Found,
) -> Result<usize> {
    let count = box_count(f, re, im)?;
    if count == 0 {
        return Ok(0);
    }
    let center = Complex64::new(0.5 * (re.0 + re.1), 0.5 * (im.0 + im.1));
    let radius = 0.5 * (re.1 - re.0).hypot(im.1 - im.0);
    let inside = |z: Complex64| z.re >= re.0 && z.re <= re.1 && z.im >= im.0 && z.im <= im.1;
    if count <= MAX_CLUSTER || depth >= MAX_BOX_DEPTH {
        if let Ok(cluster) = circle_cluster(f, center, radius) {
            let local: Vec<_> = cluster.roots.into_iter().filter(|(z, _)| inside(*z)).collect();
            if local.iter().map(|r| r.1).sum::<usize>() == count {
                for (z, m) in local {
                    let res = residual(f, z, cluster.scale)?;
                    found.insert(z, m, res);
                }
                return Ok(count);
            }
        }
        if depth >= MAX_BOX_DEPTH {
            return Err(Error::MissedRoots { found: 0, counted: count });
        }
    }
    let (rm, im_mid) = (center.re, center.im);
    let mut located = 0;
    for (r, i) in [((re.0, rm), (im.0, im_mid)), ((rm, re.1), (im.0, im_mid)), ((re.0, rm), (im_mid, im.1)), ((rm, re.1), (im_mid, im.1))] {
        located += box_roots(f, r, i, depth + 1, found)?;
    }
    if located != count {
        return Err(Error::MissedRoots { found: located, counted: count });
    }
    Ok(count)
}

/// The first `count` eigenvalues (with multiplicity) of `(op, bc)` in `region`.
pub fn eigenvalues(
    op: &EllipticOperator,
    bc: &BoundaryCondition,
    count: usize,
    region: SearchRegion,
) -> Result<Spectrum> {
    bc.check_for(op)?;
    let f = Characteristic { op, bc };
    let mut found = match region {
        SearchRegion::Real { lo, hi } => {
            if !(hi > lo) {
                return Err(Error::InvalidArgument(format!("empty search interval [{lo}, {hi}]")));
            }
            real_roots(&f, count, lo, hi)?
        }
        SearchRegion::Box { re, im } => {
            if !(re.1 > re.0 && im.1 > im.0) {
                return Err(Error::InvalidArgument("empty search box".into()));
            }
            let mut found = Found::default();
            box_roots(&f, re, im, 0, &mut found)?;
            found
        }
    };
    found.roots.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)));
    let mut spec = Spectrum {
        eigenvalues: Vec::new(),
        multiplicities: Vec::new(),
        count_requested: count,
        tolerance: LOCALIZATION_TOL,
        residuals: Vec::new(),
    };
    for (z, m, res) in found.roots {
        if spec.total() >= count {
            break;
        }
        spec.eigenvalues.push(z);
        spec.multiplicities.push(m);
        spec.residuals.push(res);
    }
    Ok(spec)
}

/// Weyl data used to model the unlocated part of the spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeylModel {
    pub order: usize,
    pub length: f64,
}

impl WeylModel {
    pub fn for_operator(op: &EllipticOperator) -> Self {
        Self { order: op.order(), length: op.length() }
    }
}

/// Tail model `lambda_k = e^{i phase} (omega (k + shift))^n (1 + correction / (k + shift)^2)`
/// for one ray of the spectrum, continued from index `next_index` on.
#[derive(Clone, Debug, Serialize)]
pub struct TailFit {
    pub phase: f64,
    /// Spacing of `|lambda|^{1/n}` fitted on the tail.
    pub fitted_omega: f64,
    /// Spacing predicted by the Weyl law, used in the continuation.
    pub omega: f64,
    pub shift: f64,
    pub correction: f64,
    pub multiplicity: usize,
    pub next_index: i64,
    /// Largest relative misfit of the model on the fitted eigenvalues.
    pub residual: f64,
}

impl TailFit {
    fn model(&self, n: usize, k: f64) -> f64 {
        let q = k + self.shift;
        (self.omega * q).powi(n as i32) * (1.0 + self.correction / (q * q))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralZeta {
    pub zeta0: Complex64,
    pub zeta_prime0: Complex64,
    /// Finite part of `zeta(s)` at `s = 1`.
    pub finite_part_at_one: Complex64,
    /// Residue of `zeta(s)` at `s = 1` (nonzero only for first order).
    pub residue_at_one: Complex64,
    /// Estimated error of `zeta_prime0` from the tail model.
    pub truncation: f64,
    /// `(sum over rays of multiplicity / omega)^{-n}`, to compare with `(pi / length)^n`.
    pub weyl_coefficient: f64,
    pub tails: Vec<TailFit>,
}

impl SpectralZeta {
    /// `exp(-zeta'(0))`.
    pub fn determinant(&self) -> Complex64 {
        (-self.zeta_prime0).exp()
    }
}

/// Argument of `z` in `(theta - 2 pi, theta]`.
fn branch_arg(z: Complex64, theta: f64) -> f64 {
    let mut p = z.arg();
    while p > theta {
        p -= 2.0 * PI;
    }
    while p <= theta - 2.0 * PI {
        p += 2.0 * PI;
    }
    p
}

fn fit_tail(
    moduli: &[(f64, usize)],
    phase: f64,
    n: usize,
    weyl_omega: f64,
) -> Result<TailFit> {
    let len = moduli.len();
    let start = len - (len / 3).max(6);
    let tail = &moduli[start..];
    let d = tail[0].1;
    if tail.iter().any(|t| t.1 != d) {
        return Err(Error::TailMisfit { residual: f64::INFINITY });
    }
    let ys: Vec<f64> = tail.iter().map(|t| t.0.powf(1.0 / n as f64)).collect();
    let is: Vec<f64> = (start..len).map(|i| i as f64).collect();
    let mean_i = is.iter().sum::<f64>() / is.len() as f64;
    let mean_y = ys.iter().sum::<f64>() / ys.len() as f64;
    let cov: f64 = is.iter().zip(&ys).map(|(i, y)| (i - mean_i) * (y - mean_y)).sum();
    let var: f64 = is.iter().map(|i| (i - mean_i).powi(2)).sum();
    let fitted_omega = cov / var;
    let omega = weyl_omega * d as f64;
    if ((fitted_omega / omega) - 1.0).abs() > 1e-2 {
        return Err(Error::TailMisfit { residual: (fitted_omega / omega - 1.0).abs() });
    }
    let mut offsets: Vec<f64> = ys.iter().zip(&is).map(|(y, i)| y / omega - i).collect();
    offsets.sort_by(f64::total_cmp);
    let offset = offsets[offsets.len() / 2].round();
    let ks: Vec<f64> = is.iter().map(|i| i + offset).collect();
    let mut fit = TailFit {
        phase,
        fitted_omega,
        omega,
        shift: ys.iter().zip(&ks).map(|(y, k)| y / omega - k).sum::<f64>() / ks.len() as f64,
        correction: 0.0,
        multiplicity: d,
        next_index: offset as i64 + len as i64,
        residual: 0.0,
    };
    // Gauss-Newton on the relative misfit in (shift, correction).
    for _ in 0..50 {
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (t, &k) in tail.iter().zip(&ks) {
            let q = k + fit.shift;
            let model = fit.model(n, k);
            let r = model / t.0 - 1.0;
            let base = (fit.omega * q).powi(n as i32);
            let dshift = (n as f64 / q * model - 2.0 * fit.correction * base / (q * q * q)) / t.0;
            let dcorr = base / (q * q) / t.0;
            a11 += dshift * dshift;
            a12 += dshift * dcorr;
            a22 += dcorr * dcorr;
            b1 -= dshift * r;
            b2 -= dcorr * r;
        }
        let det = a11 * a22 - a12 * a12;
        if det.abs() < 1e-300 {
            break;
        }
        let ds = (a22 * b1 - a12 * b2) / det;
        let dc = (a11 * b2 - a12 * b1) / det;
        fit.shift += ds;
        fit.correction += dc;
        if ds.abs() < 1e-15 && dc.abs() < 1e-15 * fit.correction.abs().max(1.0) {
            break;
        }
    }
    fit.residual = tail
        .iter()
        .zip(&ks)
        .map(|(t, &k)| (fit.model(n, k) / t.0 - 1.0).abs())
        .fold(0.0, f64::max);
    if !(fit.residual <= TAIL_MISFIT) {
        return Err(Error::TailMisfit { residual: fit.residual });
    }
    if fit.next_index as f64 + fit.shift <= 1.0 {
        return Err(Error::TailMisfit { residual: fit.residual });
    }
    Ok(fit)
}

/// `zeta(0)`, `zeta'(0)` and the finite part at `s = 1` of
/// `zeta_theta(s) = sum lambda^{-s}` with `arg lambda in (theta - 2 pi, theta]`.
///
/// Located eigenvalues are summed directly. The remainder of each ray (the
/// positive and the negative real part half planes) is replaced by the
/// model of [`TailFit`], fitted on the last third of the located values of
/// that ray and continued exactly through Hurwitz zeta functions. Pairing
/// the rays before continuation is what makes first order lattices sum
/// symmetrically.
pub fn zeta_via_spectrum(spec: &Spectrum, model: &WeylModel, theta: f64) -> Result<SpectralZeta> {
    if spec.total() < MIN_EIGENVALUES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_EIGENVALUES} eigenvalues, got {}",
            spec.total()
        )));
    }
    let n = model.order;
    let scale = spec.eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut zeta0 = ZERO;
    let mut zeta_prime0 = ZERO;
    let mut fp1 = ZERO;
    let mut rays: [Vec<(f64, usize)>; 2] = [Vec::new(), Vec::new()];
    let mut ray_phase = [0.0; 2];
    for (&z, &m) in spec.eigenvalues.iter().zip(&spec.multiplicities) {
        if z.norm() <= 1e-10 * scale {
            continue;
        }
        let phase = branch_arg(z, theta);
        let md = m as f64;
        zeta0 += md;
        zeta_prime0 -= md * Complex64::new(z.norm().ln(), phase);
        fp1 += md / z;
        let r = usize::from(z.re < 0.0);
        rays[r].push((z.norm(), m));
        ray_phase[r] = phase;
    }
    let active: Vec<usize> = (0..2).filter(|&r| rays[r].len() >= 12).collect();
    if active.is_empty() {
        return Err(Error::TailMisfit { residual: f64::INFINITY });
    }
    let weyl_omega = PI * active.len() as f64 / model.length;
    let mut tails = Vec::new();
    let mut truncation = 0.0;
    let mut residue = ZERO;
    let mut density = 0.0;
    for &r in &active {
        let mut moduli = rays[r].clone();
        moduli.sort_by(|a, b| a.0.total_cmp(&b.0));
        let fit = fit_tail(&moduli, ray_phase[r], n, weyl_omega)?;
        let (d, omega, c) = (fit.multiplicity as f64, fit.omega, fit.correction);
        let a = fit.next_index as f64 + fit.shift;
        let nf = n as f64;
        let z0 = d * hurwitz_zeta_at_zero(a);
        let mut zp = d * (-nf * omega.ln() * hurwitz_zeta_at_zero(a) + nf * hurwitz_zeta_prime_at_zero(a));
        let mut cj = 1.0;
        for j in 1..=6 {
            cj *= -c;
            zp += d * cj * hurwitz_zeta(2.0 * j as f64, a) / j as f64;
        }
        let rot = Complex64::from_polar(1.0, -fit.phase);
        zeta0 += z0;
        zeta_prime0 += -I * fit.phase * z0 + zp;
        if n == 1 {
            let mut series = -digamma(a) - omega.ln();
            let mut cj = 1.0;
            for j in 1..=6 {
                cj *= -c;
                series += cj * hurwitz_zeta(1.0 + 2.0 * j as f64, a);
            }
            fp1 += d * rot / omega * (Complex64::new(series, 0.0) - I * fit.phase);
            residue += d * rot / omega;
        } else {
            let mut series = 0.0;
            let mut cj = 1.0;
            for j in 0..=6 {
                series += cj * hurwitz_zeta(nf + 2.0 * j as f64, a);
                cj *= -c;
            }
            fp1 += d * rot * omega.powi(-(n as i32)) * series;
        }
        // Unmodelled O(k^-4) corrections summed over the continued tail.
        truncation += d * fit.residual * a / 3.0;
        density += fit.multiplicity as f64 / fit.fitted_omega;
        tails.push(fit);
    }
    Ok(SpectralZeta {
        zeta0,
        zeta_prime0,
        finite_part_at_one: fp1,
        residue_at_one: residue,
        truncation,
        weyl_coefficient: density.powi(-(n as i32)),
        tails,
    })
}

/// Parameters of the registered fixtures: `-d^2/dx^2 + mu^2` on an interval
/// of length `length`, and the twist angle `beta` for the first order case.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FixtureParams {
    pub mu: f64,
    pub length: f64,
    pub beta: f64,
}

impl Default for FixtureParams {
    fn default() -> Self {
        Self { mu: 1.0, length: 1.0, beta: PI / 3.0 }
    }
}

/// A registry entry: value and how it was derived.
#[derive(Clone, Debug, Serialize)]
pub struct ClosedFormCase {
    pub id: String,
    pub params: FixtureParams,
    pub value: Complex64,
    pub derivation: String,
}

/// Identifiers accepted by [`closed_form_det`].
pub const REGISTERED_CASES: [&str; 4] = ["dirichlet", "periodic", "antiperiodic", "twisted"];

/// Closed form determinant of a registered fixture.
pub fn closed_form_det(case: &str, params: FixtureParams) -> Result<ClosedFormCase> {
    let FixtureParams { mu, length: len, beta } = params;
    let (value, derivation) = match case {
        "dirichlet" => (
            if mu == 0.0 { 2.0 * len } else { 2.0 * (mu * len).sinh() / mu },
            "eigenvalues (k pi / L)^2 + mu^2, k >= 1; the zeta-regularized product of \
             (k pi / L)^2 is 2L (from zeta_R(0) = -1/2, zeta_R'(0) = -ln(2 pi) / 2) and \
             prod (1 + mu^2 L^2 / (k pi)^2) = sinh(mu L) / (mu L), giving 2 sinh(mu L) / mu",
        ),
        "periodic" => (
            4.0 * (0.5 * mu * len).sinh().powi(2),
            "eigenvalues (2 pi k / L)^2 + mu^2, k in Z; pairing k and -k gives \
             mu^2 prod_{k>=1} ((2 pi k / L)^2 + mu^2)^2 = 4 sinh^2(mu L / 2); \
             zero for mu = 0 (constant kernel)",
        ),
        "antiperiodic" => (
            4.0 * (0.5 * mu * len).cosh().powi(2),
            "eigenvalues ((2k + 1) pi / L)^2 + mu^2, k in Z, each twice for k >= 0; \
             the regularized product is 4 cosh^2(mu L / 2)",
        ),
        "twisted" => {
            let v = Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -beta);
            return Ok(ClosedFormCase {
                id: case.into(),
                params,
                value: v,
                derivation: "-i d/dx with f(L) = e^{i beta} f(0): eigenvalues (2 pi k + beta) / L, \
                             k in Z; cut along the positive imaginary axis, \
                             zeta(s) = (2 pi / L)^{-s} (zeta_H(s, a) + e^{i pi s} zeta_H(s, 1 - a)) with \
                             a = beta / 2 pi, so zeta(0) = 0 and det = 2 sin(beta / 2) e^{i (pi - beta) / 2} \
                             = 1 - e^{-i beta}"
                    .into(),
            });
        }
        other => return Err(Error::UnknownCase(other.into())),
    };
    Ok(ClosedFormCase { id: case.into(), params, value: Complex64::new(value, 0.0), derivation: derivation.into() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hurwitz_reduces_to_riemann() {
        assert!((hurwitz_zeta(2.0, 1.0) - PI * PI / 6.0).abs() < 1e-14);
        assert!((hurwitz_zeta(4.0, 1.0) - PI.powi(4) / 90.0).abs() < 1e-14);
        // zeta(2, 1/2) = 3 zeta(2)
        assert!((hurwitz_zeta(2.0, 0.5) - 0.5 * PI * PI).abs() < 1e-13);
        assert!((hurwitz_zeta(3.0, 40.5) - (hurwitz_zeta(3.0, 39.5) - 39.5f64.powi(-3))).abs() < 1e-16);
    }

    #[test]
    fn hurwitz_derivative_at_zero() {
        // zeta_R'(0) = -ln(2 pi) / 2
        assert!((hurwitz_zeta_prime_at_zero(1.0) + 0.5 * (2.0 * PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn power_sums_recover_roots() {
        let roots = [Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.1), Complex64::new(3.0, 0.0)];
        let p: Vec<Complex64> = (1..=3).map(|q| roots.iter().map(|r| r.powi(q)).sum()).collect();
        let mut got = roots_from_power_sums(&p).unwrap();
        got.sort_by(|a, b| a.re.total_cmp(&b.re));
        for (g, r) in got.iter().zip([roots[1], roots[0], roots[2]]) {
            assert!((g - r).norm() < 1e-12);
        }
    }

    #[test]
    fn lattice_zeta_of_dirichlet_values() {
        let values: Vec<Complex64> =
            (1..=40).map(|k| Complex64::new((k as f64 * PI).powi(2) + 1.0, 0.0)).collect();
        let z = zeta_via_spectrum(&Spectrum::from_values(&values), &WeylModel { order: 2, length: 1.0 }, PI)
            .unwrap();
        assert!((z.zeta0 + 0.5).norm() < 1e-10);
        assert!((z.determinant() - 2.0 * 1f64.sinh()).norm() < 1e-9, "{:?}", z.determinant());
        assert!((z.weyl_coefficient / (PI * PI) - 1.0).abs() < 1e-2);
    }

    #[test]
    fn symmetric_lattice_for_first_order() {
        let beta = PI / 3.0;
        let values: Vec<Complex64> =
            (-30..=30).map(|k| Complex64::new(2.0 * PI * k as f64 + beta, 0.0)).collect();
        let z = zeta_via_spectrum(
            &Spectrum::from_values(&values),
            &WeylModel { order: 1, length: 1.0 },
            PI / 2.0,
        )
        .unwrap();
        let expected = closed_form_det("twisted", FixtureParams { beta, ..Default::default() }).unwrap();
        assert!(z.zeta0.norm() < 1e-12);
        assert!((z.determinant() - expected.value).norm() < 1e-10);
        // (psi(1 - a) - psi(a) - i pi) / 2 pi = cot(beta / 2) / 2 - i / 2
        let fp = Complex64::new(0.5 / (0.5 * beta).tan(), -0.5);
        assert!((z.finite_part_at_one - fp).norm() < 1e-10, "{:?}", z.finite_part_at_one);
        assert!(z.residue_at_one.norm() < 1e-12);
    }

    #[test]
    fn registry() {
        let p = FixtureParams::default();
        assert!((closed_form_det("dirichlet", p).unwrap().value.re - 2.350_402_387_287_6).abs() < 1e-12);
        assert!((closed_form_det("periodic", p).unwrap().value.re - 1.086_161_269_630_5).abs() < 1e-12);
        assert!((closed_form_det("antiperiodic", p).unwrap().value.re - 5.086_161_269_630_5).abs() < 1e-12);
        let zero = closed_form_det("periodic", FixtureParams { mu: 0.0, ..p }).unwrap();
        assert_eq!(zero.value, ZERO);
        assert!(matches!(closed_form_det("neumann", p), Err(Error::UnknownCase(_))));
    }
}
