//! Fundamental matrices, the characteristic matrix `R(z) = R_a + R_b phi(b; l+z)`,
//! branch-tracked `log det R` along the positive real axis, and the resolvent
//! kernel with its trace.

use std::borrow::Cow;
use std::cell::RefCell;
use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{
    eigenvalues, expm, lu_logdet, quad, thin_qr, CMatrix, Dopri5, LogDet, Lu, RkOptions, RkStats,
};
use crate::operator::{companion_matrix, companion_row, BoundaryCondition, EllipticOperator};

/// Entry magnitude above which a fundamental matrix is considered unsafe.
pub const OVERFLOW_GUARD: f64 = 1e280;

/// Subspace bases are re-orthonormalized once an entry exceeds this size.
const RENORM_THRESHOLD: f64 = 54.598_150_033_144_24; // e^4

/// Consecutive ray phases further apart than this trigger mesh refinement.
const PHASE_STEP_LIMIT: f64 = PI / 2.0;

const MAX_REFINE_DEPTH: usize = 12;

/// Number of trajectory checkpoints kept for kernel evaluation.
pub const CHECKPOINTS: usize = 64;

/// Evaluates `A(x) Y` and `-Y A(x)` using the block companion structure.
struct CompanionField<'a> {
    op: &'a EllipticOperator,
    z: Complex64,
    cached: Option<Vec<CMatrix>>,
    failure: RefCell<Option<Error>>,
}

impl<'a> CompanionField<'a> {
    fn new(op: &'a EllipticOperator, z: Complex64) -> Result<Self> {
        let cached = if op.is_constant() {
            Some(companion_row(op, op.interval().0, z)?)
        } else {
            None
        };
        Ok(Self { op, z, cached, failure: RefCell::new(None) })
    }

    fn betas(&self, x: f64) -> Result<Cow<'_, [CMatrix]>> {
        match &self.cached {
            Some(b) => Ok(Cow::Borrowed(b.as_slice())),
            None if self.op.dim() == 1 => {
                let n = self.op.order();
                let inv = -1.0
                    / (self.op.coefficient(n).eval_scalar(x) * crate::operator::minus_i_pow(n));
                if !inv.is_finite() {
                    return Err(Error::SingularLeadingCoefficient { x });
                }
                Ok(Cow::Owned(
                    (0..n)
                        .map(|k| {
                            let mut alpha = self.op.coefficient(k).eval_scalar(x)
                                * crate::operator::minus_i_pow(k);
                            if k == 0 {
                                alpha += self.z;
                            }
                            CMatrix::scalar(inv * alpha)
                        })
                        .collect(),
                ))
            }
            None => Ok(Cow::Owned(companion_row(self.op, x, self.z)?)),
        }
    }

    fn fail(&self, e: Error, out: &mut [Complex64]) {
        self.failure.borrow_mut().get_or_insert(e);
        for v in out.iter_mut() {
            *v = Complex64::new(f64::NAN, f64::NAN);
        }
    }

    /// `out = A(x) y` for `y` of shape `nm x cols`.
    fn left(&self, x: f64, y: &[Complex64], cols: usize, out: &mut [Complex64]) {
        let betas = match self.betas(x) {
            Ok(b) => b,
            Err(e) => return self.fail(e, out),
        };
        let (n, m) = (self.op.order(), self.op.dim());
        let shift = m * cols;
        let top = (n - 1) * shift;
        out[..top].copy_from_slice(&y[shift..shift + top]);
        let bottom = &mut out[top..];
        for v in bottom.iter_mut() {
            *v = Complex64::new(0.0, 0.0);
        }
        for (k, beta) in betas.iter().enumerate() {
            for p in 0..m {
                for q in 0..m {
                    let c = beta[(p, q)];
                    if c.re == 0.0 && c.im == 0.0 {
                        continue;
                    }
                    let src = &y[(k * m + q) * cols..(k * m + q + 1) * cols];
                    let dst = &mut bottom[p * cols..(p + 1) * cols];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += c * s;
                    }
                }
            }
        }
    }

    /// `out = -y A(x)` for `y` of shape `rows x nm`.
    fn right_neg(&self, x: f64, y: &[Complex64], rows: usize, out: &mut [Complex64]) {
        let betas = match self.betas(x) {
            Ok(b) => b,
            Err(e) => return self.fail(e, out),
        };
        let (n, m) = (self.op.order(), self.op.dim());
        let nm = n * m;
        let last = (n - 1) * m;
        for r in 0..rows {
            let yr = &y[r * nm..(r + 1) * nm];
            let or = &mut out[r * nm..(r + 1) * nm];
            for j in 0..nm {
                or[j] = if j >= m { -yr[j - m] } else { Complex64::new(0.0, 0.0) };
            }
            for (k, beta) in betas.iter().enumerate() {
                for p in 0..m {
                    let yp = yr[last + p];
                    if yp.re == 0.0 && yp.im == 0.0 {
                        continue;
                    }
                    for q in 0..m {
                        or[k * m + q] -= yp * beta[(p, q)];
                    }
                }
            }
        }
    }

    fn take_failure(&self) -> Option<Error> {
        self.failure.borrow_mut().take()
    }
}

fn to_matrix(rows: usize, cols: usize, data: &[Complex64]) -> CMatrix {
    CMatrix::from_fn(rows, cols, |i, j| data[i * cols + j])
}

/// Integrates `Y' = A Y` (`left = true`) or `Y' = -Y A` from `x0` to `x1`.
/// `on_step` may rescale the state and must report whether it did.
fn propagate(
    field: &CompanionField<'_>,
    left: bool,
    x0: f64,
    x1: f64,
    y0: &CMatrix,
    tol: f64,
    mut on_step: impl FnMut(f64, &mut [Complex64]) -> bool,
) -> Result<(CMatrix, RkStats)> {
    let (rows, cols) = (y0.rows(), y0.cols());
    let rhs = |x: f64, y: &[Complex64], dy: &mut [Complex64]| {
        if left {
            field.left(x, y, cols, dy)
        } else {
            field.right_neg(x, y, rows, dy)
        }
    };
    let mut rk = Dopri5::new(rhs, x0, y0.as_slice().to_vec(), RkOptions::with_tol(tol));
    let res = rk.advance_to_with(x1, &mut on_step);
    if let Some(e) = field.take_failure() {
        return Err(e);
    }
    res?;
    Ok((to_matrix(rows, cols, rk.state()), rk.stats()))
}

/// `phi(b; l + z)` and, optionally, checkpointed values along `[a, b]`.
#[derive(Clone, Debug)]
pub struct FundamentalMatrix {
    pub z: Complex64,
    pub phi_b: CMatrix,
    pub checkpoints: Vec<(f64, CMatrix)>,
    pub tol: f64,
    pub stats: RkStats,
}

fn exceeds_guard(state: &[Complex64]) -> bool {
    state.iter().any(|v| v.norm() > OVERFLOW_GUARD)
}

fn integrate_fundamental(
    op: &EllipticOperator,
    z: Complex64,
    tol: f64,
    checkpoints: usize,
) -> Result<FundamentalMatrix> {
    let field = CompanionField::new(op, z)?;
    let (a, b) = op.interval();
    let nm = op.system_size();
    let mut y = CMatrix::identity(nm);
    let mut stats = RkStats::default();
    let mut stored = Vec::new();
    let segments = checkpoints.max(1);
    if checkpoints > 0 {
        stored.push((a, y.clone()));
    }
    for s in 0..segments {
        let x0 = a + (b - a) * s as f64 / segments as f64;
        let x1 = if s + 1 == segments { b } else { a + (b - a) * (s + 1) as f64 / segments as f64 };
        let mut overflow = false;
        let (next, st) = propagate(&field, true, x0, x1, &y, tol, |_, state| {
            overflow |= exceeds_guard(state);
            false
        })?;
        if overflow || next.max_abs() > OVERFLOW_GUARD {
            return Err(Error::OverflowRisk { shift: z.norm() });
        }
        stats += st;
        y = next;
        if checkpoints > 0 {
            stored.push((x1, y.clone()));
        }
    }
    Ok(FundamentalMatrix { z, phi_b: y, checkpoints: stored, tol, stats })
}

/// Solves `phi' = A phi`, `phi(a) = 1` for `l + z`.
pub fn fundamental_matrix(op: &EllipticOperator, z: Complex64, tol: f64) -> Result<FundamentalMatrix> {
    integrate_fundamental(op, z, tol, 0)
}

/// Like [`fundamental_matrix`] but keeps `phi` at `checkpoints + 1` uniform points.
pub fn fundamental_trajectory(
    op: &EllipticOperator,
    z: Complex64,
    tol: f64,
    checkpoints: usize,
) -> Result<FundamentalMatrix> {
    integrate_fundamental(op, z, tol, checkpoints)
}

/// `R(z) = R_a + R_b phi(b; l + z)`.
pub fn r_matrix(
    op: &EllipticOperator,
    bc: &BoundaryCondition,
    z: Complex64,
    tol: f64,
) -> Result<CMatrix> {
    bc.check_for(op)?;
    let phi = fundamental_matrix(op, z, tol)?;
    Ok(bc.ra() + &(bc.rb() * &phi.phi_b))
}

/// Orthonormal basis `[Y1; Y2]` of the graph of `phi(x)` and the accumulated
/// log-determinant of the basis changes.
struct GraphBasis {
    y1: CMatrix,
    y2: CMatrix,
    log_scale: f64,
}

impl GraphBasis {
    fn new(nm: usize) -> Self {
        let s = Complex64::new(FRAC_1_SQRT_2, 0.0);
        Self {
            y1: CMatrix::identity(nm).scale(s),
            y2: CMatrix::identity(nm).scale(s),
            log_scale: 0.5 * nm as f64 * LN_2,
        }
    }

    fn renormalize(&mut self) -> Result<()> {
        let stacked = self.y1.vstack(&self.y2);
        let (q, diag, _) = thin_qr(&stacked)?;
        let nm = self.y1.rows();
        self.log_scale += diag.iter().map(|d| d.ln()).sum::<f64>();
        self.y1 = q.block(0, 0, nm, nm);
        self.y2 = q.block(nm, 0, nm, nm);
        Ok(())
    }
}

/// `log det R(z)` computed without forming `phi(b)`.
///
/// The graph `[1; phi(x)]` is propagated as an orthonormal basis that is
/// re-orthonormalized whenever it grows, so exponentially large and small
/// solution components stay resolved for large `|z|`. The phase is reported
/// in `(-pi, pi]`.
pub fn log_det_r(
    op: &EllipticOperator,
    bc: &BoundaryCondition,
    z: Complex64,
    tol: f64,
) -> Result<LogDet> {
    bc.check_for(op)?;
    let nm = op.system_size();
    let (a, b) = op.interval();
    let mut basis = GraphBasis::new(nm);
    if op.is_constant() {
        let gen = companion_matrix(op, a, z)?;
        let rate = eigenvalues(&gen)?.iter().map(|e| e.re.abs()).fold(0.0, f64::max);
        let steps = ((rate * (b - a) / 2.0).ceil() as usize).max(1);
        let prop = expm(&gen.scale(Complex64::new((b - a) / steps as f64, 0.0)))?;
        for _ in 0..steps {
            basis.y2 = &prop * &basis.y2;
            if basis.y2.max_abs() > RENORM_THRESHOLD {
                basis.renormalize()?;
            }
        }
    } else {
        let field = CompanionField::new(op, z)?;
        let mut failure = None;
        let y2_start = basis.y2.clone();
        let (y2, _) = propagate(&field, true, a, b, &y2_start, tol, |_, state| {
            let big = state.iter().any(|v| v.norm() > RENORM_THRESHOLD);
            if !big || failure.is_some() {
                return false;
            }
            basis.y2 = to_matrix(nm, nm, state);
            if let Err(e) = basis.renormalize() {
                failure = Some(e);
                return false;
            }
            state.copy_from_slice(basis.y2.as_slice());
            true
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        basis.y2 = y2;
    }
    let m = bc.ra() * &basis.y1;
    let m = &m + &(bc.rb() * &basis.y2);
    let ld = lu_logdet(&m)?;
    Ok(LogDet::new(ld.log_modulus + basis.log_scale, ld.phase))
}

/// One branch-tracked value of `log det R(x)` on the positive axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaySample {
    pub x: f64,
    pub log_det: LogDet,
}

/// Samples of `log det R(x)` with one continuous branch.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Ray {
    pub samples: Vec<RaySample>,
    /// Samples beyond the first integration failure were dropped.
    pub truncated: bool,
    /// Midpoints inserted to keep consecutive phases close.
    pub refinements: usize,
    /// Largest phase difference between neighbouring samples.
    pub max_phase_step: f64,
}

impl Ray {
    /// True when every neighbouring phase step is below `pi`.
    pub fn branch_certified(&self) -> bool {
        self.max_phase_step < PI
    }
}

/// Branch-continuous `log det R(x)` on ascending `xs`.
///
/// The branch is the principal one at the largest abscissa and is continued
/// towards smaller `x` by nearest-branch selection, refining the mesh
/// geometrically wherever neighbouring phases differ by more than `pi/2`.
pub fn log_det_r_ray(
    op: &EllipticOperator,
    bc: &BoundaryCondition,
    xs: &[f64],
    tol: f64,
) -> Result<Ray> {
    if xs.is_empty() {
        return Err(Error::InvalidArgument("empty ray sample list".into()));
    }
    if xs.iter().any(|&x| !(x > 0.0) || !x.is_finite()) || xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "ray abscissae must be positive and strictly increasing".into(),
        ));
    }
    let eval = |x: f64| log_det_r(op, bc, Complex64::new(x, 0.0), tol);
    let mut raw = Vec::with_capacity(xs.len());
    let mut truncated = false;
    for &x in xs {
        match eval(x) {
            Ok(v) => raw.push(RaySample { x, log_det: v }),
            Err(e @ (Error::StepUnderflow { .. } | Error::NonFinite(_) | Error::OverflowRisk { .. }))
                if !raw.is_empty() =>
            {
                let _ = e;
                truncated = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let mut out: Vec<RaySample> = Vec::with_capacity(raw.len());
    let mut refinements = 0;
    let mut top = *raw.last().expect("nonempty");
    out.push(top);
    for lo in raw.iter().rev().skip(1) {
        let mut inserted = Vec::new();
        let next = bridge(&eval, top, *lo, MAX_REFINE_DEPTH, &mut inserted)?;
        refinements += inserted.len();
        out.extend(inserted);
        out.push(next);
        top = next;
    }
    out.reverse();
    let max_phase_step = out
        .windows(2)
        .map(|w| (w[1].log_det.phase - w[0].log_det.phase).abs())
        .fold(0.0, f64::max);
    Ok(Ray { samples: out, truncated, refinements, max_phase_step })
}

/// Continues the branch from `hi` down to `lo`; inserted midpoints are pushed
/// in descending order of `x`.
fn bridge(
    eval: &dyn Fn(f64) -> Result<LogDet>,
    hi: RaySample,
    lo: RaySample,
    depth: usize,
    inserted: &mut Vec<RaySample>,
) -> Result<RaySample> {
    let cand = lo.log_det.nearest_branch(hi.log_det.phase);
    if (cand.phase - hi.log_det.phase).abs() <= PHASE_STEP_LIMIT || depth == 0 {
        return Ok(RaySample { x: lo.x, log_det: cand });
    }
    let mid_x = (lo.x * hi.x).sqrt();
    let mid_raw = RaySample { x: mid_x, log_det: eval(mid_x)? };
    let mid = bridge(eval, hi, mid_raw, depth - 1, inserted)?;
    inserted.push(mid);
    bridge(eval, mid, lo, depth - 1, inserted)
}

/// `phi(x) phi(y)^{-1}`, by the matrix exponential for constant coefficients.
fn segment_transfer(
    field: &CompanionField<'_>,
    generator: Option<&CMatrix>,
    x: f64,
    y: f64,
    tol: f64,
) -> Result<CMatrix> {
    if let Some(gen) = generator {
        return expm(&gen.scale(Complex64::new(x - y, 0.0)));
    }
    let id = CMatrix::identity(field.op.system_size());
    Ok(propagate(field, true, y, x, &id, tol, |_, _| false)?.0)
}

/// Resolvent data of `L + z` in multiple-shooting form: short propagators
/// on a uniform mesh and an LU factorization of the block system that
/// couples them with the boundary condition. Each mesh cell only grows by
/// `exp(s / CHECKPOINTS)`, so the kernel stays accurate far out on the ray.
pub struct Resolvent<'a> {
    op: &'a EllipticOperator,
    field: CompanionField<'a>,
    generator: Option<CMatrix>,
    tol: f64,
    step: f64,
    system: Lu,
}

impl<'a> Resolvent<'a> {
    pub fn new(
        op: &'a EllipticOperator,
        bc: &BoundaryCondition,
        z: Complex64,
        tol: f64,
    ) -> Result<Self> {
        bc.check_for(op)?;
        let field = CompanionField::new(op, z)?;
        let (a, b) = op.interval();
        let generator = if op.is_constant() { Some(companion_matrix(op, a, z)?) } else { None };
        let step = (b - a) / CHECKPOINTS as f64;
        let nm = op.system_size();
        let size = (CHECKPOINTS + 1) * nm;
        let mut big = CMatrix::zeros(size, size);
        let id = CMatrix::identity(nm);
        for i in 0..CHECKPOINTS {
            let x0 = a + step * i as f64;
            let x1 = if i + 1 == CHECKPOINTS { b } else { x0 + step };
            let e = segment_transfer(&field, generator.as_ref(), x1, x0, tol)?;
            big.set_block(i * nm, i * nm, &-&e);
            big.set_block(i * nm, (i + 1) * nm, &id);
        }
        big.set_block(CHECKPOINTS * nm, 0, bc.ra());
        big.set_block(CHECKPOINTS * nm, CHECKPOINTS * nm, bc.rb());
        let system = Lu::factor(&big)?;
        Ok(Self { op, field, generator, tol, step, system })
    }

    fn node(&self, i: usize) -> f64 {
        let (a, b) = self.op.interval();
        if i == CHECKPOINTS {
            b
        } else {
            a + self.step * i as f64
        }
    }

    fn cell(&self, x: f64) -> usize {
        let a = self.op.interval().0;
        (((x - a) / self.step).floor().max(0.0) as usize).min(CHECKPOINTS - 1)
    }

    /// `phi(x) phi(y)^{-1}`.
    pub fn transfer(&self, x: f64, y: f64) -> Result<CMatrix> {
        segment_transfer(&self.field, self.generator.as_ref(), x, y, self.tol)
    }

    /// Mesh values `g_i` of `x -> G(x, y)`, where `G` jumps by `-1` at `y`.
    fn mesh_values(&self, y: f64) -> Result<Vec<CMatrix>> {
        let nm = self.op.system_size();
        let k = self.cell(y);
        let mut rhs = CMatrix::zeros((CHECKPOINTS + 1) * nm, nm);
        rhs.set_block(k * nm, 0, &-&self.transfer(self.node(k + 1), y)?);
        let sol = self.system.solve(&rhs)?;
        Ok((0..=CHECKPOINTS).map(|i| sol.block(i * nm, 0, nm, nm)).collect())
    }

    /// Full `nm x nm` companion Green's matrix at `(x, y)`; for `x = y` the
    /// `y -> x+0` side.
    fn full(&self, x: f64, y: f64) -> Result<CMatrix> {
        let g = self.mesh_values(y)?;
        let i = self.cell(x);
        let mut full = &self.transfer(x, self.node(i))? * &g[i];
        if i == self.cell(y) && x > y {
            full = &full - &self.transfer(x, y)?;
        }
        Ok(full)
    }

    fn extract(&self, full: &CMatrix, y: f64) -> Result<CMatrix> {
        let (n, m) = (self.op.order(), self.op.dim());
        let corner = full.block(0, (n - 1) * m, m, m);
        let alpha_n = self.op.alpha(n, y);
        let inv = Lu::factor(&alpha_n)
            .map_err(|_| Error::SingularLeadingCoefficient { x: y })?
            .solve(&CMatrix::identity(m))?;
        Ok((&corner * &inv).scale(Complex64::new(-1.0, 0.0)))
    }

    /// Kernel `K(x, y)` of `(L + z)^{-1}`; on the diagonal the `y -> x+0`
    /// branch is used.
    pub fn kernel(&self, x: f64, y: f64) -> Result<CMatrix> {
        self.extract(&self.full(x, y)?, y)
    }

    /// `tr K(t, t+0)`.
    pub fn diagonal_trace(&self, t: f64) -> Result<Complex64> {
        Ok(self.kernel(t, t)?.trace())
    }

    /// `Tr (L + z)^{-1}` by adaptive quadrature of the kernel diagonal.
    pub fn trace(&self, quad_tol: f64) -> Result<Complex64> {
        let (a, b) = self.op.interval();
        let mut failure = None;
        let v = quad(
            |t| match self.diagonal_trace(t) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    Complex64::new(0.0, 0.0)
                }
            },
            a,
            b,
            quad_tol,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        v
    }
}

/// `K(x, y)` of `(L + z)^{-1}`.
pub fn resolvent_kernel(
    op: &EllipticOperator,
    bc: &BoundaryCondition,
    z: Complex64,
    x: f64,
    y: f64,
    tol: f64,
) -> Result<CMatrix> {
    Resolvent::new(op, bc, z, tol)?.kernel(x, y)
}

/// `Tr (L + z)^{-1}`; only defined for order at least two.
pub fn trace_resolvent(
    op: &EllipticOperator,
    bc: &BoundaryCondition,
    z: Complex64,
    tol: f64,
) -> Result<Complex64> {
    if op.order() < 2 {
        return Err(Error::OrderTooLow { order: op.order() });
    }
    Resolvent::new(op, bc, z, tol)?.trace((tol * 1e3).max(1e-10))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn laplacian(mu2: f64) -> EllipticOperator {
        EllipticOperator::scalar_constant(0.0, 1.0, &[c(mu2), c(0.0), c(1.0)]).unwrap()
    }

    #[test]
    fn fundamental_matrix_of_free_laplacian() {
        let mu = 1.7;
        let op = laplacian(0.0);
        let phi = fundamental_matrix(&op, c(mu * mu), 1e-12).unwrap().phi_b;
        let want = CMatrix::from_real_rows(&[
            &[mu.cosh(), mu.sinh() / mu],
            &[mu * mu.sinh(), mu.cosh()],
        ]);
        assert!(phi.max_abs_diff(&want) < 1e-10);
    }

    #[test]
    fn first_order_constant_solutions() {
        let op = EllipticOperator::scalar_constant(0.0, 1.0, &[c(0.0), c(1.0)]).unwrap();
        let phi = fundamental_matrix(&op, c(0.0), 1e-12).unwrap().phi_b;
        assert!((phi[(0, 0)] - 1.0).norm() < 1e-14);
    }

    #[test]
    fn characteristic_determinants() {
        let op = laplacian(1.0);
        let (s, ch) = (1f64.sinh(), 1f64.cosh());
        let cases = [
            (BoundaryCondition::dirichlet(1), s),
            (BoundaryCondition::periodic(2, 1), -2.0 * (ch - 1.0)),
            (BoundaryCondition::antiperiodic(2, 1), 2.0 * (ch + 1.0)),
        ];
        for (bc, want) in cases {
            let r = r_matrix(&op, &bc, c(0.0), 1e-12).unwrap();
            let d = crate::numcore::det(&r).unwrap();
            assert!((d - want).norm() < 1e-10, "{d} vs {want}");
            let ld = log_det_r(&op, &bc, c(0.0), 1e-12).unwrap();
            assert!((ld.value() - want).norm() < 1e-10);
        }
    }

    #[test]
    fn stable_log_det_far_out_on_the_ray() {
        let op = laplacian(1.0);
        let x: f64 = 1e5;
        let s = (1.0 + x).sqrt();
        let ld = log_det_r(&op, &BoundaryCondition::periodic(2, 1), c(x), 1e-12).unwrap();
        // -2 (cosh s - 1) = -e^s (1 - e^{-s})^2
        let want = s + 2.0 * (-(-s).exp()).ln_1p();
        assert!((ld.log_modulus - want).abs() < 1e-10 * s);
        assert!((ld.phase.abs() - PI).abs() < 1e-12);
        let ld = log_det_r(&op, &BoundaryCondition::dirichlet(1), c(x), 1e-12).unwrap();
        let want = s - LN_2 - s.ln() + (-(-2.0 * s).exp()).ln_1p();
        assert!((ld.log_modulus - want).abs() < 1e-10 * s);
    }

    #[test]
    fn variable_coefficient_path_matches_constant_path() {
        let op = laplacian(1.0);
        let var = EllipticOperator::new(
            0.0,
            1.0,
            vec![
                crate::operator::Coefficient::scalar_function(|_| c(1.0)),
                crate::operator::Coefficient::scalar(c(0.0)),
                crate::operator::Coefficient::scalar(c(1.0)),
            ],
        )
        .unwrap();
        let bc = BoundaryCondition::periodic(2, 1);
        for x in [0.0, 30.0, 900.0] {
            let a = log_det_r(&op, &bc, c(x), 1e-12).unwrap();
            let b = log_det_r(&var, &bc, c(x), 1e-12).unwrap();
            assert!((a.as_complex() - b.as_complex()).norm() < 1e-9, "x = {x}");
        }
    }

    #[test]
    fn ray_branch_is_stable_under_refinement() {
        let op = laplacian(1.0);
        let bc = BoundaryCondition::periodic(2, 1);
        let xs: Vec<f64> = (0..9).map(|j| 10.0 * 2f64.powi(j)).collect();
        let fine: Vec<f64> = (0..17).map(|j| 10.0 * 2f64.powf(j as f64 / 2.0)).collect();
        let coarse = log_det_r_ray(&op, &bc, &xs, 1e-12).unwrap();
        let dense = log_det_r_ray(&op, &bc, &fine, 1e-12).unwrap();
        assert!(coarse.branch_certified());
        for s in &coarse.samples {
            let t = dense.samples.iter().find(|t| (t.x - s.x).abs() < 1e-9 * s.x).unwrap();
            assert_eq!(s.log_det.phase, t.log_det.phase);
        }
        let single = log_det_r_ray(&op, &bc, &[5.0], 1e-12).unwrap();
        let direct = r_matrix(&op, &bc, c(5.0), 1e-12).unwrap();
        let ld = lu_logdet(&direct).unwrap();
        assert!((single.samples[0].log_det.as_complex() - ld.as_complex()).norm() < 1e-10);
    }

    #[test]
    fn dirichlet_kernel_matches_green_function() {
        let op = laplacian(1.0);
        let bc = BoundaryCondition::dirichlet(1);
        let res = Resolvent::new(&op, &bc, c(0.0), 1e-12).unwrap();
        let s1 = 1f64.sinh();
        for i in 0..5 {
            for j in 0..5 {
                let x = 0.1 + 0.2 * i as f64;
                let y = 0.05 + 0.22 * j as f64;
                let (lo, hi) = if x < y { (x, y) } else { (y, x) };
                let want = lo.sinh() * (1.0 - hi).sinh() / s1;
                let k = res.kernel(x, y).unwrap()[(0, 0)];
                assert!((k - want).norm() < 1e-9, "K({x},{y}) = {k}, want {want}");
                let kt = res.kernel(y, x).unwrap()[(0, 0)];
                assert!((k - kt).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn resolvent_traces_match_series() {
        let op = laplacian(1.0);
        let t = trace_resolvent(&op, &BoundaryCondition::dirichlet(1), c(0.0), 1e-12).unwrap();
        let want = 0.5 * (1f64.cosh() / 1f64.sinh()) - 0.5;
        assert!((t.re - want).abs() < 1e-8, "{t} vs {want}");
        let t = trace_resolvent(&op, &BoundaryCondition::periodic(2, 1), c(0.0), 1e-12).unwrap();
        let want = 0.5 * (0.5f64.cosh() / 0.5f64.sinh());
        assert!((t.re - want).abs() < 1e-8, "{t} vs {want}");
        let first = EllipticOperator::scalar_constant(0.0, 1.0, &[c(0.0), c(1.0)]).unwrap();
        assert!(matches!(
            trace_resolvent(&first, &BoundaryCondition::twisted(1.0), c(0.0), 1e-10),
            Err(Error::OrderTooLow { order: 1 })
        ));
    }
}
