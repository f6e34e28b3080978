//! Differential operators `l = sum_k a_k(x) D^k` with `D = -i d/dx`, their
//! companion systems, boundary matrices and admissibility checks.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numcore::{eigenvalues, lu_logdet, principal_angle, CMatrix, Lu};

/// Default number of uniform grid points for coefficient checks.
pub const CHECK_GRID: usize = 257;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `(-i)^k`.
pub fn minus_i_pow(k: usize) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, -1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 1.0),
    }
}

type CoefficientClosure = dyn Fn(f64) -> CMatrix + Send + Sync;

/// An `m x m` matrix-valued coefficient function.
#[derive(Clone)]
pub enum Coefficient {
    Constant(CMatrix),
    Scalar(Arc<dyn Fn(f64) -> Complex64 + Send + Sync>),
    Function { dim: usize, f: Arc<CoefficientClosure> },
}

impl Coefficient {
    pub fn constant(value: CMatrix) -> Self {
        Coefficient::Constant(value)
    }

    pub fn scalar(value: Complex64) -> Self {
        Coefficient::Constant(CMatrix::scalar(value))
    }

    pub fn function(dim: usize, f: impl Fn(f64) -> CMatrix + Send + Sync + 'static) -> Self {
        Coefficient::Function { dim, f: Arc::new(f) }
    }

    pub fn scalar_function(f: impl Fn(f64) -> Complex64 + Send + Sync + 'static) -> Self {
        Coefficient::Scalar(Arc::new(f))
    }

    pub fn dim(&self) -> usize {
        match self {
            Coefficient::Constant(c) => c.rows(),
            Coefficient::Scalar(_) => 1,
            Coefficient::Function { dim, .. } => *dim,
        }
    }

    pub fn eval(&self, x: f64) -> CMatrix {
        match self {
            Coefficient::Constant(c) => c.clone(),
            Coefficient::Scalar(f) => CMatrix::scalar(f(x)),
            Coefficient::Function { f, .. } => f(x),
        }
    }

    /// Entry `(0, 0)`; avoids allocating for scalar coefficients.
    pub fn eval_scalar(&self, x: f64) -> Complex64 {
        match self {
            Coefficient::Constant(c) => c[(0, 0)],
            Coefficient::Scalar(f) => f(x),
            Coefficient::Function { f, .. } => f(x)[(0, 0)],
        }
    }

    pub fn constant_value(&self) -> Option<&CMatrix> {
        match self {
            Coefficient::Constant(c) => Some(c),
            _ => None,
        }
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        match self {
            Coefficient::Constant(c) => Coefficient::Constant(c.scale(s)),
            Coefficient::Scalar(f) => {
                let f = Arc::clone(f);
                Coefficient::Scalar(Arc::new(move |x| f(x) * s))
            }
            Coefficient::Function { dim, f } => {
                let f = Arc::clone(f);
                Coefficient::Function { dim: *dim, f: Arc::new(move |x| f(x).scale(s)) }
            }
        }
    }

    /// `self + z * I`.
    pub fn shifted(&self, z: Complex64) -> Self {
        let dim = self.dim();
        let shift = CMatrix::identity(dim).scale(z);
        match self {
            Coefficient::Constant(c) => Coefficient::Constant(c + &shift),
            Coefficient::Scalar(f) => {
                let f = Arc::clone(f);
                Coefficient::Scalar(Arc::new(move |x| f(x) + z))
            }
            Coefficient::Function { f, .. } => {
                let f = Arc::clone(f);
                Coefficient::Function { dim, f: Arc::new(move |x| &f(x) + &shift) }
            }
        }
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "Constant({c:?})"),
            Coefficient::Scalar(_) => write!(f, "Scalar(fn)"),
            Coefficient::Function { dim, .. } => write!(f, "Function({dim}x{dim})"),
        }
    }
}

/// `l = sum_{k=0}^n a_k(x) D^k` on `[a, b]` acting on `C^m`-valued functions.
#[derive(Clone, Debug)]
pub struct EllipticOperator {
    order: usize,
    dim: usize,
    a: f64,
    b: f64,
    coeffs: Vec<Coefficient>,
}

impl EllipticOperator {
    /// `coeffs[k]` is `a_k`; the order is `coeffs.len() - 1`.
    pub fn new(a: f64, b: f64, coeffs: Vec<Coefficient>) -> Result<Self> {
        if coeffs.len() < 2 {
            return Err(Error::InvalidArgument("operator order must be at least 1".into()));
        }
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::InvalidArgument(format!("invalid interval [{a}, {b}]")));
        }
        let dim = coeffs[0].dim();
        if dim == 0 {
            return Err(Error::Dimension("system dimension must be positive".into()));
        }
        for (k, c) in coeffs.iter().enumerate() {
            if c.dim() != dim {
                return Err(Error::Dimension(format!(
                    "coefficient a_{k} is {}x{}, expected {dim}x{dim}",
                    c.dim(),
                    c.dim()
                )));
            }
            for x in [a, 0.5 * (a + b), b] {
                let v = c.eval(x);
                if v.rows() != dim || v.cols() != dim {
                    return Err(Error::Dimension(format!(
                        "coefficient a_{k} evaluates to {}x{} at x = {x}",
                        v.rows(),
                        v.cols()
                    )));
                }
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("coefficient a_{k} at x = {x}")));
                }
            }
        }
        Ok(Self { order: coeffs.len() - 1, dim, a, b, coeffs })
    }

    /// Scalar operator with constant coefficients `a_0, ..., a_n`.
    pub fn scalar_constant(a: f64, b: f64, coeffs: &[Complex64]) -> Result<Self> {
        Self::new(a, b, coeffs.iter().map(|&c| Coefficient::scalar(c)).collect())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Size `n * m` of the companion system.
    pub fn system_size(&self) -> usize {
        self.order * self.dim
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn coefficient(&self, k: usize) -> &Coefficient {
        &self.coeffs[k]
    }

    pub fn coefficients(&self) -> &[Coefficient] {
        &self.coeffs
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.iter().all(|c| c.constant_value().is_some())
    }

    /// `alpha_k(x) = (-i)^k a_k(x)`, the coefficient of `u^{(k)}`.
    pub fn alpha(&self, k: usize, x: f64) -> CMatrix {
        self.coeffs[k].eval(x).scale(minus_i_pow(k))
    }

    /// `l + z`.
    pub fn shifted(&self, z: Complex64) -> Self {
        let mut out = self.clone();
        out.coeffs[0] = out.coeffs[0].shifted(z);
        out
    }

    /// `s * l`.
    pub fn scaled(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        out.coeffs = out.coeffs.iter().map(|c| c.scaled(s)).collect();
        out
    }

    /// Uniform grid of `points` abscissae on `[a, b]`.
    pub fn grid(&self, points: usize) -> Vec<f64> {
        let points = points.max(2);
        (0..points)
            .map(|j| self.a + (self.b - self.a) * j as f64 / (points - 1) as f64)
            .collect()
    }
}

/// Boundary operator `B(f) = R_a F(a) + R_b F(b)` with `F = (f, f', ..., f^{(n-1)})`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryCondition {
    ra: CMatrix,
    rb: CMatrix,
}

impl BoundaryCondition {
    pub fn new(ra: CMatrix, rb: CMatrix) -> Result<Self> {
        if !ra.is_square() || !rb.is_square() || ra.rows() != rb.rows() {
            return Err(Error::Dimension(format!(
                "boundary matrices must be square of equal size, got {}x{} and {}x{}",
                ra.rows(),
                ra.cols(),
                rb.rows(),
                rb.cols()
            )));
        }
        Ok(Self { ra, rb })
    }

    pub fn ra(&self) -> &CMatrix {
        &self.ra
    }

    pub fn rb(&self) -> &CMatrix {
        &self.rb
    }

    pub fn size(&self) -> usize {
        self.ra.rows()
    }

    /// Checks that the matrices are `nm x nm` for `op`.
    pub fn check_for(&self, op: &EllipticOperator) -> Result<()> {
        if self.size() != op.system_size() {
            return Err(Error::Dimension(format!(
                "boundary matrices are {0}x{0}, operator needs {1}x{1}",
                self.size(),
                op.system_size()
            )));
        }
        Ok(())
    }

    /// `f(a) = f(b) = 0` for a second order system of dimension `m`.
    pub fn dirichlet(m: usize) -> Self {
        let id = CMatrix::identity(m);
        let mut ra = CMatrix::zeros(2 * m, 2 * m);
        let mut rb = CMatrix::zeros(2 * m, 2 * m);
        ra.set_block(0, 0, &id);
        rb.set_block(m, 0, &id);
        Self { ra, rb }
    }

    /// `F(b) = F(a)`.
    pub fn periodic(order: usize, m: usize) -> Self {
        let id = CMatrix::identity(order * m);
        Self { ra: -&id, rb: id }
    }

    /// `F(b) = -F(a)`.
    pub fn antiperiodic(order: usize, m: usize) -> Self {
        let id = CMatrix::identity(order * m);
        Self { ra: id.clone(), rb: id }
    }

    /// First order scalar twist `f(b) = e^{i beta} f(a)`.
    pub fn twisted(beta: f64) -> Self {
        Self {
            ra: CMatrix::scalar(-Complex64::from_polar(1.0, beta)),
            rb: CMatrix::scalar(Complex64::new(1.0, 0.0)),
        }
    }

    /// `R_a = [[A, B], [C, D]]`, `R_b = 1`.
    pub fn from_blocks(a: &CMatrix, b: &CMatrix, c: &CMatrix, d: &CMatrix) -> Result<Self> {
        let m = a.rows();
        for (name, blk) in [("A", a), ("B", b), ("C", c), ("D", d)] {
            if blk.rows() != m || blk.cols() != m {
                return Err(Error::Dimension(format!("block {name} must be {m}x{m}")));
            }
        }
        let mut ra = CMatrix::zeros(2 * m, 2 * m);
        ra.set_block(0, 0, a);
        ra.set_block(0, m, b);
        ra.set_block(m, 0, c);
        ra.set_block(m, m, d);
        Ok(Self { ra, rb: CMatrix::identity(2 * m) })
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Self { ra: self.ra.scale(s), rb: self.rb.scale(s) }
    }
}

/// A ray direction `theta` and the half-width of the sector checked around it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrincipalAngle {
    theta: f64,
    epsilon: f64,
}

impl PrincipalAngle {
    pub fn new(theta: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < PI) || !theta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sector half-width must lie in (0, pi), got {epsilon}"
            )));
        }
        Ok(Self { theta, epsilon })
    }

    /// The negative real axis with a quarter-turn sector.
    pub fn pi() -> Self {
        Self { theta: PI, epsilon: PI / 4.0 }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

fn inverse_leading(op: &EllipticOperator, x: f64) -> Result<CMatrix> {
    let alpha_n = op.alpha(op.order(), x);
    if op.dim() == 1 {
        let v = alpha_n[(0, 0)];
        if v.norm() == 0.0 {
            return Err(Error::SingularLeadingCoefficient { x });
        }
        return Ok(CMatrix::scalar(1.0 / v));
    }
    let lu = Lu::factor(&alpha_n).map_err(|_| Error::SingularLeadingCoefficient { x })?;
    lu.solve(&CMatrix::identity(op.dim()))
}

/// Bottom blocks `beta_k = -alpha_n^{-1} alpha_k` (`k < n`) of the companion
/// matrix of `l + z`.
pub fn companion_row(op: &EllipticOperator, x: f64, z: Complex64) -> Result<Vec<CMatrix>> {
    let inv = inverse_leading(op, x)?;
    let minus = Complex64::new(-1.0, 0.0);
    let mut betas = Vec::with_capacity(op.order());
    for k in 0..op.order() {
        let mut alpha = op.alpha(k, x);
        if k == 0 {
            for i in 0..op.dim() {
                alpha[(i, i)] += z;
            }
        }
        betas.push((&inv * &alpha).scale(minus));
    }
    Ok(betas)
}

/// The `nm x nm` companion matrix `A(x)` of `l + z`.
pub fn companion_matrix(op: &EllipticOperator, x: f64, z: Complex64) -> Result<CMatrix> {
    let (n, m) = (op.order(), op.dim());
    let betas = companion_row(op, x, z)?;
    let mut a = CMatrix::zeros(n * m, n * m);
    for blk in 0..n - 1 {
        for i in 0..m {
            a[(blk * m + i, (blk + 1) * m + i)] = Complex64::new(1.0, 0.0);
        }
    }
    for (k, beta) in betas.iter().enumerate() {
        a.set_block((n - 1) * m, k * m, beta);
    }
    Ok(a)
}

/// True iff `|det a_n|` stays away from zero on a uniform grid.
pub fn check_ellipticity(op: &EllipticOperator, grid_points: usize) -> bool {
    let n = op.order();
    op.grid(grid_points).into_iter().all(|x| {
        let an = op.coefficient(n).eval(x);
        let scale = an.max_abs().max(f64::MIN_POSITIVE).powi(op.dim() as i32);
        match lu_logdet(&an) {
            Ok(ld) => ld.log_modulus > (1e-12 * scale).ln(),
            Err(_) => false,
        }
    })
}

/// Directions `arg(sigma)` of the principal symbol `a_n(x) xi^n` over real `xi != 0`.
pub(crate) fn symbol_directions(op: &EllipticOperator, x: f64) -> Result<Vec<Complex64>> {
    let nu = eigenvalues(&op.coefficient(op.order()).eval(x))?;
    let mut dirs = nu.clone();
    if op.order() % 2 == 1 {
        dirs.extend(nu.iter().map(|v| -v));
    }
    Ok(dirs)
}

/// Sector surrogate for a principal angle: no eigenvalue of the principal
/// symbol points into the sector of half-width `epsilon` around `theta`.
pub fn check_sector(op: &EllipticOperator, angle: PrincipalAngle, grid_points: usize) -> bool {
    op.grid(grid_points).into_iter().all(|x| match symbol_directions(op, x) {
        Ok(dirs) => dirs.iter().all(|d| {
            d.norm() > 0.0 && principal_angle(d.arg() - angle.theta()).abs() > angle.epsilon()
        }),
        Err(_) => false,
    })
}

/// `L~ = e^{i(pi - theta)} L` together with the scale factor applied.
///
/// Boundary matrices are unaffected. Determinants relate through
/// `det_theta L = exp(i (theta - pi) zeta(0)) det_pi L~`, see [`angle_phase`].
pub fn rotate_to_pi(op: &EllipticOperator, theta: f64) -> (EllipticOperator, Complex64) {
    if theta == PI {
        return (op.clone(), Complex64::new(1.0, 0.0));
    }
    let factor = Complex64::from_polar(1.0, PI - theta);
    (op.scaled(factor), factor)
}

/// `exp(i (theta - pi) zeta0)`.
pub fn angle_phase(theta: f64, zeta0: Complex64) -> Complex64 {
    (Complex64::new(0.0, theta - PI) * zeta0).exp()
}

/// Exponential rates of the local solutions of `l + x` per unit `x^{1/n}`:
/// `Re rho` for `rho^n = -x alpha_n^{-1}`, over the whole interval.
/// Returns `(smallest nonzero |rate|, largest |rate|)`.
pub(crate) fn growth_rates(op: &EllipticOperator, grid_points: usize) -> Result<(f64, f64)> {
    let n = op.order();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for x in op.grid(grid_points) {
        for nu in eigenvalues(&op.alpha(n, x))? {
            if nu.norm() == 0.0 {
                return Err(Error::SingularLeadingCoefficient { x });
            }
            let base = (-1.0 / nu).powf(1.0 / n as f64);
            for j in 0..n {
                let rho = base * Complex64::from_polar(1.0, 2.0 * PI * j as f64 / n as f64);
                let r = rho.re.abs();
                hi = hi.max(r);
                if r > 1e-12 {
                    lo = lo.min(r);
                }
            }
        }
    }
    if !lo.is_finite() {
        return Err(Error::NotAdmissible(
            "all local solutions oscillate along the positive real axis".into(),
        ));
    }
    Ok((lo, hi))
}

/// Crude size of the low spectrum: `max ||alpha_n^{-1} alpha_k||` over `k < n`.
pub(crate) fn low_spectrum_scale(op: &EllipticOperator, grid_points: usize) -> Result<f64> {
    let mut scale = 0.0f64;
    for x in op.grid(grid_points) {
        for beta in companion_row(op, x, ZERO)? {
            scale = scale.max(beta.max_row_norm());
        }
    }
    Ok(scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn companion_of_shifted_laplacian() {
        let mu2 = 2.5;
        let op = EllipticOperator::scalar_constant(0.0, 1.0, &[c(mu2), c(0.0), c(1.0)]).unwrap();
        let a = companion_matrix(&op, 0.3, ZERO).unwrap();
        assert_eq!(a, CMatrix::from_real_rows(&[&[0.0, 1.0], &[mu2, 0.0]]));
    }

    #[test]
    fn first_order_companion_is_zero() {
        let op = EllipticOperator::scalar_constant(0.0, 1.0, &[c(0.0), c(1.0)]).unwrap();
        let a = companion_matrix(&op, 0.0, ZERO).unwrap();
        assert_eq!(a, CMatrix::scalar(ZERO));
    }

    #[test]
    fn shift_enters_bottom_left_block_only() {
        let m = 2;
        let a2 = CMatrix::from_real_rows(&[&[2.0, 0.5], &[0.0, 1.0]]);
        let a1 = CMatrix::from_real_rows(&[&[0.1, 0.0], &[0.3, -0.2]]);
        let a0 = CMatrix::from_real_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
        let op = EllipticOperator::new(
            0.0,
            1.0,
            vec![Coefficient::constant(a0), Coefficient::constant(a1), Coefficient::constant(a2.clone())],
        )
        .unwrap();
        let z = Complex64::new(0.7, -1.1);
        let diff = &companion_matrix(&op, 0.5, z).unwrap() - &companion_matrix(&op, 0.5, ZERO).unwrap();
        let alpha2_inv = crate::numcore::inverse(&a2.scale(c(-1.0))).unwrap();
        let want = alpha2_inv.scale(-z);
        for i in 0..2 * m {
            for j in 0..2 * m {
                let expected = if i >= m && j < m { want[(i - m, j)] } else { ZERO };
                assert!((diff[(i, j)] - expected).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn ellipticity_examples() {
        let id = EllipticOperator::scalar_constant(0.0, 1.0, &[c(0.0), c(0.0), c(1.0)]).unwrap();
        assert!(check_ellipticity(&id, CHECK_GRID));
        let vanishing = EllipticOperator::new(
            0.0,
            1.0,
            vec![
                Coefficient::scalar(c(0.0)),
                Coefficient::scalar(c(0.0)),
                Coefficient::scalar_function(|x| c(x - 0.5)),
            ],
        )
        .unwrap();
        assert!(!check_ellipticity(&vanishing, CHECK_GRID));
        let diag = EllipticOperator::new(
            0.0,
            1.0,
            vec![
                Coefficient::constant(CMatrix::zeros(2, 2)),
                Coefficient::constant(CMatrix::zeros(2, 2)),
                Coefficient::function(2, |x| CMatrix::diag(&[c(1.0), c(1.0 + x * x)])),
            ],
        )
        .unwrap();
        assert!(check_ellipticity(&diag, CHECK_GRID));
    }

    #[test]
    fn sector_examples() {
        let pos = EllipticOperator::scalar_constant(0.0, 1.0, &[c(0.0), c(0.0), c(1.0)]).unwrap();
        assert!(check_sector(&pos, PrincipalAngle::pi(), CHECK_GRID));
        let neg = EllipticOperator::scalar_constant(0.0, 1.0, &[c(0.0), c(0.0), c(-1.0)]).unwrap();
        assert!(!check_sector(&neg, PrincipalAngle::pi(), CHECK_GRID));
        // d/dx: symbol directions +-i stay a quarter turn away from the negative axis.
        let ddx = EllipticOperator::scalar_constant(0.0, 1.0, &[c(0.0), Complex64::i()]).unwrap();
        assert!(check_sector(&ddx, PrincipalAngle::pi(), CHECK_GRID));
        // -i d/dx has real symbol of both signs.
        let dirac = EllipticOperator::scalar_constant(0.0, 1.0, &[c(0.0), c(1.0)]).unwrap();
        assert!(!check_sector(&dirac, PrincipalAngle::pi(), CHECK_GRID));
    }

    #[test]
    fn rotation_scales_coefficients() {
        let op = EllipticOperator::scalar_constant(0.0, 1.0, &[c(2.0), c(1.0)]).unwrap();
        let (same, f) = rotate_to_pi(&op, PI);
        assert_eq!(f, c(1.0));
        assert_eq!(same.coefficient(1).eval(0.0), op.coefficient(1).eval(0.0));
        let (rot, f) = rotate_to_pi(&op, PI / 2.0);
        assert!((f - Complex64::i()).norm() < 1e-15);
        assert!((rot.coefficient(0).eval(0.0)[(0, 0)] - Complex64::new(0.0, 2.0)).norm() < 1e-15);
        // phases compose additively
        let z0 = c(0.5);
        let p = angle_phase(PI / 2.0, z0) * angle_phase(3.0 * PI / 2.0, z0);
        assert!((p - c(1.0)).norm() < 1e-14);
    }

    #[test]
    fn boundary_shapes() {
        let op = EllipticOperator::scalar_constant(0.0, 1.0, &[c(1.0), c(0.0), c(1.0)]).unwrap();
        assert!(BoundaryCondition::periodic(2, 1).check_for(&op).is_ok());
        assert!(BoundaryCondition::twisted(0.3).check_for(&op).is_err());
        let d = BoundaryCondition::dirichlet(1);
        assert_eq!(d.ra(), &CMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]));
        assert_eq!(d.rb(), &CMatrix::from_real_rows(&[&[0.0, 0.0], &[1.0, 0.0]]));
    }

    #[test]
    fn growth_rates_of_laplacian_and_first_order() {
        let op = EllipticOperator::scalar_constant(0.0, 1.0, &[c(1.0), c(0.0), c(1.0)]).unwrap();
        let (lo, hi) = growth_rates(&op, 5).unwrap();
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        let ddx = EllipticOperator::scalar_constant(0.0, 1.0, &[c(0.0), Complex64::i()]).unwrap();
        let (lo, _) = growth_rates(&ddx, 5).unwrap();
        assert!((lo - 1.0).abs() < 1e-12);
    }
}
