use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::matrix::CMatrix;
use crate::error::{Error, Result};

/// Pivots smaller than this multiple of the largest row norm count as zero.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-13;

/// Logarithm of a determinant, kept as modulus and (unreduced) phase so the
/// value survives magnitudes far outside the `f64` range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogDet {
    pub log_modulus: f64,
    pub phase: f64,
}

impl LogDet {
    pub fn new(log_modulus: f64, phase: f64) -> Self {
        Self { log_modulus, phase }
    }

    pub fn from_complex_log(z: Complex64) -> Self {
        Self::new(z.re, z.im)
    }

    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.log_modulus, self.phase)
    }

    /// The determinant itself; overflows to infinity for huge moduli.
    pub fn value(&self) -> Complex64 {
        self.as_complex().exp()
    }

    /// Same determinant with the phase moved onto the branch closest to `reference`.
    pub fn nearest_branch(&self, reference: f64) -> Self {
        let k = ((reference - self.phase) / (2.0 * PI)).round();
        Self::new(self.log_modulus, self.phase + 2.0 * PI * k)
    }
}

impl std::ops::Add for LogDet {
    type Output = LogDet;
    fn add(self, rhs: LogDet) -> LogDet {
        LogDet::new(self.log_modulus + rhs.log_modulus, self.phase + rhs.phase)
    }
}

/// Reduces an angle to (-pi, pi].
pub fn principal_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Partially pivoted LU factorization `P A = L U`, packed in one matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    packed: CMatrix,
    perm: Vec<usize>,
    swaps: usize,
}

impl Lu {
    pub fn factor(m: &CMatrix) -> Result<Self> {
        Self::factor_with_threshold(m, SINGULAR_PIVOT_RATIO)
    }

    pub fn factor_with_threshold(m: &CMatrix, ratio: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "LU needs a square matrix, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        let n = m.rows();
        let threshold = ratio * m.max_row_norm();
        let mut a = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut swaps = 0;
        for k in 0..n {
            let (p, pmag) = (k..n)
                .map(|i| (i, a[(i, k)].norm()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmag <= threshold || pmag == 0.0 {
                return Err(Error::SingularMatrix { pivot: pmag, threshold });
            }
            if p != k {
                for j in 0..n {
                    let tmp = a[(k, j)];
                    a[(k, j)] = a[(p, j)];
                    a[(p, j)] = tmp;
                }
                perm.swap(k, p);
                swaps += 1;
            }
            let pivot = a[(k, k)];
            for i in k + 1..n {
                let factor = a[(i, k)] / pivot;
                a[(i, k)] = factor;
                if factor.re == 0.0 && factor.im == 0.0 {
                    continue;
                }
                for j in k + 1..n {
                    let u = a[(k, j)];
                    a[(i, j)] -= factor * u;
                }
            }
        }
        Ok(Self { packed: a, perm, swaps })
    }

    pub fn dim(&self) -> usize {
        self.packed.rows()
    }

    pub fn log_det(&self) -> LogDet {
        let n = self.dim();
        let mut log_mod = 0.0;
        let mut phase = if self.swaps % 2 == 1 { PI } else { 0.0 };
        for i in 0..n {
            let u = self.packed[(i, i)];
            log_mod += u.norm().ln();
            phase += u.arg();
        }
        LogDet::new(log_mod, principal_angle(phase))
    }

    pub fn solve(&self, b: &CMatrix) -> Result<CMatrix> {
        let n = self.dim();
        if b.rows() != n {
            return Err(Error::Dimension(format!(
                "right-hand side has {} rows, system has {n}",
                b.rows()
            )));
        }
        let cols = b.cols();
        let mut x = CMatrix::from_fn(n, cols, |i, j| b[(self.perm[i], j)]);
        for j in 0..cols {
            for i in 0..n {
                let mut s = x[(i, j)];
                for k in 0..i {
                    s -= self.packed[(i, k)] * x[(k, j)];
                }
                x[(i, j)] = s;
            }
            for i in (0..n).rev() {
                let mut s = x[(i, j)];
                for k in i + 1..n {
                    s -= self.packed[(i, k)] * x[(k, j)];
                }
                x[(i, j)] = s / self.packed[(i, i)];
            }
        }
        Ok(x)
    }
}

/// Log-determinant through pivoted LU; the phase lies in (-pi, pi].
pub fn lu_logdet(m: &CMatrix) -> Result<LogDet> {
    Ok(Lu::factor(m)?.log_det())
}

/// Solves `M X = B`.
pub fn solve(m: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    Lu::factor(m)?.solve(b)
}

pub fn inverse(m: &CMatrix) -> Result<CMatrix> {
    solve(m, &CMatrix::identity(m.rows()))
}

/// Plain determinant (may overflow for huge entries).
pub fn det(m: &CMatrix) -> Result<Complex64> {
    match lu_logdet(m) {
        Ok(ld) => Ok(ld.value()),
        Err(Error::SingularMatrix { .. }) => Ok(Complex64::new(0.0, 0.0)),
        Err(e) => Err(e),
    }
}

/// Thin QR by modified Gram-Schmidt with one reorthogonalization pass.
/// Returns `(Q, diag(R))`; the diagonal of R is real and positive.
pub fn thin_qr(m: &CMatrix) -> Result<(CMatrix, Vec<f64>, CMatrix)> {
    let (rows, cols) = (m.rows(), m.cols());
    let mut q = m.clone();
    let mut r = CMatrix::zeros(cols, cols);
    for j in 0..cols {
        for _pass in 0..2 {
            for k in 0..j {
                let mut dot = Complex64::new(0.0, 0.0);
                for i in 0..rows {
                    dot += q[(i, k)].conj() * q[(i, j)];
                }
                r[(k, j)] += dot;
                for i in 0..rows {
                    let qk = q[(i, k)];
                    q[(i, j)] -= dot * qk;
                }
            }
        }
        let nrm = (0..rows).map(|i| q[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(Error::SingularMatrix { pivot: nrm, threshold: 0.0 });
        }
        r[(j, j)] = Complex64::new(nrm, 0.0);
        for i in 0..rows {
            q[(i, j)] /= nrm;
        }
    }
    let diag = (0..cols).map(|j| r[(j, j)].re).collect();
    Ok((q, diag, r))
}

/// Eigenvalues of a small square complex matrix (complex Schur form).
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<Complex64>> {
    if !m.is_square() {
        return Err(Error::Dimension("eigenvalues need a square matrix".into()));
    }
    let n = m.rows();
    if n == 1 {
        return Ok(vec![m[(0, 0)]]);
    }
    let dm = nalgebra::DMatrix::from_fn(n, n, |i, j| m[(i, j)]);
    let schur = nalgebra::Schur::new(dm);
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

/// Matrix exponential by scaling and squaring of a Taylor polynomial.
pub fn expm(m: &CMatrix) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(Error::Dimension("expm needs a square matrix".into()));
    }
    let n = m.rows();
    let norm = m.max_row_norm();
    if !norm.is_finite() {
        return Err(Error::NonFinite("expm argument".into()));
    }
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = m.scale(Complex64::new(0.5f64.powi(squarings), 0.0));
    let mut result = CMatrix::identity(n);
    let mut term = CMatrix::identity(n);
    for k in 1..=24 {
        term = (&term * &scaled).scale(Complex64::new(1.0 / k as f64, 0.0));
        result = &result + &term;
        if term.max_abs() <= 1e-18 * result.max_abs() {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        let mut m = CMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        for i in 0..n {
            m[(i, i)] += Complex64::new(n as f64, 0.0);
        }
        m
    }

    #[test]
    fn logdet_examples() {
        let id = CMatrix::identity(2);
        let ld = lu_logdet(&id).unwrap();
        assert_eq!((ld.log_modulus, ld.phase), (0.0, 0.0));

        let d = CMatrix::from_real_rows(&[&[2.0, 0.0], &[0.0, 3.0]]);
        let ld = lu_logdet(&d).unwrap();
        assert!((ld.log_modulus - 6f64.ln()).abs() < 1e-15);
        assert!(ld.phase.abs() < 1e-15);

        let swap = CMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let ld = lu_logdet(&swap).unwrap();
        assert!(ld.log_modulus.abs() < 1e-15);
        assert!((ld.phase - PI).abs() < 1e-15);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let m = CMatrix::from_real_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(lu_logdet(&m), Err(Error::SingularMatrix { .. })));
        assert_eq!(det(&m).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn solve_examples() {
        let b = CMatrix::from_real_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(solve(&CMatrix::identity(2), &b).unwrap(), b);
        let x = solve(
            &CMatrix::from_real_rows(&[&[2.0, 0.0], &[0.0, 4.0]]),
            &CMatrix::identity(2),
        )
        .unwrap();
        assert!(x.max_abs_diff(&CMatrix::from_real_rows(&[&[0.5, 0.0], &[0.0, 0.25]])) < 1e-16);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=8 {
            let m = random_matrix(&mut rng, n);
            let x = solve(&m, &m).unwrap();
            assert!(x.max_abs_diff(&CMatrix::identity(n)) < 1e-10);
        }
    }

    #[test]
    fn logdet_is_multiplicative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=8 {
            let a = random_matrix(&mut rng, n);
            let b = random_matrix(&mut rng, n);
            let lab = lu_logdet(&(&a * &b)).unwrap();
            let la = lu_logdet(&a).unwrap();
            let lb = lu_logdet(&b).unwrap();
            assert!((lab.log_modulus - la.log_modulus - lb.log_modulus).abs() < 1e-10);
            let dphase = principal_angle(lab.phase - la.phase - lb.phase);
            assert!(dphase.abs() < 1e-10);
        }
    }

    #[test]
    fn qr_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = CMatrix::from_fn(6, 3, |_, _| Complex64::new(rng.gen(), rng.gen()));
        let (q, diag, r) = thin_qr(&m).unwrap();
        assert!((&q * &r).max_abs_diff(&m) < 1e-13);
        assert!((&q.adjoint() * &q).max_abs_diff(&CMatrix::identity(3)) < 1e-13);
        assert!(diag.iter().all(|d| *d > 0.0));
    }

    #[test]
    fn expm_of_swap_generator() {
        let m = CMatrix::from_real_rows(&[&[0.0, 3.0], &[3.0, 0.0]]);
        let e = expm(&m).unwrap();
        let (c, s) = (3f64.cosh(), 3f64.sinh());
        let want = CMatrix::from_real_rows(&[&[c, s], &[s, c]]);
        assert!(e.max_abs_diff(&want) < 1e-12 * c);
        let rot = expm(&CMatrix::from_real_rows(&[&[0.0, -1.0], &[1.0, 0.0]])).unwrap();
        assert!((rot[(0, 0)].re - 1f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn eigenvalues_of_triangular_matrix() {
        let m = CMatrix::from_real_rows(&[&[2.0, 5.0], &[0.0, -3.0]]);
        let mut ev = eigenvalues(&m).unwrap();
        ev.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert!((ev[0] - Complex64::new(-3.0, 0.0)).norm() < 1e-12);
        assert!((ev[1] - Complex64::new(2.0, 0.0)).norm() < 1e-12);
        let rot = CMatrix::from_real_rows(&[&[0.0, -1.0], &[1.0, 0.0]]);
        let ev = eigenvalues(&rot).unwrap();
        assert!(ev.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12 && z.re.abs() < 1e-12));
    }
}
