//! Closed forms for second order operators whose boundary matrices have the
//! shape `R_a = [[A, B], [C, D]]`, `R_b = 1`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{det, solve, CMatrix};
use crate::operator::BoundaryCondition;

/// Coefficients with magnitude at or below this count as zero.
pub const ADMISSIBLE_FLOOR: f64 = 1e-12;
/// Relative truncation applied before reading off the leading term.
pub const RELATIVE_FLOOR: f64 = 1e-12;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// The `m x m` blocks of `R_a`; `R_b` is the identity of size `2m`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExampleBc {
    pub a: CMatrix,
    pub b: CMatrix,
    pub c: CMatrix,
    pub d: CMatrix,
}

impl ExampleBc {
    pub fn new(a: CMatrix, b: CMatrix, c: CMatrix, d: CMatrix) -> Result<Self> {
        let m = a.rows();
        for (name, blk) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            if blk.rows() != m || blk.cols() != m || m == 0 {
                return Err(Error::Dimension(format!("block {name} must be {m}x{m}")));
            }
        }
        Ok(Self { a, b, c, d })
    }

    pub fn dim(&self) -> usize {
        self.a.rows()
    }

    pub fn boundary(&self) -> BoundaryCondition {
        BoundaryCondition::from_blocks(&self.a, &self.b, &self.c, &self.d)
            .expect("blocks validated on construction")
    }

    /// Splits `R_b^{-1} R_a` into blocks; `None` when `R_b` is singular.
    pub fn from_boundary(bc: &BoundaryCondition) -> Option<Self> {
        let size = bc.size();
        if !size.is_multiple_of(2) {
            return None;
        }
        let m = size / 2;
        let ra = solve(bc.rb(), bc.ra()).ok()?;
        Some(Self {
            a: ra.block(0, 0, m, m),
            b: ra.block(0, m, m, m),
            c: ra.block(m, 0, m, m),
            d: ra.block(m, m, m, m),
        })
    }

    /// `-z B/2 + (A + D)/2 - C/(2z)`.
    pub fn pencil(&self, z: Complex64) -> CMatrix {
        let half = Complex64::new(0.5, 0.0);
        let sum = &self.a + &self.d;
        let p = &self.b.scale(-z * half) + &sum.scale(half);
        &p - &self.c.scale(half / z)
    }
}

/// A Laurent polynomial `sum_k c_k z^k` with exponents in `[-m, m]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaurentPoly {
    m: usize,
    coefficients: BTreeMap<i32, Complex64>,
}

impl LaurentPoly {
    pub fn new(m: usize) -> Self {
        Self { m, coefficients: BTreeMap::new() }
    }

    pub fn from_terms(m: usize, terms: &[(i32, Complex64)]) -> Result<Self> {
        let mut p = Self::new(m);
        for &(k, v) in terms {
            p.add(k, v)?;
        }
        Ok(p)
    }

    pub fn bound(&self) -> usize {
        self.m
    }

    /// Adds `value` to the coefficient of `z^k`.
    pub fn add(&mut self, k: i32, value: Complex64) -> Result<()> {
        if k.unsigned_abs() as usize > self.m {
            return Err(Error::InvalidArgument(format!(
                "exponent {k} outside [-{0}, {0}]",
                self.m
            )));
        }
        *self.coefficients.entry(k).or_default() += value;
        Ok(())
    }

    pub fn coefficient(&self, k: i32) -> Complex64 {
        self.coefficients.get(&k).copied().unwrap_or_default()
    }

    /// Nonzero-stored `(exponent, coefficient)` pairs, ascending.
    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (i32, Complex64)> + '_ {
        self.coefficients.iter().map(|(&k, &v)| (k, v))
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.terms().map(|(k, v)| v * z.powi(k)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.terms().map(|(_, v)| v.norm()).fold(0.0, f64::max)
    }
}

/// `M(z) = det(-z B/2 + (A + D)/2 - C/(2z))`.
///
/// `z^m M(z)` is a polynomial of degree at most `2m`; it is sampled at the
/// `2m + 1` roots of unity scaled by `sqrt(|C| / |B|)` and recovered by the
/// inverse discrete Fourier transform.
pub fn laurent_m(bc: &ExampleBc) -> LaurentPoly {
    let m = bc.dim();
    let count = 2 * m + 1;
    let (nb, nc) = (bc.b.norm(), bc.c.norm());
    let radius = if nb > 0.0 && nc > 0.0 { (nc / nb).sqrt().clamp(1e-3, 1e3) } else { 1.0 };
    let nodes: Vec<Complex64> = (0..count)
        .map(|j| Complex64::from_polar(radius, 2.0 * PI * j as f64 / count as f64))
        .collect();
    let values: Vec<Complex64> = nodes
        .iter()
        .map(|&z| det(&bc.pencil(z)).unwrap_or_default() * z.powi(m as i32))
        .collect();
    let mut poly = LaurentPoly::new(m);
    for p in 0..count {
        let mut c = Complex64::default();
        for (j, v) in values.iter().enumerate() {
            c += v * Complex64::from_polar(1.0, -2.0 * PI * (j * p) as f64 / count as f64);
        }
        c /= count as f64 * radius.powi(p as i32);
        poly.add(p as i32 - m as i32, c).expect("exponent within bound");
    }
    poly
}

/// True iff `M` does not vanish identically.
pub fn admissible(poly: &LaurentPoly) -> bool {
    poly.terms().any(|(_, v)| v.norm() > ADMISSIBLE_FLOOR)
}

/// Leading exponent `k` and coefficient `lambda` of `M`; then
/// `C = 1/lambda` and `zeta(0) = k/2`.
pub fn leading_data(poly: &LaurentPoly) -> Result<(Complex64, i32)> {
    if !admissible(poly) {
        return Err(Error::NotAdmissible("M(z) vanishes identically".into()));
    }
    let floor = RELATIVE_FLOOR * poly.max_abs();
    poly.terms()
        .rev()
        .find(|(_, v)| v.norm() > floor)
        .map(|(k, v)| (v, k))
        .ok_or_else(|| Error::NotAdmissible("M(z) vanishes identically".into()))
}

/// Which row of the closed-form table a boundary condition falls into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableCase {
    /// `det B != 0`.
    InvertibleB,
    /// `B = 0`, `det(A + D) != 0`.
    InvertibleSum,
    /// `B = 0`, `A + D = 0`, `det C != 0`.
    InvertibleC,
}

fn scale(bc: &ExampleBc) -> f64 {
    [&bc.a, &bc.b, &bc.c, &bc.d].iter().map(|m| m.max_abs()).fold(1.0, f64::max)
}

fn nonsingular(d: Complex64, norm: f64, m: usize) -> bool {
    d.norm() > 1e-10 * norm.max(1e-300).powi(m as i32)
}

/// Classifies `bc`; `None` when no closed form applies.
pub fn classify(bc: &ExampleBc) -> Option<TableCase> {
    let m = bc.dim();
    let tiny = 1e-12 * scale(bc);
    if bc.b.max_abs() > tiny {
        let db = det(&bc.b).ok()?;
        return nonsingular(db, bc.b.max_abs(), m).then_some(TableCase::InvertibleB);
    }
    let sum = &bc.a + &bc.d;
    if sum.max_abs() > tiny {
        let ds = det(&sum).ok()?;
        return nonsingular(ds, sum.max_abs(), m).then_some(TableCase::InvertibleSum);
    }
    let dc = det(&bc.c).ok()?;
    nonsingular(dc, bc.c.max_abs(), m).then_some(TableCase::InvertibleC)
}

/// `C_2` from the three-case table:
/// `(-1)^m 2^m / det B`, `2^m / det(A + D)` or `(-1)^m 2^m / det C`.
pub fn closed_form_c2(bc: &ExampleBc) -> Result<Complex64> {
    let m = bc.dim() as i32;
    let two_m = 2f64.powi(m);
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    match classify(bc).ok_or(Error::CaseNotCovered)? {
        TableCase::InvertibleB => Ok(sign * two_m / det(&bc.b)?),
        TableCase::InvertibleSum => Ok(two_m / det(&(&bc.a + &bc.d))?),
        TableCase::InvertibleC => Ok(sign * two_m / det(&bc.c)?),
    }
}

/// `C_2` for `l = -d^2/dx^2 + p(x) d/dx + q(x)` given `p_integral = int_a^b tr p`.
///
/// The gauge relation gives `C(l) = exp(i int tr(a_2^{-1} a_1)) C(l^u)` with
/// `a_1 = i p`, and the transformed blocks contribute `exp(int tr p / 2)`,
/// so the net factor is `exp(-int tr p / 2)`.
pub fn c2_with_p(p_integral: Complex64, bc: &ExampleBc) -> Result<Complex64> {
    match classify(bc) {
        Some(TableCase::InvertibleB | TableCase::InvertibleSum) => {
            Ok((-0.5 * p_integral).exp() * closed_form_c2(bc)?)
        }
        _ => Err(Error::CaseNotCovered),
    }
}

/// `1 / lambda` and `k / 2` from [`leading_data`].
pub fn constant_and_zeta0(bc: &ExampleBc) -> Result<(Complex64, f64)> {
    let (lambda, k) = leading_data(&laurent_m(bc))?;
    Ok((ONE / lambda, 0.5 * k as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn scalar_bc(a: f64, b: f64, cc: f64, d: f64) -> ExampleBc {
        ExampleBc::new(
            CMatrix::scalar(c(a)),
            CMatrix::scalar(c(b)),
            CMatrix::scalar(c(cc)),
            CMatrix::scalar(c(d)),
        )
        .unwrap()
    }

    #[test]
    fn periodic_is_constant_minus_one() {
        let m = laurent_m(&scalar_bc(-1.0, 0.0, 0.0, -1.0));
        assert!((m.coefficient(0) + 1.0).norm() < 1e-14);
        assert!(m.coefficient(1).norm() < 1e-14 && m.coefficient(-1).norm() < 1e-14);
        assert_eq!(leading_data(&m).unwrap().1, 0);
    }

    #[test]
    fn single_block_pencils() {
        let m = laurent_m(&scalar_bc(0.0, 2.0, 0.0, 0.0));
        assert!((m.coefficient(1) + 1.0).norm() < 1e-14);
        let (lambda, k) = leading_data(&m).unwrap();
        assert_eq!(k, 1);
        assert!((lambda + 1.0).norm() < 1e-14);
        let m = laurent_m(&scalar_bc(0.0, 0.0, 2.0, 0.0));
        assert!((m.coefficient(-1) + 1.0).norm() < 1e-14);
        assert_eq!(leading_data(&m).unwrap().1, -1);
    }

    #[test]
    fn cancellation_is_not_admissible() {
        let p = LaurentPoly::from_terms(1, &[(1, c(1.0)), (1, c(-1.0))]).unwrap();
        assert!(!admissible(&p));
        assert!(matches!(leading_data(&p), Err(Error::NotAdmissible(_))));
        assert!(!admissible(&LaurentPoly::new(2)));
    }

    #[test]
    fn exponent_outside_range_is_rejected() {
        assert!(LaurentPoly::from_terms(1, &[(2, c(1.0))]).is_err());
    }

    #[test]
    fn closed_form_table() {
        let v = closed_form_c2(&scalar_bc(-1.0, 0.0, 0.0, -1.0)).unwrap();
        assert!((v + 1.0).norm() < 1e-14);
        let v = closed_form_c2(&scalar_bc(1.0, 0.0, 3.0, -1.0)).unwrap();
        assert!((v + 2.0 / 3.0).norm() < 1e-14);
        let v = closed_form_c2(&scalar_bc(0.0, 4.0, 0.0, 0.0)).unwrap();
        assert!((v + 0.5).norm() < 1e-14);
        assert_eq!(closed_form_c2(&scalar_bc(1.0, 0.0, 0.0, -1.0)), Err(Error::CaseNotCovered));
    }

    #[test]
    fn p_factor() {
        let per = scalar_bc(-1.0, 0.0, 0.0, -1.0);
        assert_eq!(c2_with_p(c(0.0), &per).unwrap(), closed_form_c2(&per).unwrap());
        let v = c2_with_p(c(2.0), &per).unwrap();
        assert!((v + (-1f64).exp()).norm() < 1e-14);
        assert_eq!(c2_with_p(c(1.0), &scalar_bc(1.0, 0.0, 3.0, -1.0)), Err(Error::CaseNotCovered));
    }

    #[test]
    fn block_round_trip() {
        let bc = scalar_bc(1.0, 2.0, 3.0, 4.0);
        assert_eq!(ExampleBc::from_boundary(&bc.boundary()), Some(bc));
        assert!(ExampleBc::from_boundary(&BoundaryCondition::dirichlet(1)).is_none());
    }
}
