//! Regularized limits and integrals of functions with asymptotic expansions
//! `sum x^alpha log^k x`, realized by least-squares fits on geometric windows.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{quad_with, QuadOptions};

/// Fits whose design matrix exceeds this condition number are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// A single basis function `x^alpha log^k x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub alpha: f64,
    pub log_power: u32,
}

impl Term {
    pub fn new(alpha: f64, log_power: u32) -> Self {
        Self { alpha, log_power }
    }

    pub fn power(alpha: f64) -> Self {
        Self::new(alpha, 0)
    }

    pub fn constant() -> Self {
        Self::new(0.0, 0)
    }

    pub fn is_constant(&self) -> bool {
        self.alpha == 0.0 && self.log_power == 0
    }

    pub fn eval(&self, x: f64) -> f64 {
        let p = if self.alpha == 0.0 { 1.0 } else { x.powf(self.alpha) };
        p * x.ln().powi(self.log_power as i32)
    }

    fn same(&self, other: &Term) -> bool {
        (self.alpha - other.alpha).abs() < 1e-12 && self.log_power == other.log_power
    }

    /// Antiderivative as a combination of terms.
    pub fn antiderivative(&self) -> Vec<(Term, f64)> {
        let k = self.log_power;
        if (self.alpha + 1.0).abs() < 1e-12 {
            return vec![(Term::new(0.0, k + 1), 1.0 / (k + 1) as f64)];
        }
        // x^{a+1} sum_j (-1)^{k-j} k!/j! log^j x / (a+1)^{k-j+1}
        let a1 = self.alpha + 1.0;
        let mut out = Vec::new();
        let mut coef = 1.0 / a1;
        for j in (0..=k).rev() {
            out.push((Term::new(a1, j), coef));
            coef *= -(j as f64) / a1;
        }
        out
    }

    /// Derivative as a combination of terms.
    pub fn derivative(&self) -> Vec<(Term, f64)> {
        let mut out = Vec::new();
        if self.alpha != 0.0 {
            out.push((Term::new(self.alpha - 1.0, self.log_power), self.alpha));
        }
        if self.log_power > 0 {
            out.push((Term::new(self.alpha - 1.0, self.log_power - 1), self.log_power as f64));
        }
        out
    }
}

/// An ordered list of distinct terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentBasis {
    terms: Vec<Term>,
}

impl ExponentBasis {
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        for (i, t) in terms.iter().enumerate() {
            if !t.alpha.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite exponent {}", t.alpha)));
            }
            if terms[..i].iter().any(|s| s.same(t)) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate basis term x^{} log^{} x",
                    t.alpha, t.log_power
                )));
            }
        }
        Ok(Self { terms })
    }

    pub fn empty() -> Self {
        Self { terms: Vec::new() }
    }

    /// Pure powers `x^alpha`.
    pub fn powers(alphas: &[f64]) -> Result<Self> {
        Self::new(alphas.iter().map(|&a| Term::power(a)).collect())
    }

    /// `{x^{(1-k)/n}: k = 0..=terms, k != 1} + {1, log x}`: the expansion of
    /// `log det R(x)` for an order `n` problem.
    pub fn determinant(order: usize, terms: usize) -> Self {
        let n = order as f64;
        let mut out: Vec<Term> = (0..=terms)
            .filter(|&k| k != 1)
            .map(|k| Term::power((1.0 - k as f64) / n))
            .collect();
        out.push(Term::constant());
        out.push(Term::new(0.0, 1));
        Self { terms: out }
    }

    /// `{x^{1-k}: k = 2..=terms} + {log x, 1, x log x, x}` for first order problems.
    pub fn first_order(terms: usize) -> Self {
        let mut out: Vec<Term> = (2..=terms.max(2)).map(|k| Term::power(1.0 - k as f64)).collect();
        out.extend([Term::new(0.0, 1), Term::constant(), Term::new(1.0, 1), Term::power(1.0)]);
        Self { terms: out }
    }

    /// `{x^{(1-k)/n - 1}: k = 0..terms}`: the expansion of `Tr (L + x)^{-1}`.
    pub fn resolvent_trace(order: usize, terms: usize) -> Self {
        let n = order as f64;
        let mut out: Vec<Term> =
            (0..terms).map(|k| Term::power((1.0 - k as f64) / n - 1.0)).collect();
        // the x^{-1} coefficient may carry a log for general boundary conditions
        if !out.iter().any(|t| (t.alpha + 1.0).abs() < 1e-12) {
            out.push(Term::power(-1.0));
        }
        Self { terms: out }
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn position(&self, t: &Term) -> Option<usize> {
        self.terms.iter().position(|s| s.same(t))
    }

    /// Appends `t` unless already present.
    pub fn push(&mut self, t: Term) {
        if self.position(&t).is_none() {
            self.terms.push(t);
        }
    }

    pub fn union(&self, other: &ExponentBasis) -> Self {
        let mut out = self.clone();
        for t in &other.terms {
            out.push(*t);
        }
        out
    }

    /// All terms appearing in antiderivatives of the basis.
    pub fn antiderivatives(&self) -> Self {
        let mut out = Self::empty();
        for t in &self.terms {
            for (s, _) in t.antiderivative() {
                out.push(s);
            }
        }
        out
    }
}

/// Least-squares expansion coefficients with fit diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticFit {
    pub basis: ExponentBasis,
    pub coefficients: Vec<Complex64>,
    /// RMS misfit relative to `max(RMS data, 1)`.
    pub residual: f64,
    /// Condition number of the column-scaled design matrix.
    pub condition: f64,
}

impl AsymptoticFit {
    pub fn coefficient(&self, t: &Term) -> Complex64 {
        self.basis.position(t).map_or(Complex64::new(0.0, 0.0), |i| self.coefficients[i])
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        self.basis.terms().iter().zip(&self.coefficients).map(|(t, c)| c * t.eval(x)).sum()
    }

    fn from_map(map: BTreeMap<(i64, u32), (Term, Complex64)>, residual: f64, condition: f64) -> Self {
        let (terms, coefficients): (Vec<Term>, Vec<Complex64>) = map.into_values().unzip();
        Self { basis: ExponentBasis { terms }, coefficients, residual, condition }
    }
}

fn term_key(t: &Term) -> (i64, u32) {
    ((t.alpha * 1e9).round() as i64, t.log_power)
}

/// Least squares of `samples` on `basis` with unit-RMS column scaling,
/// solved by SVD.
pub fn fit_expansion(samples: &[(f64, Complex64)], basis: &ExponentBasis) -> Result<AsymptoticFit> {
    fit_expansion_weighted(samples, &vec![1.0; samples.len()], basis)
}

/// As [`fit_expansion`] with row weights (inverse noise levels).
pub fn fit_expansion_weighted(
    samples: &[(f64, Complex64)],
    weights: &[f64],
    basis: &ExponentBasis,
) -> Result<AsymptoticFit> {
    let (rows, cols) = (samples.len(), basis.len());
    if weights.len() != rows || weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument("weights must be positive, one per sample".into()));
    }
    if cols == 0 {
        return Err(Error::InvalidArgument("empty fit basis".into()));
    }
    if rows < cols + 2 {
        return Err(Error::InvalidArgument(format!(
            "{rows} samples cannot support a {cols}-term fit"
        )));
    }
    if samples.iter().any(|(x, f)| !(*x > 0.0) || !f.re.is_finite() || !f.im.is_finite()) {
        return Err(Error::NonFinite("fit samples".into()));
    }
    let mut design =
        DMatrix::<f64>::from_fn(rows, cols, |i, j| weights[i] * basis.terms[j].eval(samples[i].0));
    let mut scales = vec![1.0; cols];
    for (j, scale) in scales.iter_mut().enumerate() {
        let rms = (design.column(j).norm_squared() / rows as f64).sqrt();
        if rms == 0.0 || !rms.is_finite() {
            return Err(Error::IllConditioned { condition: f64::INFINITY });
        }
        *scale = rms;
        design.column_mut(j).scale_mut(1.0 / rms);
    }
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let re = DVector::from_iterator(rows, samples.iter().zip(weights).map(|(s, w)| w * s.1.re));
    let im = DVector::from_iterator(rows, samples.iter().zip(weights).map(|(s, w)| w * s.1.im));
    let solve = |rhs: &DVector<f64>| -> Result<DVector<f64>> {
        svd.solve(rhs, 0.0).map_err(|e| Error::InvalidArgument(e.to_string()))
    };
    let (cre, cim) = (solve(&re)?, solve(&im)?);
    let res_re = &design * &cre - &re;
    let res_im = &design * &cim - &im;
    let misfit = (res_re.norm_squared() + res_im.norm_squared()).sqrt();
    // RMS misfit relative to the RMS data size, floored at unit scale so
    // near-zero data report absolute errors.
    let size = (re.norm_squared() + im.norm_squared()).sqrt().max((rows as f64).sqrt());
    let residual = misfit / size;
    let coefficients = (0..cols).map(|j| Complex64::new(cre[j], cim[j]) / scales[j]).collect();
    Ok(AsymptoticFit { basis: basis.clone(), coefficients, residual, condition })
}

/// The constant coefficient of the expansion (zero if absent).
pub fn reg_limit(fit: &AsymptoticFit) -> Complex64 {
    fit.coefficient(&Term::constant())
}

/// Term-by-term antiderivative; the integration constant is zero.
pub fn integrate_expansion(fit: &AsymptoticFit) -> AsymptoticFit {
    let mut map: BTreeMap<(i64, u32), (Term, Complex64)> = BTreeMap::new();
    for (t, c) in fit.basis.terms().iter().zip(&fit.coefficients) {
        for (s, w) in t.antiderivative() {
            map.entry(term_key(&s)).or_insert((s, Complex64::new(0.0, 0.0))).1 += c * w;
        }
    }
    AsymptoticFit::from_map(map, fit.residual, fit.condition)
}

/// Term-by-term derivative.
pub fn differentiate_expansion(fit: &AsymptoticFit) -> AsymptoticFit {
    let mut map: BTreeMap<(i64, u32), (Term, Complex64)> = BTreeMap::new();
    for (t, c) in fit.basis.terms().iter().zip(&fit.coefficients) {
        for (s, w) in t.derivative() {
            map.entry(term_key(&s)).or_insert((s, Complex64::new(0.0, 0.0))).1 += c * w;
        }
    }
    map.retain(|_, (_, c)| c.norm() != 0.0);
    AsymptoticFit::from_map(map, fit.residual, fit.condition)
}

/// Windows and sample counts for regularized integrals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegIntegralPlan {
    /// Fit window near zero, relative to the upper integration limit.
    pub zero_window: (f64, f64),
    /// Fit window near infinity, relative to `max(1, lower limit)`.
    pub inf_window: (f64, f64),
    pub samples: usize,
    pub quad_tol: f64,
}

impl Default for RegIntegralPlan {
    fn default() -> Self {
        Self { zero_window: (1e-3, 1e-1), inf_window: (10.0, 1e3), samples: 24, quad_tol: 1e-13 }
    }
}

/// Result of [`reg_integral`] with both partial fits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegIntegral {
    pub value: Complex64,
    pub near_zero: Complex64,
    pub near_infinity: Complex64,
    pub fit_zero: Option<AsymptoticFit>,
    pub fit_infinity: Option<AsymptoticFit>,
}

fn geometric(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let count = count.max(2);
    let r = (hi / lo).powf(1.0 / (count - 1) as f64);
    (0..count).map(|j| if j + 1 == count { hi } else { lo * r.powi(j as i32) }).collect()
}

struct Fallible<F> {
    f: F,
    failure: Option<Error>,
}

impl<F: FnMut(f64) -> Result<Complex64>> Fallible<F> {
    fn integrate(&mut self, a: f64, b: f64, tol: f64) -> Result<Complex64> {
        let opts = QuadOptions { abs_tol: 1e-300, rel_tol: tol, max_subdivisions: 4000 };
        let failure = &mut self.failure;
        let f = &mut self.f;
        let r = quad_with(
            |x| match f(x) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    Complex64::new(0.0, 0.0)
                }
            },
            a,
            b,
            opts,
        );
        if let Some(e) = self.failure.take() {
            return Err(e);
        }
        Ok(r?.value)
    }
}

/// `LIM_{X -> inf} int_{x0}^X f`, where `basis` lists the terms of `f`'s
/// expansion at infinity whose integrals do not converge.
pub fn reg_integral_from(
    f: impl FnMut(f64) -> Result<Complex64>,
    x0: f64,
    basis: &ExponentBasis,
    plan: &RegIntegralPlan,
) -> Result<(Complex64, Option<AsymptoticFit>)> {
    let mut g = Fallible { f, failure: None };
    let base = x0.max(1.0);
    let xs = geometric(plan.inf_window.0 * base, plan.inf_window.1 * base, plan.samples);
    let mut acc = g.integrate(x0, xs[0], plan.quad_tol)?;
    let mut samples = vec![(xs[0], acc)];
    for w in xs.windows(2) {
        acc += g.integrate(w[0], w[1], plan.quad_tol)?;
        samples.push((w[1], acc));
    }
    if basis.is_empty() {
        return Ok((acc, None));
    }
    let mut fit_basis = basis.antiderivatives();
    fit_basis.push(Term::constant());
    let fit = fit_expansion(&samples, &fit_basis)?;
    Ok((reg_limit(&fit), Some(fit)))
}

/// `LIM_{e -> 0} int_e^{x1} f`, where `basis` lists the terms of `f`'s
/// expansion at zero whose integrals do not converge.
pub fn reg_integral_to(
    f: impl FnMut(f64) -> Result<Complex64>,
    x1: f64,
    basis: &ExponentBasis,
    plan: &RegIntegralPlan,
) -> Result<(Complex64, Option<AsymptoticFit>)> {
    let mut g = Fallible { f, failure: None };
    if basis.is_empty() {
        return Ok((g.integrate(0.0, x1, plan.quad_tol)?, None));
    }
    let es = geometric(plan.zero_window.0 * x1, plan.zero_window.1 * x1, plan.samples);
    let mut acc = g.integrate(*es.last().expect("nonempty"), x1, plan.quad_tol)?;
    let mut samples = vec![(*es.last().expect("nonempty"), acc)];
    for w in es.windows(2).rev() {
        acc += g.integrate(w[0], w[1], plan.quad_tol)?;
        samples.push((w[0], acc));
    }
    let mut fit_basis = basis.antiderivatives();
    for p in 1..=3 {
        fit_basis.push(Term::power(p as f64));
    }
    fit_basis.push(Term::constant());
    let fit = fit_expansion(&samples, &fit_basis)?;
    Ok((reg_limit(&fit), Some(fit)))
}

/// Regularized integral over `(0, inf)`, split at 1.
pub fn reg_integral(
    mut f: impl FnMut(f64) -> Result<Complex64>,
    basis_zero: &ExponentBasis,
    basis_inf: &ExponentBasis,
    plan: &RegIntegralPlan,
) -> Result<RegIntegral> {
    let (near_zero, fit_zero) = reg_integral_to(&mut f, 1.0, basis_zero, plan)?;
    let (near_infinity, fit_infinity) = reg_integral_from(&mut f, 1.0, basis_inf, plan)?;
    Ok(RegIntegral {
        value: near_zero + near_infinity,
        near_zero,
        near_infinity,
        fit_zero,
        fit_infinity,
    })
}

/// Closed form of `reg int_0^inf (x+y)^alpha dy - reg int_x^inf y^alpha dy`:
/// `x^{alpha+1}/(alpha+1)` for nonnegative integers `alpha`, else zero.
pub fn shift_defect(alpha: i32, x: f64) -> f64 {
    if alpha >= 0 {
        x.powi(alpha + 1) / (alpha + 1) as f64
    } else {
        0.0
    }
}

/// [`shift_defect`] evaluated from the two regularized integrals directly.
pub fn shift_defect_numeric(alpha: f64, x: f64, plan: &RegIntegralPlan) -> Result<Complex64> {
    // Expansion of (x + y)^alpha at infinity, window far enough that x / y is small.
    let polynomial = alpha >= 0.0 && alpha.fract() == 0.0;
    let terms = if polynomial { alpha as usize + 1 } else { 6 };
    let shifted_basis = ExponentBasis::powers(&(0..terms).map(|j| alpha - j as f64).collect::<Vec<_>>())?;
    // Narrow windows keep the growing partial integrals from swamping the constant.
    let scale = x.max(1.0);
    let window = if polynomial { (2.0, 40.0) } else { (50.0 * scale, 1000.0 * scale) };
    let shifted_plan = RegIntegralPlan { inf_window: window, ..*plan };
    let tail_plan = RegIntegralPlan { inf_window: (2.0, 40.0), ..*plan };
    let (shifted, _) =
        reg_integral_from(|y| Ok(Complex64::new((x + y).powf(alpha), 0.0)), 0.0, &shifted_basis, &shifted_plan)?;
    let (tail, _) = reg_integral_from(
        |y| Ok(Complex64::new(y.powf(alpha), 0.0)),
        x,
        &ExponentBasis::powers(&[alpha])?,
        &tail_plan,
    )?;
    Ok(shifted - tail)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn samples(f: impl Fn(f64) -> f64) -> Vec<(f64, Complex64)> {
        geometric(1.0, 1e3, 40).into_iter().map(|x| (x, c(f(x)))).collect()
    }

    #[test]
    fn exact_models_are_recovered() {
        let basis = ExponentBasis::powers(&[0.0, -1.0]).unwrap();
        let fit = fit_expansion(&samples(|x| 3.0 + 2.0 / x), &basis).unwrap();
        assert!((fit.coefficients[0] - 3.0).norm() < 1e-12);
        assert!((fit.coefficients[1] - 2.0).norm() < 1e-12);
        assert!(fit.residual < 1e-13);
        assert!((reg_limit(&fit) - 3.0).norm() < 1e-12);

        let basis = ExponentBasis::new(vec![Term::new(0.0, 1), Term::constant()]).unwrap();
        let fit = fit_expansion(&samples(f64::ln), &basis).unwrap();
        assert!((fit.coefficients[0] - 1.0).norm() < 1e-12);
        assert!(fit.coefficients[1].norm() < 1e-12);

        let basis =
            ExponentBasis::new(vec![Term::power(1.0), Term::new(0.0, 1), Term::constant()]).unwrap();
        let fit = fit_expansion(&samples(|x| x + x.ln()), &basis).unwrap();
        assert!(reg_limit(&fit).norm() < 1e-10);
    }

    #[test]
    fn duplicate_terms_are_rejected() {
        assert!(ExponentBasis::powers(&[0.5, 0.5]).is_err());
    }

    #[test]
    fn too_rich_basis_is_ill_conditioned() {
        let alphas: Vec<f64> = (0..14).map(|k| -0.05 * k as f64).collect();
        let basis = ExponentBasis::powers(&alphas).unwrap();
        let pts: Vec<(f64, Complex64)> =
            geometric(1.0, 2.0, 40).into_iter().map(|x| (x, c(x.sqrt()))).collect();
        assert!(matches!(fit_expansion(&pts, &basis), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn expansion_integration() {
        let mk = |alpha: f64, a: f64| AsymptoticFit {
            basis: ExponentBasis::powers(&[alpha]).unwrap(),
            coefficients: vec![c(a)],
            residual: 0.0,
            condition: 1.0,
        };
        let i = integrate_expansion(&mk(-1.5, 3.0));
        assert_eq!(i.coefficient(&Term::power(-0.5)), c(-6.0));
        let i = integrate_expansion(&mk(-1.0, 3.0));
        assert_eq!(i.coefficient(&Term::new(0.0, 1)), c(3.0));
        let i = integrate_expansion(&mk(-0.5, 3.0));
        assert_eq!(i.coefficient(&Term::power(0.5)), c(6.0));
    }

    #[test]
    fn antiderivative_of_log_terms_differentiates_back() {
        for alpha in [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0] {
            for k in 0..3 {
                let fit = AsymptoticFit {
                    basis: ExponentBasis::new(vec![Term::new(alpha, k)]).unwrap(),
                    coefficients: vec![c(1.0)],
                    residual: 0.0,
                    condition: 1.0,
                };
                let back = differentiate_expansion(&integrate_expansion(&fit));
                assert_eq!(back.basis.len(), 1, "alpha {alpha}, k {k}");
                assert!((back.coefficient(&Term::new(alpha, k)) - 1.0).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn convergent_integral_is_ordinary() {
        let plan = RegIntegralPlan::default();
        let r = reg_integral(
            |x| Ok(c((-x).exp())),
            &ExponentBasis::empty(),
            &ExponentBasis::empty(),
            &plan,
        )
        .unwrap();
        assert!((r.value - 1.0).norm() < 1e-10);
    }

    #[test]
    fn inverse_square_root_integrates_to_zero() {
        let plan = RegIntegralPlan::default();
        let b = ExponentBasis::powers(&[-0.5]).unwrap();
        let r = reg_integral(|x| Ok(c(x.powf(-0.5))), &ExponentBasis::empty(), &b, &plan).unwrap();
        assert!((r.near_zero - 2.0).norm() < 1e-9);
        assert!(r.value.norm() < 1e-9);
    }

    #[test]
    fn shift_defect_table() {
        assert!((shift_defect(2, 2.0) - 8.0 / 3.0).abs() < 1e-15);
        assert_eq!(shift_defect(-3, 5.0), 0.0);
        assert_eq!(shift_defect(-1, 1.0), 0.0);
    }
}
