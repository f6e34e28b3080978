//! Zeta-regularized determinants from the large-`x` behaviour of `log det R(x)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fundsol::{log_det_r, log_det_r_ray, RaySample, Resolvent};
use crate::numcore::quad;
use crate::operator::{
    angle_phase, check_sector, growth_rates, low_spectrum_scale, rotate_to_pi, BoundaryCondition,
    EllipticOperator, PrincipalAngle, CHECK_GRID,
};
use crate::regularize::{
    fit_expansion, reg_integral, reg_limit, AsymptoticFit, ExponentBasis, RegIntegralPlan, Term,
};

/// Largest admissible `log` growth of the fundamental matrix over the window.
pub const GROWTH_CAP: f64 = 600.0;
/// Exponentially small corrections `exp(-s)` are kept below `exp(-30)`.
pub const DECAY_MARGIN: f64 = 30.0;
/// Smallest margin accepted when the strict one leaves less than two decades.
pub const MIN_DECAY_MARGIN: f64 = 18.0;
/// Minimal usable window span in decades.
pub const MIN_DECADES: f64 = 1.5;
/// Largest change of `LIM` tolerated when the lower part of an automatic
/// window is dropped.
pub const LOWER_EDGE_DRIFT: f64 = 1e-6;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Sampling and fitting options for the determinant pipelines.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    /// Explicit `(x_min, x_max)`; chosen from the symbol when absent.
    pub window: Option<(f64, f64)>,
    pub samples: usize,
    /// Fixed number of expansion terms; adaptive from `order + 4` when absent.
    pub basis_terms: Option<usize>,
    pub max_extra_terms: usize,
    pub tol: f64,
    pub residual_target: f64,
    pub grid_points: usize,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self {
            window: None,
            samples: 40,
            basis_terms: None,
            max_extra_terms: 6,
            tol: 1e-12,
            residual_target: 1e-8,
            grid_points: CHECK_GRID,
        }
    }
}

/// Fit and branch diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub residual: f64,
    pub condition: f64,
    pub basis_terms: usize,
    pub branch_certified: bool,
    pub max_phase_step: f64,
    pub refinements: usize,
    pub truncated: bool,
    pub sector_ok: bool,
    pub warnings: Vec<String>,
}

/// Coefficients of the first-order expansion
/// `sum c_k x^{1-k} + zeta0 log x + b + a0 x log x + c x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderFit {
    pub a0: Complex64,
    pub c: Complex64,
    pub b: Complex64,
    pub zeta0: Complex64,
}

/// Outcome of a determinant pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetResult {
    pub det_r0: Complex64,
    /// `-LIM log det R(x)`.
    pub log_c: Complex64,
    pub c: Complex64,
    pub zeta0: Complex64,
    /// `C det R(0)`.
    pub det_pi: Complex64,
    /// Principal angle of the determinant reported in `det`.
    pub theta: f64,
    /// `det_theta`; equal to `det_pi` for `theta = pi`.
    pub det: Complex64,
    pub fit: AsymptoticFit,
    pub window: (f64, f64),
    pub samples: Vec<RaySample>,
    pub first_order: Option<FirstOrderFit>,
    pub diagnostics: Diagnostics,
}

impl DetResult {
    /// `log det_pi(L + x)` predicted by the fitted expansion (its LIM is zero).
    pub fn predicted_log_det(&self, x: f64) -> Complex64 {
        let mut v = self.fit.eval(x) + self.log_c;
        if let Some(fo) = &self.first_order {
            v -= fo.a0 * x * x.ln() + fo.c * x;
        }
        v
    }
}

fn decades(window: (f64, f64)) -> f64 {
    (window.1 / window.0).log10()
}

/// Window `[x_min, x_max]` where exponentially small corrections are
/// negligible and the solution growth stays bounded.
pub fn sampling_window(op: &EllipticOperator, plan: &SamplingPlan) -> Result<(f64, f64)> {
    let window = match plan.window {
        Some(w) => {
            if !(w.0 > 0.0 && w.1 > w.0) {
                return Err(Error::InvalidArgument(format!("invalid window {w:?}")));
            }
            w
        }
        None => {
            let n = op.order() as f64;
            let len = op.length();
            let (slow, fast) = growth_rates(op, plan.grid_points)?;
            let low = low_spectrum_scale(op, plan.grid_points)?;
            let x_max = (GROWTH_CAP / (n * len * fast)).powf(n);
            let strict = (DECAY_MARGIN / (len * slow)).powf(n);
            let loose = (MIN_DECAY_MARGIN / (len * slow)).powf(n);
            let x_min = (10.0 * low).max(1.0).max(strict.min(loose.max(x_max / 100.0)));
            (x_min, x_max)
        }
    };
    if decades(window) < MIN_DECADES {
        return Err(Error::WindowTooSmall {
            x_min: window.0,
            x_max: window.1,
            required: MIN_DECADES,
        });
    }
    Ok(window)
}

fn geometric(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let count = count.max(2);
    let r = (hi / lo).powf(1.0 / (count - 1) as f64);
    (0..count).map(|j| if j + 1 == count { hi } else { lo * r.powi(j as i32) }).collect()
}

fn determinant_basis(order: usize, terms: usize) -> ExponentBasis {
    if order == 1 {
        ExponentBasis::first_order(terms)
    } else {
        ExponentBasis::determinant(order, terms)
    }
}

/// Fits with growing basis size until the residual target is met or the
/// design matrix becomes ill-conditioned.
fn adaptive_fit(
    points: &[(f64, Complex64)],
    order: usize,
    plan: &SamplingPlan,
) -> Result<AsymptoticFit> {
    if let Some(k) = plan.basis_terms {
        return fit_expansion(points, &determinant_basis(order, k));
    }
    let start = order + 4;
    let mut best: Option<AsymptoticFit> = None;
    for k in start..=start + plan.max_extra_terms {
        match fit_expansion(points, &determinant_basis(order, k)) {
            Ok(fit) => {
                let done = fit.residual < plan.residual_target;
                best = Some(fit);
                if done {
                    break;
                }
            }
            Err(e @ Error::IllConditioned { .. }) => match best {
                Some(_) => break,
                None => return Err(e),
            },
            Err(e @ Error::InvalidArgument(_)) if best.is_some() => {
                let _ = e;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(best.expect("at least one fit attempted"))
}

fn det_r_at_zero(op: &EllipticOperator, bc: &BoundaryCondition, tol: f64) -> Result<Complex64> {
    match log_det_r(op, bc, ZERO, tol) {
        Ok(ld) => Ok(ld.value()),
        Err(Error::SingularMatrix { .. }) => Ok(ZERO),
        Err(e) => Err(e),
    }
}

fn run_pipeline(
    op: &EllipticOperator,
    bc: &BoundaryCondition,
    plan: &SamplingPlan,
) -> Result<DetResult> {
    bc.check_for(op)?;
    let n = op.order();
    let sector_ok = check_sector(op, PrincipalAngle::pi(), plan.grid_points);
    let window = sampling_window(op, plan)?;
    let xs = geometric(window.0, window.1, plan.samples);
    let ray = log_det_r_ray(op, bc, &xs, plan.tol)?;
    let usable = (window.0, ray.samples.last().map_or(window.0, |s| s.x));
    if ray.truncated && decades(usable) < MIN_DECADES {
        return Err(Error::WindowTooSmall { x_min: usable.0, x_max: usable.1, required: MIN_DECADES });
    }
    let points: Vec<(f64, Complex64)> =
        ray.samples.iter().map(|s| (s.x, s.log_det.as_complex())).collect();
    let mut fit = adaptive_fit(&points, n, plan)?;
    let mut lim = reg_limit(&fit);
    let mut usable = usable;
    let mut trimmed = false;
    if plan.window.is_none() {
        let lo = usable.0.max(usable.1 * 10f64.powf(-MIN_DECADES));
        let upper: Vec<_> = points.iter().copied().filter(|p| p.0 >= lo * (1.0 - 1e-12)).collect();
        if lo > usable.0 && upper.len() < points.len() && upper.len() >= 2 * (n + 4) {
            if let Ok(f) = adaptive_fit(&upper, n, plan) {
                let l = reg_limit(&f);
                if (l - lim).norm() > LOWER_EDGE_DRIFT * (1.0 + lim.norm()) {
                    fit = f;
                    lim = l;
                    usable.0 = upper[0].0;
                    trimmed = true;
                }
            }
        }
    }
    let log_c = -lim;
    let c = log_c.exp();
    let zeta0 = fit.coefficient(&Term::new(0.0, 1));
    let det_r0 = det_r_at_zero(op, bc, plan.tol)?;
    let det_pi = c * det_r0;

    let mut warnings = Vec::new();
    if !sector_ok {
        warnings.push("leading symbol meets the sector around pi".to_string());
    }
    if fit.residual > 1e-6 {
        warnings.push(format!(
            "fit residual {:.2e} is large; the problem may not be admissible at angle pi",
            fit.residual
        ));
    }
    if !ray.branch_certified() {
        warnings.push("branch continuity of log det R not certified".to_string());
    }
    if trimmed {
        warnings.push(format!("lower edge raised to x = {:.4e}: the expansion had not settled", usable.0));
    }
    if ray.truncated {
        warnings.push(format!("ray truncated at x = {:.4e}", usable.1));
    }
    if det_r0 == ZERO {
        warnings.push("det R(0) vanishes: zero is an eigenvalue".to_string());
    }
    let first_order = (n == 1).then(|| FirstOrderFit {
        a0: fit.coefficient(&Term::new(1.0, 1)),
        c: fit.coefficient(&Term::power(1.0)),
        b: lim,
        zeta0,
    });
    let diagnostics = Diagnostics {
        residual: fit.residual,
        condition: fit.condition,
        basis_terms: fit.basis.len(),
        branch_certified: ray.branch_certified(),
        max_phase_step: ray.max_phase_step,
        refinements: ray.refinements,
        truncated: ray.truncated,
        sector_ok,
        warnings,
    };
    Ok(DetResult {
        det_r0,
        log_c,
        c,
        zeta0,
        det_pi,
        theta: PI,
        det: det_pi,
        fit,
        window: usable,
        samples: ray.samples,
        first_order,
        diagnostics,
    })
}

/// `C(l, B) = exp(-LIM log det R(x))` and `det_pi L = C det R(0)` for order
/// at least two.
pub fn constant_c(
    op: &EllipticOperator,
    bc: &BoundaryCondition,
    plan: &SamplingPlan,
) -> Result<DetResult> {
    if op.order() < 2 {
        return Err(Error::OrderTooLow { order: op.order() });
    }
    run_pipeline(op, bc, plan)
}

/// Fitted coefficient of `log x`, the estimate of `zeta(0)`.
pub fn zeta_zero(result: &DetResult) -> Complex64 {
    result.zeta0
}

/// First-order pipeline: `det_pi L = exp(-b) det R(0)` with `b` the constant
/// of the expansion of `log det R(x)` in `{x^{1-k}, log x, 1, x log x, x}`.
pub fn first_order_det(
    op: &EllipticOperator,
    bc: &BoundaryCondition,
    plan: &SamplingPlan,
) -> Result<DetResult> {
    if op.order() != 1 {
        return Err(Error::WrongOrder { expected: 1, order: op.order() });
    }
    run_pipeline(op, bc, plan)
}

/// `det_theta L = exp(i (theta - pi) zeta(0)) det_pi (e^{i(pi - theta)} L)`.
pub fn det_general_angle(
    op: &EllipticOperator,
    bc: &BoundaryCondition,
    theta: f64,
    plan: &SamplingPlan,
) -> Result<DetResult> {
    let (rotated, _) = rotate_to_pi(op, theta);
    let mut result = run_pipeline(&rotated, bc, plan)?;
    result.theta = theta;
    result.det = angle_phase(theta, result.zeta0) * result.det_pi;
    if theta != PI {
        result
            .diagnostics
            .warnings
            .push(format!("determinant at angle {theta} obtained by rotation to pi"));
    }
    Ok(result)
}

/// Options for the resolvent-trace route.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePlan {
    /// Fit window for the partial integrals; chosen from the symbol when absent.
    pub window: Option<(f64, f64)>,
    pub samples: usize,
    pub basis_terms: usize,
    pub tol: f64,
    /// Tolerance of the kernel-diagonal quadrature.
    pub quad_tol: f64,
    /// Tolerance of the quadrature over the spectral parameter.
    pub outer_tol: f64,
}

impl Default for TracePlan {
    fn default() -> Self {
        Self {
            window: None,
            samples: 16,
            basis_terms: 6,
            tol: 1e-11,
            quad_tol: 1e-9,
            outer_tol: 1e-7,
        }
    }
}

/// `zeta'(0)` through the regularized integral of the resolvent trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRoute {
    pub zeta_prime: Complex64,
    /// `exp(-zeta'(0))`.
    pub det: Complex64,
    pub window: (f64, f64),
    pub fit: Option<AsymptoticFit>,
}

/// `zeta'_{L,pi}(0)` as the regularized integral of `Tr (L + x)^{-1}` over
/// `(0, inf)`.
pub fn zeta_prime_via_trace(
    op: &EllipticOperator,
    bc: &BoundaryCondition,
    plan: &TracePlan,
) -> Result<TraceRoute> {
    if op.order() < 2 {
        return Err(Error::OrderTooLow { order: op.order() });
    }
    let window = match plan.window {
        Some(w) => w,
        None => sampling_window(op, &SamplingPlan::default())?,
    };
    let trace = |x: f64| -> Result<Complex64> {
        Resolvent::new(op, bc, Complex64::new(x, 0.0), plan.tol)?.trace(plan.quad_tol)
    };
    let n = op.order();
    let basis_inf = ExponentBasis::resolvent_trace(n, plan.basis_terms);
    let reg_plan = RegIntegralPlan {
        zero_window: (1e-3, 1e-1),
        inf_window: window,
        samples: plan.samples,
        quad_tol: plan.outer_tol,
    };
    let r = reg_integral(trace, &ExponentBasis::empty(), &basis_inf, &reg_plan)?;
    Ok(TraceRoute {
        zeta_prime: r.value,
        det: (-r.value).exp(),
        window,
        fit: r.fit_infinity,
    })
}

/// Regularized trace of the first-order resolvent,
/// `Tr((L + x)^{-1} - L^{-1}) + Tr_reg(L^{-1})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizedTrace {
    pub value: Complex64,
    /// `Tr((L + x)^{-1} - L^{-1})`.
    pub difference: Complex64,
    /// Regularized trace of `L^{-1}`.
    pub base: Complex64,
}

/// `Tr((L + x)^{-1} - L^{-1})` for a first-order problem: the kernel jumps
/// on the diagonal cancel in the difference.
pub fn trace_difference(
    op: &EllipticOperator,
    bc: &BoundaryCondition,
    x: f64,
    tol: f64,
) -> Result<Complex64> {
    let r0 = Resolvent::new(op, bc, ZERO, tol)?;
    trace_difference_with(op, bc, &r0, x, tol)
}

fn trace_difference_with(
    op: &EllipticOperator,
    bc: &BoundaryCondition,
    r0: &Resolvent<'_>,
    x: f64,
    tol: f64,
) -> Result<Complex64> {
    if x == 0.0 {
        return Ok(ZERO);
    }
    let rx = Resolvent::new(op, bc, Complex64::new(x, 0.0), tol)?;
    let (a, b) = op.interval();
    let mut failure = None;
    let v = quad(
        |t| match (rx.diagonal_trace(t), r0.diagonal_trace(t)) {
            (Ok(p), Ok(q)) => p - q,
            (Err(e), _) | (_, Err(e)) => {
                failure.get_or_insert(e);
                ZERO
            }
        },
        a,
        b,
        (tol * 1e3).max(1e-10),
    );
    if let Some(e) = failure {
        return Err(e);
    }
    v
}

/// Regularized trace of `L^{-1}` for first-order `L`.
///
/// Uses `Tr(L + y)^{-2} = -d/dy Tr((L + y)^{-1} - L^{-1})`, so the
/// regularized integral over `(0, inf)` reduces to `-LIM` of the trace
/// difference at infinity.
pub fn regularized_base_trace(
    op: &EllipticOperator,
    bc: &BoundaryCondition,
    tol: f64,
) -> Result<Complex64> {
    if op.order() != 1 {
        return Err(Error::WrongOrder { expected: 1, order: op.order() });
    }
    let plan = SamplingPlan::default();
    let (lo, hi) = sampling_window(op, &plan)?;
    let r0 = Resolvent::new(op, bc, ZERO, tol)?;
    let xs = geometric(lo, hi, 24);
    let mut points = Vec::with_capacity(xs.len());
    for &x in &xs {
        points.push((x, trace_difference_with(op, bc, &r0, x, tol)?));
    }
    let mut terms = vec![Term::new(0.0, 1), Term::constant()];
    terms.extend((1..=4).map(|k| Term::power(-(k as f64))));
    let fit = fit_expansion(&points, &ExponentBasis::new(terms)?)?;
    Ok(-reg_limit(&fit))
}

/// Regularized trace of `(L + x)^{-1}` for first-order `L`.
pub fn regularized_trace(
    op: &EllipticOperator,
    bc: &BoundaryCondition,
    x: f64,
    tol: f64,
) -> Result<RegularizedTrace> {
    let base = regularized_base_trace(op, bc, tol)?;
    let difference = trace_difference(op, bc, x, tol)?;
    Ok(RegularizedTrace { value: difference + base, difference, base })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn laplacian() -> EllipticOperator {
        EllipticOperator::scalar_constant(0.0, 1.0, &[c(1.0), c(0.0), c(1.0)]).unwrap()
    }

    #[test]
    fn window_for_the_laplacian() {
        let (lo, hi) = sampling_window(&laplacian(), &SamplingPlan::default()).unwrap();
        assert!((lo - 900.0).abs() < 1e-9);
        assert!((hi - 90000.0).abs() < 1e-6);
    }

    #[test]
    fn narrow_window_is_rejected() {
        let plan = SamplingPlan { window: Some((100.0, 1000.0)), ..SamplingPlan::default() };
        assert!(matches!(
            sampling_window(&laplacian(), &plan),
            Err(Error::WindowTooSmall { .. })
        ));
    }

    #[test]
    fn periodic_constant() {
        let r = constant_c(&laplacian(), &BoundaryCondition::periodic(2, 1), &SamplingPlan::default())
            .unwrap();
        assert!((r.c + 1.0).norm() < 1e-6, "{:?}", r.c);
        let want = 4.0 * 0.5f64.sinh().powi(2);
        assert!((r.det_pi - want).norm() / want < 1e-6);
        assert!(r.zeta0.norm() < 1e-3);
    }

    #[test]
    fn first_order_requires_order_one() {
        let plan = SamplingPlan::default();
        let bc = BoundaryCondition::dirichlet(1);
        assert!(matches!(
            first_order_det(&laplacian(), &bc, &plan),
            Err(Error::WrongOrder { .. })
        ));
        let d = EllipticOperator::scalar_constant(0.0, 1.0, &[c(0.0), c(1.0)]).unwrap();
        assert!(matches!(
            constant_c(&d, &BoundaryCondition::twisted(1.0), &plan),
            Err(Error::OrderTooLow { .. })
        ));
    }
}
