//! Dormand-Prince 5(4) integration with PI step-size control.
//!
//! The stepper works on flat complex state vectors so matrix-valued problems
//! can be integrated without reshaping. Between steps the caller may rescale
//! or rotate the state (linear problems only), which is how the fundamental
//! matrix routines keep exponentially growing solutions representable.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::matrix::CMatrix;
use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Steps below this fraction of the integration span signal a stiff or
/// overflowing problem.
pub const STEP_UNDERFLOW_RATIO: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RkOptions {
    /// Relative tolerance, applied norm-wise against the state magnitude.
    pub tol: f64,
    /// Absolute floor added to the error scale.
    pub atol: f64,
    pub max_steps: usize,
}

impl RkOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

impl Default for RkOptions {
    fn default() -> Self {
        Self { tol: 1e-10, atol: 1e-300, max_steps: 5_000_000 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RkStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

impl std::ops::AddAssign for RkStats {
    fn add_assign(&mut self, rhs: Self) {
        self.accepted += rhs.accepted;
        self.rejected += rhs.rejected;
        self.evaluations += rhs.evaluations;
    }
}

/// Resumable Dormand-Prince integrator for `y' = f(x, y)`.
pub struct Dopri5<F>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    f: F,
    x: f64,
    y: Vec<Complex64>,
    h: Option<f64>,
    k: [Vec<Complex64>; 7],
    ytmp: Vec<Complex64>,
    fsal_valid: bool,
    err_old: f64,
    opts: RkOptions,
    stats: RkStats,
}

fn inf_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

impl<F> Dopri5<F>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    pub fn new(f: F, x0: f64, y0: Vec<Complex64>, opts: RkOptions) -> Self {
        let n = y0.len();
        let zero = || vec![Complex64::new(0.0, 0.0); n];
        Self {
            f,
            x: x0,
            y: y0,
            h: None,
            k: [zero(), zero(), zero(), zero(), zero(), zero(), zero()],
            ytmp: zero(),
            fsal_valid: false,
            err_old: 1e-4,
            opts,
            stats: RkStats::default(),
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn state(&self) -> &[Complex64] {
        &self.y
    }

    /// Mutable access to the state; invalidates the cached derivative.
    pub fn state_mut(&mut self) -> &mut [Complex64] {
        self.fsal_valid = false;
        &mut self.y
    }

    pub fn stats(&self) -> RkStats {
        self.stats
    }

    fn eval(&mut self, x: f64, which: usize, from_tmp: bool) {
        let src = if from_tmp { &self.ytmp } else { &self.y };
        (self.f)(x, src, &mut self.k[which]);
        self.stats.evaluations += 1;
    }

    fn initial_step(&mut self, dir: f64, span: f64) -> f64 {
        let sc = self.opts.atol + self.opts.tol * inf_norm(&self.y);
        let d0 = inf_norm(&self.y) / sc;
        let d1 = inf_norm(&self.k[0]) / sc;
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(span);
        for i in 0..self.y.len() {
            self.ytmp[i] = self.y[i] + self.k[0][i] * (dir * h0);
        }
        let x1 = self.x + dir * h0;
        self.eval(x1, 1, true);
        let d2 = self.k[1]
            .iter()
            .zip(&self.k[0])
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
            / sc
            / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span)
    }

    /// Integrates up to `x_end` (either direction), landing on it exactly.
    pub fn advance_to(&mut self, x_end: f64) -> Result<()> {
        self.advance_to_with(x_end, |_, _| false)
    }

    /// Like [`advance_to`](Self::advance_to) but calls `on_step` after every
    /// accepted step. The callback may modify the state in place; it must
    /// return `true` when it did so.
    pub fn advance_to_with(
        &mut self,
        x_end: f64,
        mut on_step: impl FnMut(f64, &mut [Complex64]) -> bool,
    ) -> Result<()> {
        let span = (x_end - self.x).abs();
        if span == 0.0 {
            return Ok(());
        }
        let dir = (x_end - self.x).signum();
        let n = self.y.len();
        let h_min = STEP_UNDERFLOW_RATIO * span.max(f64::MIN_POSITIVE);
        if !self.fsal_valid {
            let x = self.x;
            self.eval(x, 0, false);
            self.fsal_valid = true;
        }
        let mut h = match self.h {
            Some(h) => h.min(span),
            None => self.initial_step(dir, span),
        };
        let mut steps = 0usize;
        loop {
            let remaining = (x_end - self.x) * dir;
            if remaining <= 0.0 {
                break;
            }
            let last = h >= remaining * (1.0 - 1e-12);
            if last {
                h = remaining;
            }
            if h < h_min && !last {
                return Err(Error::StepUnderflow { x: self.x, h });
            }
            steps += 1;
            if steps > self.opts.max_steps {
                return Err(Error::StepUnderflow { x: self.x, h });
            }
            let hs = dir * h;
            let x = self.x;

            for i in 0..n {
                self.ytmp[i] = self.y[i] + self.k[0][i] * (hs * A21);
            }
            self.eval(x + C2 * hs, 1, true);
            for i in 0..n {
                self.ytmp[i] = self.y[i] + (self.k[0][i] * A31 + self.k[1][i] * A32) * hs;
            }
            self.eval(x + C3 * hs, 2, true);
            for i in 0..n {
                self.ytmp[i] = self.y[i]
                    + (self.k[0][i] * A41 + self.k[1][i] * A42 + self.k[2][i] * A43) * hs;
            }
            self.eval(x + C4 * hs, 3, true);
            for i in 0..n {
                self.ytmp[i] = self.y[i]
                    + (self.k[0][i] * A51
                        + self.k[1][i] * A52
                        + self.k[2][i] * A53
                        + self.k[3][i] * A54)
                        * hs;
            }
            self.eval(x + C5 * hs, 4, true);
            for i in 0..n {
                self.ytmp[i] = self.y[i]
                    + (self.k[0][i] * A61
                        + self.k[1][i] * A62
                        + self.k[2][i] * A63
                        + self.k[3][i] * A64
                        + self.k[4][i] * A65)
                        * hs;
            }
            self.eval(x + hs, 5, true);
            for i in 0..n {
                self.ytmp[i] = self.y[i]
                    + (self.k[0][i] * A71
                        + self.k[2][i] * A73
                        + self.k[3][i] * A74
                        + self.k[4][i] * A75
                        + self.k[5][i] * A76)
                        * hs;
            }
            self.eval(x + hs, 6, true);

            let scale = self.opts.atol
                + self.opts.tol * inf_norm(&self.y).max(inf_norm(&self.ytmp));
            let mut err_sq = 0.0;
            for i in 0..n {
                let e = (self.k[0][i] * E1
                    + self.k[2][i] * E3
                    + self.k[3][i] * E4
                    + self.k[4][i] * E5
                    + self.k[5][i] * E6
                    + self.k[6][i] * E7)
                    * hs;
                err_sq += e.norm_sqr();
            }
            let err = (err_sq / n.max(1) as f64).sqrt() / scale;
            if !err.is_finite() {
                self.stats.rejected += 1;
                h *= FAC_MIN;
                continue;
            }

            let expo = 0.2 - BETA * 0.75;
            let fac11 = err.powf(expo);
            if err <= 1.0 {
                let fac = (fac11 / self.err_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                self.err_old = err.max(1e-4);
                self.stats.accepted += 1;
                std::mem::swap(&mut self.y, &mut self.ytmp);
                self.k.swap(0, 6);
                self.x = if last { x_end } else { x + hs };
                let h_next = h / fac;
                if !last {
                    h = h_next;
                }
                self.h = Some(h_next);
                let x_now = self.x;
                if on_step(x_now, &mut self.y) {
                    self.eval(x_now, 0, false);
                }
                if !self.y.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                    return Err(Error::NonFinite(format!("integrator state at x = {x_now}")));
                }
            } else {
                self.stats.rejected += 1;
                h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            }
        }
        Ok(())
    }
}

/// Result of [`rk_integrate`].
#[derive(Debug, Clone)]
pub struct RkSolution {
    pub y: CMatrix,
    pub stats: RkStats,
}

/// Integrates the matrix ODE `Y' = f(x, Y)` from `x0` to `x1`.
pub fn rk_integrate(
    f: impl Fn(f64, &CMatrix) -> CMatrix,
    x0: f64,
    x1: f64,
    y0: &CMatrix,
    tol: f64,
) -> Result<RkSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let (rows, cols) = (y0.rows(), y0.cols());
    let rhs = |x: f64, y: &[Complex64], dy: &mut [Complex64]| {
        let ym = CMatrix::from_vec_unchecked(rows, cols, y.to_vec());
        let d = f(x, &ym);
        dy.copy_from_slice(d.as_slice());
    };
    let mut stepper = Dopri5::new(rhs, x0, y0.as_slice().to_vec(), RkOptions::with_tol(tol));
    stepper.advance_to(x1)?;
    let stats = stepper.stats();
    Ok(RkSolution {
        y: CMatrix::from_vec_unchecked(rows, cols, stepper.state().to_vec()),
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn zero_rhs_keeps_identity() {
        let sol = rk_integrate(|_, y| CMatrix::zeros(y.rows(), y.cols()), 0.0, 1.0, &CMatrix::identity(3), 1e-10)
            .unwrap();
        assert_eq!(sol.y, CMatrix::identity(3));
    }

    #[test]
    fn exponential_growth() {
        let sol = rk_integrate(|_, y| y.clone(), 0.0, 1.0, &CMatrix::scalar(c(1.0)), 1e-10).unwrap();
        assert!((sol.y[(0, 0)].re - std::f64::consts::E).abs() < 1e-9);
        assert!(sol.stats.accepted > 0);
    }

    #[test]
    fn matrix_exponential_oracle() {
        // exp of [[0,1],[1,0]] is [[cosh, sinh],[sinh, cosh]].
        let a = CMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let sol = rk_integrate(|_, y| &a * y, 0.0, 1.0, &CMatrix::identity(2), 1e-11).unwrap();
        let expected = CMatrix::from_real_rows(&[
            &[1f64.cosh(), 1f64.sinh()],
            &[1f64.sinh(), 1f64.cosh()],
        ]);
        assert!(sol.y.max_abs_diff(&expected) < 1e-10);
    }

    #[test]
    fn backward_integration() {
        let sol = rk_integrate(|_, y| y.clone(), 1.0, 0.0, &CMatrix::scalar(c(1.0)), 1e-11).unwrap();
        assert!((sol.y[(0, 0)].re - (-1f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn convergence_order_on_exponential() {
        // Global error against e must shrink as tolerance tightens; the
        // observed order relative to the step count should be at least 4.
        let mut last: Option<(f64, usize)> = None;
        for tol in [1e-5, 1e-6, 1e-7, 1e-8] {
            let sol = rk_integrate(|_, y| y.clone(), 0.0, 1.0, &CMatrix::scalar(c(1.0)), tol).unwrap();
            let err = (sol.y[(0, 0)].re - std::f64::consts::E).abs();
            let steps = sol.stats.accepted;
            if let Some((prev_err, prev_steps)) = last {
                assert!(err < prev_err, "error did not decrease: {err} vs {prev_err}");
                if steps > prev_steps {
                    let order = (prev_err / err).ln() / (steps as f64 / prev_steps as f64).ln();
                    assert!(order >= 4.0, "observed order {order}");
                }
            }
            last = Some((err, steps));
        }
    }

    #[test]
    fn fixed_step_rejection_reports_underflow() {
        // y' = y^2 blows up at x = 1.
        let res = rk_integrate(
            |_, y| CMatrix::scalar(y[(0, 0)] * y[(0, 0)]),
            0.0,
            2.0,
            &CMatrix::scalar(c(1.0)),
            1e-8,
        );
        assert!(res.is_err());
    }
}
