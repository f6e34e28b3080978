//! The gauge transform `l -> U^{-1} l U` that removes the subleading
//! coefficient, and the resulting relation between the constants `C`.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numcore::{
    cheb_coefficients, cheb_derivative, cheb_eval, cheb_tail, det, expm, inverse, lobatto_nodes,
    quad, rk_integrate, CMatrix, MatrixInterpolant,
};
use crate::operator::{minus_i_pow, BoundaryCondition, Coefficient, EllipticOperator};
use crate::zetadet::{constant_c, SamplingPlan};

const DEGREES: [usize; 6] = [16, 32, 64, 128, 256, 512];
const TAIL_TOL: f64 = 1e-13;
const ODE_TOL: f64 = 1e-13;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// `G = -(i/n) a_n^{-1} a_{n-1}`, the generator of `U' = G U`.
fn generator(op: &EllipticOperator, x: f64) -> Result<CMatrix> {
    let n = op.order();
    let an = op.coefficient(n).eval(x);
    let inv = inverse(&an).map_err(|_| Error::SingularLeadingCoefficient { x })?;
    Ok((&inv * &op.coefficient(n - 1).eval(x)).scale(Complex64::new(0.0, -1.0 / n as f64)))
}

/// Chebyshev series of `G` and of its first `count` derivatives.
fn generator_derivatives(op: &EllipticOperator, count: usize) -> Result<Vec<Vec<CMatrix>>> {
    let (a, b) = op.interval();
    for &deg in &DEGREES {
        let vals = lobatto_nodes(a, b, deg)
            .into_iter()
            .map(|x| generator(op, x))
            .collect::<Result<Vec<_>>>()?;
        let coeffs = cheb_coefficients(&vals);
        if cheb_tail(&coeffs) < TAIL_TOL || deg == *DEGREES.last().unwrap() {
            let mut out = vec![coeffs];
            for _ in 0..count {
                let next = cheb_derivative(out.last().unwrap(), b - a);
                out.push(next);
            }
            return Ok(out);
        }
    }
    unreachable!("degree list is nonempty")
}

/// Tail of every Chebyshev series relative to the largest coefficient of all
/// of them, so families that vanish identically do not look unresolved.
fn global_tail(families: &[Vec<CMatrix>]) -> f64 {
    let series: Vec<Vec<CMatrix>> = families.iter().map(|v| cheb_coefficients(v)).collect();
    let scale = series.iter().flatten().map(|c| c.max_abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    series.iter().map(|c| cheb_tail(c) * c.iter().map(|m| m.max_abs()).fold(0.0, f64::max)).fold(0.0, f64::max)
        / scale
}

/// `U^{(r)}` for `r = 0..=order` from `U' = G U` and the derivatives of `G`.
fn u_derivatives(u: &CMatrix, g: &[CMatrix], order: usize) -> Vec<CMatrix> {
    let mut out = vec![u.clone()];
    for r in 1..=order {
        let mut acc = CMatrix::zeros(u.rows(), u.cols());
        for s in 0..r {
            let term = &g[s] * &out[r - 1 - s];
            acc = &acc + &term.scale(real(binomial(r - 1, s)));
        }
        out.push(acc);
    }
    out
}

/// `(U^{-1})^{(r)}` for `r = 0..=order` from `V' = -V G`.
fn v_derivatives(v: &CMatrix, g: &[CMatrix], order: usize) -> Vec<CMatrix> {
    let mut out = vec![v.clone()];
    for r in 1..=order {
        let mut acc = CMatrix::zeros(v.rows(), v.cols());
        for s in 0..r {
            let term = &out[r - 1 - s] * &g[s];
            acc = &acc - &term.scale(real(binomial(r - 1, s)));
        }
        out.push(acc);
    }
    out
}

/// Lower block triangular `T(U)_{ij} = C(i, j) (U^{-1})^{(i-j)}`.
fn lift(v_derivs: &[CMatrix], n: usize) -> CMatrix {
    let m = v_derivs[0].rows();
    let mut t = CMatrix::zeros(n * m, n * m);
    for i in 0..n {
        for j in 0..=i {
            t.set_block(i * m, j * m, &v_derivs[i - j].scale(real(binomial(i, j))));
        }
    }
    t
}

/// Transformed coefficients `~a_j = U^{-1} sum_{k >= j} C(k, j) a_k D^{k-j} U`.
fn transformed_coefficients(
    op: &EllipticOperator,
    x: f64,
    u_derivs: &[CMatrix],
    v: &CMatrix,
) -> Vec<CMatrix> {
    let (n, m) = (op.order(), op.dim());
    (0..=n)
        .map(|j| {
            let mut acc = CMatrix::zeros(m, m);
            for k in j..=n {
                let du = u_derivs[k - j].scale(minus_i_pow(k - j) * binomial(k, j));
                acc = &acc + &(&op.coefficient(k).eval(x) * &du);
            }
            v * &acc
        })
        .collect()
}

/// `U` on ascending `xs` starting from `U(a) = 1`.
fn gauge_trajectory(op: &EllipticOperator, xs: &[f64], g_const: Option<&CMatrix>) -> Result<Vec<CMatrix>> {
    let a = op.interval().0;
    let m = op.dim();
    if let Some(g) = g_const {
        return xs.iter().map(|&x| expm(&g.scale(real(x - a)))).collect();
    }
    let mut out = Vec::with_capacity(xs.len());
    let (mut x0, mut u) = (a, CMatrix::identity(m));
    for &x in xs {
        if x > x0 {
            let sol = rk_integrate(
                |t, y| match generator(op, t) {
                    Ok(g) => &g * y,
                    Err(_) => CMatrix::from_fn(m, m, |_, _| Complex64::new(f64::NAN, 0.0)),
                },
                x0,
                x,
                &u,
                ODE_TOL,
            )?;
            u = sol.y;
            x0 = x;
        }
        out.push(u.clone());
    }
    Ok(out)
}

/// `U`, `T(U)` at both ends, and the transformed boundary problem.
#[derive(Clone, Debug)]
pub struct GaugeTransform {
    /// `U` sampled at the interpolation nodes.
    pub u_traj: Vec<(f64, CMatrix)>,
    pub det_ub: Complex64,
    pub t_a: CMatrix,
    pub t_b: CMatrix,
    pub op_u: EllipticOperator,
    pub bc_u: BoundaryCondition,
    /// Interpolation degree used for the transformed coefficients.
    pub degree: usize,
}

impl GaugeTransform {
    /// `exp(int_a^b tr G)`, the value `det U(b)` must take.
    pub fn det_ub_closed_form(op: &EllipticOperator) -> Result<Complex64> {
        let (a, b) = op.interval();
        let integral = quad(|x| generator(op, x).map(|g| g.trace()).unwrap_or(real(f64::NAN)), a, b, 1e-13)?;
        Ok(integral.exp())
    }

    /// Largest entry of the transformed subleading coefficient on `points` grid points.
    pub fn subleading_residual(&self, points: usize) -> f64 {
        let k = self.op_u.order() - 1;
        self.op_u
            .grid(points)
            .into_iter()
            .map(|x| self.op_u.coefficient(k).eval(x).max_abs())
            .fold(0.0, f64::max)
    }
}

/// Builds the gauge transform of `(op, bc)`.
pub fn solve_gauge(op: &EllipticOperator, bc: &BoundaryCondition) -> Result<GaugeTransform> {
    let (n, m) = (op.order(), op.dim());
    if n < 2 {
        return Err(Error::OrderTooLow { order: n });
    }
    bc.check_for(op)?;
    let (a, b) = op.interval();
    let g_series = generator_derivatives(op, n)?;
    let g_at = |x: f64| -> Vec<CMatrix> { g_series.iter().map(|c| cheb_eval(c, a, b, x)).collect() };
    let g_scale = g_series[0].iter().map(|c| c.max_abs()).fold(1.0, f64::max);
    let g_const = if g_series[1].iter().all(|c| c.max_abs() < 1e-14 * g_scale) {
        Some(generator(op, a)?)
    } else {
        None
    };

    let mut accepted = None;
    for &deg in &DEGREES {
        let nodes = lobatto_nodes(a, b, deg);
        let us = gauge_trajectory(op, &nodes, g_const.as_ref())?;
        let mut coeffs: Vec<Vec<CMatrix>> = vec![Vec::with_capacity(deg + 1); n + 1];
        for (&x, u) in nodes.iter().zip(&us) {
            let ud = u_derivatives(u, &g_at(x), n);
            let v = inverse(u)?;
            for (k, c) in transformed_coefficients(op, x, &ud, &v).into_iter().enumerate() {
                coeffs[k].push(c);
            }
        }
        let tail = global_tail(&coeffs);
        if tail < TAIL_TOL || deg == *DEGREES.last().unwrap() {
            accepted = Some((deg, nodes, us, coeffs));
            break;
        }
    }
    let (degree, nodes, us, coeffs) = accepted.expect("degree list is nonempty");

    let coefficients = coeffs
        .into_iter()
        .map(|vals| {
            let first = vals[0].clone();
            let spread = vals.iter().map(|v| v.max_abs_diff(&first)).fold(0.0, f64::max);
            if spread <= 1e-12 * first.max_abs().max(1.0) {
                Coefficient::constant(first)
            } else {
                let interp = MatrixInterpolant::new(nodes.clone(), vals);
                Coefficient::function(m, move |x| interp.eval(x))
            }
        })
        .collect();
    let op_u = EllipticOperator::new(a, b, coefficients)?;

    let u_a = us.first().expect("nodes include a").clone();
    let u_b = us.last().expect("nodes include b").clone();
    let t_a = lift(&v_derivatives(&inverse(&u_a)?, &g_at(a), n - 1), n);
    let t_b = lift(&v_derivatives(&inverse(&u_b)?, &g_at(b), n - 1), n);
    let ra = &(&t_b * bc.ra()) * &inverse(&t_a)?;
    let rb = &(&t_b * bc.rb()) * &inverse(&t_b)?;
    Ok(GaugeTransform {
        u_traj: nodes.into_iter().zip(us).collect(),
        det_ub: det(&u_b)?,
        t_a,
        t_b,
        op_u,
        bc_u: BoundaryCondition::new(ra, rb)?,
        degree,
    })
}

/// Both sides of `C(l) = exp(i int tr(a_n^{-1} a_{n-1})) C(l^u)`.
#[derive(Clone, Debug, Serialize)]
pub struct CRelation {
    pub log_c: Complex64,
    pub log_c_u: Complex64,
    /// `exp(i int_a^b tr(a_n^{-1} a_{n-1}))`.
    pub factor: Complex64,
    /// `|C - factor C^u|`.
    pub defect: f64,
    pub det_pi: Complex64,
    pub det_pi_u: Complex64,
}

/// Runs the constant pipeline on `(op, bc)` and on its gauge transform.
pub fn c_relation_check(
    op: &EllipticOperator,
    bc: &BoundaryCondition,
    plan: &SamplingPlan,
) -> Result<CRelation> {
    let gauge = solve_gauge(op, bc)?;
    let (lhs, rhs) = std::thread::scope(|s| {
        let h = s.spawn(|| constant_c(&gauge.op_u, &gauge.bc_u, plan));
        (constant_c(op, bc, plan), h.join().expect("pipeline thread panicked"))
    });
    let (lhs, rhs) = (lhs?, rhs?);
    // exp(i int tr(a_n^{-1} a_{n-1})) = exp(-n int tr G) = det U(b)^{-n}.
    let factor = GaugeTransform::det_ub_closed_form(op)?.powi(-(op.order() as i32));
    Ok(CRelation {
        log_c: lhs.log_c,
        log_c_u: rhs.log_c,
        factor,
        defect: (lhs.c - factor * rhs.c).norm(),
        det_pi: lhs.det_pi,
        det_pi_u: rhs.det_pi,
    })
}
