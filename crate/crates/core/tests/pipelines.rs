use std::f64::consts::PI;

use detline_core::numcore::{CMatrix, Complex64};
use detline_core::operator::{BoundaryCondition, Coefficient, EllipticOperator};
use detline_core::oracle::{closed_form_det, FixtureParams};
use detline_core::zetadet::*;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn laplacian() -> EllipticOperator {
    EllipticOperator::scalar_constant(0.0, 1.0, &[c(1.0), c(0.0), c(1.0)]).unwrap()
}

fn closed(case: &str) -> Complex64 {
    closed_form_det(case, FixtureParams::default()).unwrap().value
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn periodic_fixture() {
    let r = constant_c(&laplacian(), &BoundaryCondition::periodic(2, 1), &SamplingPlan::default()).unwrap();
    assert!((r.c + 1.0).norm() < 1e-6, "{}", r.c);
    assert!(rel(r.det_pi, closed("periodic")) < 1e-6);
    assert!(zeta_zero(&r).norm() < 1e-3);
}

#[test]
fn dirichlet_fixture() {
    let r = constant_c(&laplacian(), &BoundaryCondition::dirichlet(1), &SamplingPlan::default()).unwrap();
    assert!(rel(r.det_pi, closed("dirichlet")) < 1e-6, "{}", r.det_pi);
    assert!((zeta_zero(&r) + 0.5).norm() < 1e-3);
}

#[test]
fn antiperiodic_fixture() {
    let r = constant_c(&laplacian(), &BoundaryCondition::antiperiodic(2, 1), &SamplingPlan::default()).unwrap();
    assert!((r.c - 1.0).norm() < 1e-6);
    assert!(rel(r.det_pi, closed("antiperiodic")) < 1e-6);
}

#[test]
fn constant_ignores_the_potential() {
    let plan = SamplingPlan::default();
    let bc = BoundaryCondition::periodic(2, 1);
    let potentials: [Coefficient; 3] = [
        Coefficient::scalar(c(0.0)),
        Coefficient::scalar_function(|x| c((2.0 * PI * x).sin())),
        Coefficient::scalar_function(|x| c(5.0 * x * (1.0 - x))),
    ];
    let logs: Vec<Complex64> = potentials
        .into_iter()
        .map(|q| {
            let op = EllipticOperator::new(
                0.0,
                1.0,
                vec![q, Coefficient::scalar(c(0.0)), Coefficient::scalar(c(1.0))],
            )
            .unwrap();
            constant_c(&op, &bc, &plan).unwrap().log_c
        })
        .collect();
    for l in &logs[1..] {
        assert!((l - logs[0]).norm() < 1e-5, "{l} vs {}", logs[0]);
    }
}

#[test]
fn trace_route_agrees_with_determinant() {
    let op = laplacian();
    for (bc, case) in [(BoundaryCondition::periodic(2, 1), "periodic"), (BoundaryCondition::dirichlet(1), "dirichlet")] {
        let t = zeta_prime_via_trace(&op, &bc, &TracePlan::default()).unwrap();
        assert!(rel(t.det, closed(case)) < 1e-3, "{case}: {}", t.det);
    }
}

#[test]
fn boundary_rows_can_be_recombined() {
    let op = laplacian();
    let bc = BoundaryCondition::dirichlet(1);
    let g = CMatrix::from_real_rows(&[&[2.0, 1.0], &[-0.5, 3.0]]);
    let mixed = BoundaryCondition::new(&g * bc.ra(), &g * bc.rb()).unwrap();
    let plan = SamplingPlan::default();
    let a = constant_c(&op, &bc, &plan).unwrap();
    let b = constant_c(&op, &mixed, &plan).unwrap();
    assert!(rel(b.det_pi, a.det_pi) < 1e-6);
    assert!(rel(b.c * 6.5, a.c) < 1e-6);
}

fn derivative() -> EllipticOperator {
    EllipticOperator::scalar_constant(0.0, 1.0, &[c(0.0), c(1.0)]).unwrap()
}

#[test]
fn first_order_twist() {
    let plan = SamplingPlan::default();
    for beta in [PI / 3.0, PI] {
        let bc = BoundaryCondition::twisted(beta);
        let r = det_general_angle(&derivative(), &bc, PI / 2.0, &plan).unwrap();
        let expected = closed_form_det("twisted", FixtureParams { beta, ..Default::default() }).unwrap().value;
        assert!(rel(r.det, expected) < 1e-3, "beta {beta}: {}", r.det);
        assert!(r.diagnostics.residual < 1e-6);
        // scaling both boundary matrices leaves the determinant unchanged
        let s = det_general_angle(&derivative(), &bc.scaled(Complex64::new(0.3, 1.7)), PI / 2.0, &plan).unwrap();
        assert!(rel(s.det, r.det) < 1e-6);
    }
}

#[test]
fn angle_dependence_is_continuous() {
    let plan = SamplingPlan::default();
    let op = laplacian();
    let bc = BoundaryCondition::dirichlet(1);
    let base = det_general_angle(&op, &bc, PI, &plan).unwrap().det;
    for theta in [PI - 0.01, PI + 0.01] {
        let d = det_general_angle(&op, &bc, theta, &plan).unwrap().det;
        assert!(rel(d, base) < 0.02, "theta {theta}: {d} vs {base}");
    }
}

#[test]
fn first_order_trace_derivative() {
    let op = derivative();
    let bc = BoundaryCondition::twisted(PI / 3.0);
    let (rotated, _) = detline_core::operator::rotate_to_pi(&op, PI / 2.0);
    let t = regularized_trace(&rotated, &bc, 0.0, 1e-12).unwrap();
    // L = d/dx with f(1) = e^{i beta} f(0): finite part of sum over (i(2 pi k + beta))^{-1}
    let expected = Complex64::new(-0.5, -0.5 / (PI / 6.0).tan());
    assert!((t.value - expected).norm() < 1e-6, "{}", t.value);
    // d/dx log det R(x) = Tr (L + x)^{-1} away from the regularization
    let h = 1e-3;
    let x = 2.0;
    let lp = detline_core::fundsol::log_det_r(&rotated, &bc, c(x + h), 1e-13).unwrap();
    let lm = detline_core::fundsol::log_det_r(&rotated, &bc, c(x - h), 1e-13).unwrap();
    let slope = (lp.nearest_branch(lm.phase).as_complex() - lm.as_complex()) / (2.0 * h);
    let diff = trace_difference(&rotated, &bc, x, 1e-12).unwrap()
        - (trace_difference(&rotated, &bc, 1e-9, 1e-12).unwrap());
    let d0 = {
        let lp = detline_core::fundsol::log_det_r(&rotated, &bc, c(h), 1e-13).unwrap();
        let lm = detline_core::fundsol::log_det_r(&rotated, &bc, c(-h), 1e-13).unwrap();
        (lp.nearest_branch(lm.phase).as_complex() - lm.as_complex()) / (2.0 * h)
    };
    assert!((slope - d0 - diff).norm() < 1e-5, "{slope} {d0} {diff}");
}

#[test]
fn prediction_reproduces_direct_values() {
    let op = laplacian();
    let bc = BoundaryCondition::dirichlet(1);
    let r = constant_c(&op, &bc, &SamplingPlan::default()).unwrap();
    let (lo, hi) = r.window;
    let x = (lo * hi).sqrt();
    let direct = detline_core::fundsol::log_det_r(&op, &bc, c(x), 1e-13).unwrap().as_complex() + r.log_c;
    assert!((r.predicted_log_det(x) - direct).norm() < 1e-6);
}
