use detline_core::numcore::Complex64;
use detline_core::regularize::*;

#[test]
fn pure_terms_have_vanishing_regularized_integral() {
    let plan = RegIntegralPlan { inf_window: (2.0, 40.0), ..Default::default() };
    for alpha in [-2.5, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0] {
        for k in 0..=2u32 {
            let t = Term::new(alpha, k);
            let basis = ExponentBasis::new(vec![t]).unwrap();
            let r = reg_integral(|x| Ok(Complex64::new(t.eval(x), 0.0)), &basis, &basis, &plan).unwrap();
            assert!(r.value.norm() < 1e-7, "alpha {alpha} k {k}: {}", r.value);
        }
    }
}

#[test]
fn shift_defect_matches_closed_form() {
    let plan = RegIntegralPlan::default();
    for alpha in [-2, -1, 0, 1, 2, 3] {
        for x in [0.5, 1.0, 2.0] {
            let numeric = shift_defect_numeric(alpha as f64, x, &plan).unwrap();
            let exact = shift_defect(alpha, x);
            assert!((numeric - exact).norm() < 1e-6, "alpha {alpha} x {x}: {numeric} vs {exact}");
        }
    }
    for alpha in [-1.5, -0.5, 0.5] {
        let numeric = shift_defect_numeric(alpha, 1.5, &plan).unwrap();
        assert!(numeric.norm() < 1e-6, "alpha {alpha}: {numeric}");
    }
}
