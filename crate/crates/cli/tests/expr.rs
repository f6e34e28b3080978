use std::f64::consts::{E, PI};

use detline_cli::expr::{parse_expr, EvalError, Params};
use detline_core::numcore::Complex64;

fn eval(text: &str, x: f64, params: &Params) -> Complex64 {
    parse_expr(text).unwrap_or_else(|e| panic!("{text}: {e}")).eval(x, params, false).unwrap()
}

fn params() -> Params {
    let mut p = Params::new();
    p.insert("mu".into(), Complex64::new(1.0, 0.0));
    p.insert("k".into(), Complex64::new(2.5, 0.0));
    p
}

#[test]
fn reference_table() {
    let x = 0.3f64;
    let table: &[(&str, f64)] = &[
        ("1", 1.0),
        ("2.5e-1", 0.25),
        ("x", x),
        ("-x", -x),
        ("x^2", x * x),
        ("-x^2", -(x * x)),
        ("2^3^2", 512.0),
        ("2^-1", 0.5),
        ("(1 + x)^2", (1.0 + x).powi(2)),
        ("1 - 2 - 3", -4.0),
        ("8 / 4 / 2", 1.0),
        ("2 * 3 + 4", 10.0),
        ("2 + 3 * 4", 14.0),
        ("--x", x),
        ("pi", PI),
        ("e", E),
        ("sin(x)", x.sin()),
        ("cos(2*pi*x)", (2.0 * PI * x).cos()),
        ("sinh(x)", x.sinh()),
        ("cosh(x)", x.cosh()),
        ("exp(-x)", (-x).exp()),
        ("log(1 + x)", (1.0 + x).ln()),
        ("sqrt(x)", x.sqrt()),
        ("abs(x - 1)", 0.7),
        ("mu^2", 1.0),
        ("k * x", 2.5 * x),
        ("5*x*(1 - x)", 5.0 * x * (1.0 - x)),
        ("exp(log(x))", x),
        ("sin(x)^2 + cos(x)^2", 1.0),
        ("1/(1 + x^2)", 1.0 / (1.0 + x * x)),
    ];
    assert_eq!(table.len(), 30);
    let p = params();
    for (text, want) in table {
        let got = eval(text, x, &p);
        assert!((got.re - want).abs() < 1e-14 && got.im.abs() < 1e-14, "{text}: {got} vs {want}");
    }
}

#[test]
fn documented_examples() {
    let p = params();
    assert_eq!(eval("mu^2", 0.0, &p), Complex64::new(1.0, 0.0));
    assert!((eval("sin(2*pi*x)", 0.25, &p) - 1.0).norm() < 1e-15);
    assert_eq!(eval("2*i + 3", 0.0, &p), Complex64::new(3.0, 2.0));
}

#[test]
fn display_round_trips() {
    let p = params();
    for text in ["-x^2 + 2^-1", "sin(2*pi*x) / (1 + mu)", "2^3^2", "(1 - x) * (2 + x)", "-(x + 1)^2"] {
        let ast = parse_expr(text).unwrap();
        let again = parse_expr(&ast.to_string()).unwrap();
        assert_eq!(ast, again, "{text} -> {ast}");
        assert_eq!(eval(text, 0.7, &p), again.eval(0.7, &p, false).unwrap());
    }
}

#[test]
fn parse_errors_carry_position() {
    for (text, pos) in [("1 +", 3), ("sin(x", 5), ("2 * * 3", 4), ("x $ 1", 2)] {
        let e = parse_expr(text).unwrap_err();
        assert_eq!(e.position, pos, "{text}: {e}");
    }
    assert!(parse_expr("foo(x)").is_err());
}

#[test]
fn evaluation_errors() {
    let p = params();
    let unknown = parse_expr("nu * x").unwrap().eval(0.5, &p, false);
    assert_eq!(unknown, Err(EvalError::UnknownParameter("nu".into())));
    let sqrt = parse_expr("sqrt(x - 1)").unwrap();
    assert!(matches!(sqrt.eval(0.0, &p, false), Err(EvalError::Domain(..))));
    let z = sqrt.eval(0.0, &p, true).unwrap();
    assert!((z - Complex64::new(0.0, 1.0)).norm() < 1e-15);
    assert!(matches!(parse_expr("1/(x - 0.5)").unwrap().eval(0.5, &p, false), Err(EvalError::NonFinite(_))));
}

#[test]
fn dependence_and_parameters() {
    let a = parse_expr("mu^2 + k").unwrap();
    assert!(!a.depends_on_x());
    let mut names = Vec::new();
    a.parameters(&mut names);
    names.sort();
    assert_eq!(names, ["k", "mu"]);
    assert!(parse_expr("sin(x)").unwrap().depends_on_x());
}
