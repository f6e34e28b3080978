use detline_cli::config::{parse_config, DerivConvention};
use detline_cli::{CliError, DiagnosticKind};

const PERIODIC: &str = r#"
interval = [0.0, 1.0]
order = 2
dim = 1
coefficients = ["mu^2", "0", "1"]

[parameters]
mu = 1.0

[boundary]
Ra = [[1, 0], [0, 1]]
Rb = [[-1, 0], [0, -1]]
"#;

fn config_diagnostics(text: &str) -> Vec<detline_cli::Diagnostic> {
    match parse_config(text) {
        Err(CliError::Config(d)) => d,
        other => panic!("expected configuration diagnostics, got {other:?}"),
    }
}

#[test]
fn minimal_periodic_document() {
    let cfg = parse_config(PERIODIC).unwrap();
    assert_eq!(cfg.order, 2);
    assert_eq!(cfg.dim, 1);
    assert_eq!(cfg.deriv_convention, DerivConvention::D);
    assert_eq!(cfg.ra.rows(), 2);
    let op = cfg.operator().unwrap();
    assert_eq!(op.order(), 2);
    cfg.boundary().unwrap();
}

#[test]
fn wrong_boundary_shape_names_the_key() {
    let text = r#"
interval = [0.0, 1.0]
order = 2
coefficients = ["1", "0", "1"]

[boundary]
Ra = [[1, 0, 0], [0, 1, 0]]
Rb = [[-1, 0], [0, -1]]
"#;
    let d = config_diagnostics(text);
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].kind, DiagnosticKind::Shape);
    assert_eq!(d[0].key.as_deref(), Some("boundary.Ra"));
    assert_eq!(d[0].line, Some(7));
}

#[test]
fn singular_expression_is_reported() {
    let text = r#"
interval = [0.0, 1.0]
order = 2
coefficients = ["1/(x-0.5)", "0", "1"]

[boundary]
preset = "dirichlet"
"#;
    let d = config_diagnostics(text);
    assert!(d.iter().any(|d| d.kind == DiagnosticKind::Expr && d.key.as_deref() == Some("coefficients[0][0][0]")));
    assert_eq!(CliError::Config(d).exit_code(), 2);
}

#[test]
fn unknown_parameter_and_toml_errors() {
    let text = "interval = [0.0, 1.0]\norder = 2\ncoefficients = [\"nu\", \"0\", \"1\"]\n[boundary]\npreset = \"periodic\"\n";
    let d = config_diagnostics(text);
    assert!(d[0].message.contains("nu"));

    let d = config_diagnostics("interval = [0.0, 1.0]\norder = = 2\n");
    assert_eq!(d[0].kind, DiagnosticKind::Parse);
    assert_eq!(d[0].line, Some(2));
}

#[test]
fn missing_keys_are_collected() {
    let d = config_diagnostics("dim = 1\n");
    let keys: Vec<_> = d.iter().filter_map(|d| d.key.as_deref()).collect();
    for k in ["interval", "order", "coefficients", "boundary"] {
        assert!(keys.contains(&k), "{k} not in {keys:?}");
    }
}

#[test]
fn toml_round_trip() {
    let text = r#"
interval = [0.0, 2.0]
order = 2
dim = 1
deriv_convention = "ddx"
coefficients = ["k + sin(x)", "0.5", "1"]

[parameters]
k = [1.0, 0.5]

[boundary]
preset = "antiperiodic"

[options]
window = [100.0, 10000.0]
basis_terms = 8

[spectrum]
count = 4
"#;
    let cfg = parse_config(text).unwrap();
    let again = parse_config(&cfg.to_toml()).unwrap();
    assert_eq!(cfg, again);
}
