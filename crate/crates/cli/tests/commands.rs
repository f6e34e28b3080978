use std::io::Write;
use std::process::Command as Process;

use detline_cli::commands::{run_command, Command, Flags};
use detline_cli::config::parse_config;
use detline_core::numcore::Complex64;
use serde_json::Value;

const PERIODIC: &str = r#"
interval = [0.0, 1.0]
order = 2
coefficients = ["mu^2", "0", "1"]

[parameters]
mu = 1.0

[boundary]
preset = "periodic"

[spectrum]
count = 5
"#;

// B = 1 in the Robin-type rows u(0) = u'(1) + 2 u(1), u'(0) = 3 u(1)
const INVERTIBLE_B: &str = r#"
interval = [0.0, 1.0]
order = 2
coefficients = ["1", "0", "1"]

[boundary]
Ra = [[1, 0], [0, 1]]
Rb = [[-2, -1], [-3, 0]]
"#;

fn complex(v: &Value) -> Complex64 {
    Complex64::new(v["re"].as_f64().or_else(|| v[0].as_f64()).unwrap(), v["im"].as_f64().or_else(|| v[1].as_f64()).unwrap())
}

fn run(cmd: Command, text: &str) -> detline_cli::commands::Output {
    let cfg = parse_config(text).unwrap();
    run_command(cmd, Some(&cfg), &Flags::default()).unwrap()
}

#[test]
fn periodic_determinant() {
    let out = run(Command::Det, PERIODIC);
    assert_eq!(out.exit_code, 0);
    let det_pi = complex(&out.document["det_pi"]);
    let exact = 4.0 * 0.5f64.sinh().powi(2);
    assert!((det_pi.re - exact).abs() < 1e-6 && det_pi.im.abs() < 1e-6, "{det_pi}");
    assert!((det_pi.re - 1.0861612).abs() < 1e-6);
    assert!((complex(&out.document["c"]) + 1.0).norm() < 1e-6);
    assert!(out.text.contains("det_pi = 1.08616"));
}

#[test]
fn zeta0_note_for_invertible_b() {
    let out = run(Command::Zeta0, INVERTIBLE_B);
    let z = complex(&out.document["zeta0"]);
    assert!((z - 0.5).norm() < 1e-4, "{z}");
    assert_eq!(out.document["note"], "matches ½·deg M");
}

#[test]
fn spectrum_lists_periodic_doublets() {
    let out = run(Command::Spectrum, PERIODIC);
    let values: Vec<f64> = out.document["eigenvalues"].as_array().unwrap().iter().map(|v| complex(v).re).collect();
    let mults: Vec<u64> = out.document["multiplicities"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert!((values[0] - 1.0).abs() < 1e-8);
    assert_eq!(&mults[..2], &[1, 2]);
    let k = 2.0 * std::f64::consts::PI;
    assert!((values[1] - (1.0 + k * k)).abs() < 1e-7);
}

#[test]
fn report_is_deterministic() {
    let a = run(Command::Report, PERIODIC);
    let b = run(Command::Report, PERIODIC);
    assert_eq!(a.document, b.document);
    assert_eq!(a.exit_code, 0);
    for key in ["det", "constant", "zeta0", "spectrum", "config", "seed"] {
        assert!(a.document.get(key).is_some(), "{key}");
    }
}

#[test]
fn flags_override_the_window() {
    let cfg = parse_config(PERIODIC).unwrap();
    let flags = Flags { window: Some((400.0, 40000.0)), ..Flags::default() };
    let out = run_command(Command::Constant, Some(&cfg), &flags).unwrap();
    assert_eq!(out.document["window"][0].as_f64(), Some(400.0));
    assert!((complex(&out.document["c"]) + 1.0).norm() < 1e-6);
}

fn binary(args: &[&str]) -> std::process::Output {
    Process::new(env!("CARGO_BIN_EXE_detline")).args(args).output().unwrap()
}

fn temp_config(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

#[test]
fn binary_exit_codes() {
    let good = temp_config(PERIODIC);
    let path = good.path().to_str().unwrap();
    let out = binary(&["det", path, "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((complex(&doc["det_pi"]).re - 1.0861612).abs() < 1e-6);

    let bad = temp_config("interval = [0.0, 1.0]\norder = 2\ncoefficients = [\"1\", \"0\", \"1\"]\n[boundary]\nRa = [[1]]\nRb = [[1]]\n");
    let out = binary(&["det", bad.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("boundary.Ra"));

    assert_eq!(binary(&["det", "/nonexistent/problem.toml"]).status.code(), Some(2));
    assert_ne!(binary(&["frobnicate"]).status.code(), Some(0));
}
