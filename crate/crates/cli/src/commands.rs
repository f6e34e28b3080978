use std::f64::consts::PI;
use std::fmt::Write as _;

use detline_core::numcore::Complex64;
use detline_core::oracle::eigenvalues;
use detline_core::secondorder::{constant_and_zeta0, ExampleBc};
use detline_core::zetadet::{constant_c, det_general_angle, first_order_det, DetResult};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{DerivConvention, ProblemConfig};
use crate::error::{CliError, CliResult};
use crate::suite::{run_suite, DEFAULT_SEED};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Det,
    Constant,
    Zeta0,
    Spectrum,
    Validate,
    Report,
}

impl Command {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "det" => Self::Det,
            "constant" => Self::Constant,
            "zeta0" => Self::Zeta0,
            "spectrum" => Self::Spectrum,
            "validate" => Self::Validate,
            "report" => Self::Report,
            _ => return None,
        })
    }

    /// Whether the command reads a problem configuration.
    pub fn needs_config(self) -> bool {
        self != Self::Validate
    }
}

/// Command line overrides of configuration values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Flags {
    pub json: bool,
    pub deriv_convention: Option<DerivConvention>,
    pub tol: Option<f64>,
    pub window: Option<(f64, f64)>,
    pub basis_terms: Option<usize>,
    pub seed: Option<u64>,
}

impl Flags {
    pub fn apply(&self, config: &mut ProblemConfig) {
        if let Some(c) = self.deriv_convention {
            config.deriv_convention = c;
        }
        if self.tol.is_some() {
            config.options.tol = self.tol;
        }
        if self.window.is_some() {
            config.options.window = self.window;
        }
        if self.basis_terms.is_some() {
            config.options.basis_terms = self.basis_terms;
        }
    }
}

/// Result of a command: a JSON document, a text rendering and the exit status.
#[derive(Clone, Debug)]
pub struct Output {
    pub document: Value,
    pub text: String,
    pub exit_code: i32,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result types serialize")
}

fn fmt_c(z: Complex64) -> String {
    format!("{:.10} {} {:.10}i", z.re, if z.im < 0.0 { '-' } else { '+' }, z.im.abs())
}

fn determinant(config: &ProblemConfig) -> CliResult<DetResult> {
    let op = config.operator()?;
    let bc = config.boundary()?;
    let plan = config.plan();
    let r = if config.angle != PI {
        det_general_angle(&op, &bc, config.angle, &plan)?
    } else if op.order() == 1 {
        first_order_det(&op, &bc, &plan)?
    } else {
        constant_c(&op, &bc, &plan)?
    };
    Ok(r)
}

fn det_section(r: &DetResult) -> (Value, String) {
    let text = format!(
        "det = {}\ndet_pi = {}\nC = {}\nlog C = {}\nzeta(0) = {}\nwindow = [{}, {}], residual = {:.2e}\n",
        fmt_c(r.det),
        fmt_c(r.det_pi),
        fmt_c(r.c),
        fmt_c(r.log_c),
        fmt_c(r.zeta0),
        r.window.0,
        r.window.1,
        r.diagnostics.residual
    );
    (to_value(r), text)
}

fn constant_section(r: &DetResult) -> (Value, String) {
    let doc = json!({
        "log_c": r.log_c,
        "c": r.c,
        "window": r.window,
        "fit": r.fit,
        "diagnostics": r.diagnostics,
    });
    let text = format!("log C = {}\nC = {}\nresidual = {:.2e}\n", fmt_c(r.log_c), fmt_c(r.c), r.diagnostics.residual);
    (doc, text)
}

fn zeta0_section(config: &ProblemConfig, r: &DetResult) -> CliResult<(Value, String)> {
    let mut doc = json!({ "zeta0": r.zeta0, "window": r.window, "residual": r.diagnostics.residual });
    let mut text = format!("zeta(0) = {}\n", fmt_c(r.zeta0));
    if config.order == 2 {
        if let Some(blocks) = ExampleBc::from_boundary(&config.boundary()?) {
            if let Ok((_, half_degree)) = constant_and_zeta0(&blocks) {
                let matches = (r.zeta0 - half_degree).norm() < 1e-3;
                let note = if matches { "matches ½·deg M" } else { "differs from ½·deg M" };
                doc["half_degree"] = json!(half_degree);
                doc["note"] = json!(note);
                let _ = writeln!(text, "½·deg M = {half_degree}: {note}");
            }
        }
    }
    Ok((doc, text))
}

fn spectrum_section(config: &ProblemConfig) -> CliResult<(Value, String)> {
    let op = config.operator()?;
    let bc = config.boundary()?;
    let s = eigenvalues(&op, &bc, config.spectrum.count, config.spectrum_region())?;
    let mut text = String::new();
    for (l, m) in s.eigenvalues.iter().zip(&s.multiplicities) {
        let _ = writeln!(text, "{} (multiplicity {m})", fmt_c(*l));
    }
    Ok((to_value(&s), text))
}

/// Runs `cmd`. `config` may be `None` only for `validate`.
pub fn run_command(cmd: Command, config: Option<&ProblemConfig>, flags: &Flags) -> CliResult<Output> {
    let seed = flags.seed.unwrap_or(DEFAULT_SEED);
    if cmd == Command::Validate {
        let outcomes = run_suite(seed);
        let passed = outcomes.iter().all(|o| o.passed);
        let mut text = String::new();
        for o in &outcomes {
            let _ = writeln!(text, "{:>2} {} {}: {}", o.id, if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
        }
        let document = json!({ "seed": seed, "passed": passed, "criteria": outcomes });
        return Ok(Output { document, text, exit_code: if passed { 0 } else { 3 } });
    }
    let mut config = config.cloned().ok_or_else(|| CliError::Validation("a configuration file is required".into()))?;
    flags.apply(&mut config);
    let (document, text) = match cmd {
        Command::Det => det_section(&determinant(&config)?),
        Command::Constant => constant_section(&determinant(&config)?),
        Command::Zeta0 => zeta0_section(&config, &determinant(&config)?)?,
        Command::Spectrum => spectrum_section(&config)?,
        Command::Report => return Ok(report(&config, seed)),
        Command::Validate => unreachable!("handled above"),
    };
    Ok(Output { document, text, exit_code: 0 })
}

/// Every per-problem section; failing sections carry their error instead.
fn report(config: &ProblemConfig, seed: u64) -> Output {
    let mut doc = serde_json::Map::new();
    doc.insert("seed".into(), json!(seed));
    doc.insert("config".into(), json!(config.to_toml()));
    let mut text = String::new();
    let mut failed = false;
    let mut section = |name: &str, r: CliResult<(Value, String)>| {
        match r {
            Ok((v, t)) => {
                doc.insert(name.into(), v);
                let _ = write!(text, "[{name}]\n{t}");
            }
            Err(e) => {
                failed = true;
                doc.insert(name.into(), json!({ "error": e.to_string() }));
                let _ = writeln!(text, "[{name}]\nerror: {e}");
            }
        }
    };
    match determinant(config) {
        Ok(r) => {
            section("det", Ok(det_section(&r)));
            section("constant", Ok(constant_section(&r)));
            section("zeta0", zeta0_section(config, &r));
        }
        Err(e) => section("det", Err(e)),
    }
    section("spectrum", spectrum_section(config));
    Output { document: Value::Object(doc), text, exit_code: if failed { 1 } else { 0 } }
}
