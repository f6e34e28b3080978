//! Problem documents in TOML syntax.
//!
//! ```toml
//! interval = [0.0, 1.0]
//! order = 2
//! dim = 1
//! deriv_convention = "D"        # or "ddx"
//! angle = 3.141592653589793
//! complex_expressions = false
//! coefficients = ["mu^2", "0", "1"]   # a_0 .. a_n; m x m arrays when dim > 1
//!
//! [parameters]
//! mu = 1.0
//!
//! [boundary]
//! Ra = [[-1, 0], [0, -1]]       # entries are reals or [re, im]
//! Rb = [[1, 0], [0, 1]]
//!
//! [options]                     # all optional
//! tol = 1e-12
//! window = [900.0, 9e4]
//! basis_terms = 8
//! samples = 40
//!
//! [spectrum]                    # optional
//! count = 10
//! interval = [0.0, 1e4]         # or: box = { re = [..], im = [..] }
//! ```
//!
//! `[boundary]` may instead give `preset = "periodic" | "antiperiodic" |
//! "dirichlet" | "twisted"` (with `beta` for the twist).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use detline_core::numcore::{CMatrix, Complex64};
use detline_core::operator::{BoundaryCondition, Coefficient, EllipticOperator};
use detline_core::oracle::SearchRegion;
use detline_core::zetadet::SamplingPlan;
use toml::{Table, Value};

use crate::error::{CliError, CliResult, Diagnostic, DiagnosticKind};
use crate::expr::{parse_expr, ExprAst, Params};

/// Number of points on the interval where every expression is probed.
pub const PROBE_POINTS: usize = 5;

/// Meaning of the coefficient list.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DerivConvention {
    /// `l = sum a_k D^k` with `D = -i d/dx`.
    D,
    /// `l = sum b_k (d/dx)^k`.
    Ddx,
}

impl DerivConvention {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "D" => Some(Self::D),
            "ddx" => Some(Self::Ddx),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::D => "D",
            Self::Ddx => "ddx",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PipelineOptions {
    pub tol: Option<f64>,
    pub window: Option<(f64, f64)>,
    pub basis_terms: Option<usize>,
    pub samples: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumOptions {
    pub count: usize,
    pub region: Option<SearchRegion>,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self { count: 10, region: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemConfig {
    pub interval: (f64, f64),
    pub order: usize,
    pub dim: usize,
    pub deriv_convention: DerivConvention,
    pub angle: f64,
    pub complex_expressions: bool,
    pub parameters: BTreeMap<String, Complex64>,
    /// `coefficients[k][i][j]`: entry `(i, j)` of the `k`-th coefficient.
    pub coefficients: Vec<Vec<Vec<String>>>,
    pub ra: CMatrix,
    pub rb: CMatrix,
    pub options: PipelineOptions,
    pub spectrum: SpectrumOptions,
}

struct Diagnostics<'a> {
    text: &'a str,
    list: Vec<Diagnostic>,
}

impl Diagnostics<'_> {
    fn push(&mut self, kind: DiagnosticKind, key: &str, message: impl Into<String>) {
        let line = locate(self.text, key);
        self.list.push(Diagnostic { kind, key: Some(key.to_string()), line, message: message.into() });
    }
}

/// Line of `key = ...` inside the table named by the prefix of the dotted key.
fn locate(text: &str, key: &str) -> Option<usize> {
    let base = key.split('[').next().unwrap_or(key);
    let (table, leaf) = match base.rsplit_once('.') {
        Some((t, l)) => (t, l),
        None => ("", base),
    };
    let mut current = String::new();
    for (n, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') && !t.starts_with("[[") {
            current = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            continue;
        }
        if current == table {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim().trim_matches('"') == leaf {
                    return Some(n + 1);
                }
            }
        }
    }
    None
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn as_complex(v: &Value) -> Option<Complex64> {
    if let Some(r) = as_f64(v) {
        return Some(Complex64::new(r, 0.0));
    }
    match v.as_array()?.as_slice() {
        [re, im] => Some(Complex64::new(as_f64(re)?, as_f64(im)?)),
        _ => None,
    }
}

fn as_pair(v: &Value) -> Option<(f64, f64)> {
    match v.as_array()?.as_slice() {
        [a, b] => Some((as_f64(a)?, as_f64(b)?)),
        _ => None,
    }
}

fn complex_matrix(v: &Value, size: usize) -> Result<CMatrix, String> {
    let rows = v.as_array().ok_or("expected an array of rows")?;
    if rows.len() != size {
        return Err(format!("expected {size} rows, found {}", rows.len()));
    }
    let mut m = CMatrix::zeros(size, size);
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_array().ok_or(format!("row {i} is not an array"))?;
        if row.len() != size {
            return Err(format!("expected {size} columns in row {i}, found {}", row.len()));
        }
        for (j, e) in row.iter().enumerate() {
            m[(i, j)] = as_complex(e).ok_or(format!("entry ({i}, {j}) is not a real or [re, im] pair"))?;
        }
    }
    Ok(m)
}

fn expression_entry(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Integer(i) => Some(i.to_string()),
        Value::Float(f) => Some(format!("{f:?}")),
        _ => None,
    }
}

fn coefficient_matrix(v: &Value, m: usize) -> Result<Vec<Vec<String>>, String> {
    if let Some(s) = expression_entry(v) {
        // a single expression times the identity
        return Ok((0..m)
            .map(|i| (0..m).map(|j| if i == j { s.clone() } else { "0".into() }).collect())
            .collect());
    }
    let rows = v.as_array().ok_or("expected an expression or an array of rows")?;
    if rows.len() != m {
        return Err(format!("expected {m} rows, found {}", rows.len()));
    }
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let row = row.as_array().ok_or(format!("row {i} is not an array"))?;
            if row.len() != m {
                return Err(format!("expected {m} columns in row {i}, found {}", row.len()));
            }
            row.iter()
                .enumerate()
                .map(|(j, e)| expression_entry(e).ok_or(format!("entry ({i}, {j}) is not an expression")))
                .collect()
        })
        .collect()
}

fn preset(name: &str, order: usize, m: usize, beta: f64) -> Result<BoundaryCondition, String> {
    Ok(match name {
        "periodic" => BoundaryCondition::periodic(order, m),
        "antiperiodic" => BoundaryCondition::antiperiodic(order, m),
        "dirichlet" if order == 2 => BoundaryCondition::dirichlet(m),
        "twisted" if order == 1 && m == 1 => BoundaryCondition::twisted(beta),
        "dirichlet" => return Err("dirichlet preset needs order 2".into()),
        "twisted" => return Err("twisted preset needs a scalar first order operator".into()),
        other => return Err(format!("unknown preset `{other}`")),
    })
}

/// Parses and validates a problem document.
pub fn parse_config(text: &str) -> CliResult<ProblemConfig> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        CliError::Config(vec![Diagnostic {
            kind: DiagnosticKind::Parse,
            key: None,
            line,
            message: e.message().to_string(),
        }])
    })?;
    let mut diag = Diagnostics { text, list: Vec::new() };
    let shape = DiagnosticKind::Shape;

    let interval = match table.get("interval").map(as_pair) {
        Some(Some((a, b))) if a < b && a.is_finite() && b.is_finite() => (a, b),
        Some(_) => {
            diag.push(shape, "interval", "expected [a, b] with a < b");
            (0.0, 1.0)
        }
        None => {
            diag.push(shape, "interval", "missing");
            (0.0, 1.0)
        }
    };
    let positive = |key: &str, diag: &mut Diagnostics<'_>, default: Option<usize>| -> usize {
        match table.get(key) {
            Some(Value::Integer(i)) if *i >= 1 => *i as usize,
            Some(_) => {
                diag.push(shape, key, "expected a positive integer");
                1
            }
            None => default.unwrap_or_else(|| {
                diag.push(shape, key, "missing");
                1
            }),
        }
    };
    let order = positive("order", &mut diag, None);
    let dim = positive("dim", &mut diag, Some(1));
    let deriv_convention = match table.get("deriv_convention") {
        None => DerivConvention::D,
        Some(v) => match v.as_str().and_then(DerivConvention::parse) {
            Some(c) => c,
            None => {
                diag.push(shape, "deriv_convention", "expected \"D\" or \"ddx\"");
                DerivConvention::D
            }
        },
    };
    let angle = match table.get("angle") {
        None => PI,
        Some(v) => as_f64(v).unwrap_or_else(|| {
            diag.push(shape, "angle", "expected a number");
            PI
        }),
    };
    let complex_expressions = match table.get("complex_expressions") {
        None => false,
        Some(v) => v.as_bool().unwrap_or_else(|| {
            diag.push(shape, "complex_expressions", "expected true or false");
            false
        }),
    };

    let mut parameters = BTreeMap::new();
    if let Some(p) = table.get("parameters") {
        match p.as_table() {
            Some(t) => {
                for (k, v) in t {
                    match as_complex(v) {
                        Some(z) => {
                            parameters.insert(k.clone(), z);
                        }
                        None => diag.push(shape, &format!("parameters.{k}"), "expected a real or [re, im]"),
                    }
                }
            }
            None => diag.push(shape, "parameters", "expected a table"),
        }
    }

    let mut coefficients = Vec::new();
    match table.get("coefficients").and_then(Value::as_array) {
        Some(list) if list.len() == order + 1 => {
            for (k, v) in list.iter().enumerate() {
                match coefficient_matrix(v, dim) {
                    Ok(m) => coefficients.push(m),
                    Err(e) => diag.push(shape, &format!("coefficients[{k}]"), e),
                }
            }
        }
        Some(list) => diag.push(
            shape,
            "coefficients",
            format!("expected {} coefficient matrices (order + 1), found {}", order + 1, list.len()),
        ),
        None => diag.push(shape, "coefficients", "missing array of coefficient matrices"),
    }

    let size = order * dim;
    let (mut ra, mut rb) = (CMatrix::zeros(size, size), CMatrix::zeros(size, size));
    match table.get("boundary").and_then(Value::as_table) {
        Some(b) => {
            if let Some(name) = b.get("preset") {
                let beta = b.get("beta").and_then(as_f64).unwrap_or(0.0);
                match name.as_str().map(|n| preset(n, order, dim, beta)) {
                    Some(Ok(bc)) => {
                        ra = bc.ra().clone();
                        rb = bc.rb().clone();
                    }
                    Some(Err(e)) => diag.push(shape, "boundary.preset", e),
                    None => diag.push(shape, "boundary.preset", "expected a string"),
                }
            } else {
                for (key, target) in [("Ra", &mut ra), ("Rb", &mut rb)] {
                    match b.get(key).map(|v| complex_matrix(v, size)) {
                        Some(Ok(m)) => *target = m,
                        Some(Err(e)) => diag.push(shape, &format!("boundary.{key}"), format!("{e} (need {size}x{size})")),
                        None => diag.push(shape, &format!("boundary.{key}"), "missing"),
                    }
                }
            }
        }
        None => diag.push(shape, "boundary", "missing table"),
    }

    let mut options = PipelineOptions::default();
    if let Some(o) = table.get("options").and_then(Value::as_table) {
        if let Some(v) = o.get("tol") {
            match as_f64(v) {
                Some(t) if t > 0.0 => options.tol = Some(t),
                _ => diag.push(shape, "options.tol", "expected a positive number"),
            }
        }
        if let Some(v) = o.get("window") {
            match as_pair(v) {
                Some((lo, hi)) if 0.0 < lo && lo < hi => options.window = Some((lo, hi)),
                _ => diag.push(shape, "options.window", "expected [xmin, xmax] with 0 < xmin < xmax"),
            }
        }
        for (key, target) in [("basis_terms", &mut options.basis_terms), ("samples", &mut options.samples)] {
            if let Some(v) = o.get(key) {
                match v.as_integer() {
                    Some(i) if i > 0 => *target = Some(i as usize),
                    _ => diag.push(shape, &format!("options.{key}"), "expected a positive integer"),
                }
            }
        }
    }

    let mut spectrum = SpectrumOptions::default();
    if let Some(s) = table.get("spectrum").and_then(Value::as_table) {
        if let Some(v) = s.get("count") {
            match v.as_integer() {
                Some(i) if i > 0 => spectrum.count = i as usize,
                _ => diag.push(shape, "spectrum.count", "expected a positive integer"),
            }
        }
        if let Some(v) = s.get("interval") {
            match as_pair(v) {
                Some((lo, hi)) if lo < hi => spectrum.region = Some(SearchRegion::Real { lo, hi }),
                _ => diag.push(shape, "spectrum.interval", "expected [lo, hi]"),
            }
        }
        if let Some(v) = s.get("box") {
            let re = v.get("re").and_then(as_pair);
            let im = v.get("im").and_then(as_pair);
            match (re, im) {
                (Some(re), Some(im)) if re.0 < re.1 && im.0 < im.1 => {
                    spectrum.region = Some(SearchRegion::Box { re, im })
                }
                _ => diag.push(shape, "spectrum.box", "expected { re = [lo, hi], im = [lo, hi] }"),
            }
        }
    }

    if !diag.list.is_empty() {
        return Err(CliError::Config(diag.list));
    }
    let config = ProblemConfig {
        interval,
        order,
        dim,
        deriv_convention,
        angle,
        complex_expressions,
        parameters,
        coefficients,
        ra,
        rb,
        options,
        spectrum,
    };
    let errors = config.check_expressions(text);
    if !errors.is_empty() {
        return Err(CliError::Config(errors));
    }
    Ok(config)
}

/// Compiled coefficient entries.
struct Compiled {
    asts: Vec<Vec<Vec<ExprAst>>>,
}

impl ProblemConfig {
    fn compile(&self, text: &str) -> Result<Compiled, Vec<Diagnostic>> {
        let mut errors = Vec::new();
        let mut asts = Vec::new();
        for (k, m) in self.coefficients.iter().enumerate() {
            let mut rows = Vec::new();
            for (i, row) in m.iter().enumerate() {
                let mut out = Vec::new();
                for (j, s) in row.iter().enumerate() {
                    let key = format!("coefficients[{k}][{i}][{j}]");
                    match parse_expr(s) {
                        Ok(a) => {
                            let mut names = Vec::new();
                            a.parameters(&mut names);
                            for p in names.iter().filter(|p| !self.parameters.contains_key(*p)) {
                                errors.push(Diagnostic {
                                    kind: DiagnosticKind::Expr,
                                    key: Some(key.clone()),
                                    line: locate(text, "coefficients"),
                                    message: format!("unknown parameter `{p}` in `{s}`"),
                                });
                            }
                            out.push(a);
                        }
                        Err(e) => {
                            errors.push(Diagnostic {
                                kind: DiagnosticKind::Expr,
                                key: Some(key),
                                line: locate(text, "coefficients"),
                                message: format!("`{s}`: {e}"),
                            });
                            out.push(ExprAst::Num(0.0));
                        }
                    }
                }
                rows.push(out);
            }
            asts.push(rows);
        }
        if errors.is_empty() {
            Ok(Compiled { asts })
        } else {
            Err(errors)
        }
    }

    /// Probe points: equispaced, both endpoints included.
    pub fn probe_points(&self) -> Vec<f64> {
        let (a, b) = self.interval;
        (0..PROBE_POINTS).map(|j| a + (b - a) * j as f64 / (PROBE_POINTS - 1) as f64).collect()
    }

    fn check_expressions(&self, text: &str) -> Vec<Diagnostic> {
        let compiled = match self.compile(text) {
            Ok(c) => c,
            Err(e) => return e,
        };
        let mut errors = Vec::new();
        for (k, m) in compiled.asts.iter().enumerate() {
            for (i, row) in m.iter().enumerate() {
                for (j, a) in row.iter().enumerate() {
                    for x in self.probe_points() {
                        if let Err(e) = a.eval(x, &self.parameters, self.complex_expressions) {
                            errors.push(Diagnostic {
                                kind: DiagnosticKind::Expr,
                                key: Some(format!("coefficients[{k}][{i}][{j}]")),
                                line: locate(text, "coefficients"),
                                message: format!("`{}` at probe x = {x}: {e}", self.coefficients[k][i][j]),
                            });
                            break;
                        }
                    }
                }
            }
        }
        errors
    }

    /// The operator in the `D` convention.
    pub fn operator(&self) -> CliResult<EllipticOperator> {
        let compiled = self.compile("").map_err(CliError::Config)?;
        let params: Arc<Params> = Arc::new(self.parameters.clone());
        let complex = self.complex_expressions;
        let m = self.dim;
        let mut coeffs = Vec::with_capacity(self.order + 1);
        for (k, entries) in compiled.asts.into_iter().enumerate() {
            // (d/dx)^k = i^k D^k
            let factor = match self.deriv_convention {
                DerivConvention::D => Complex64::new(1.0, 0.0),
                DerivConvention::Ddx => Complex64::i().powi(k as i32),
            };
            let variable = entries.iter().flatten().any(ExprAst::depends_on_x);
            if !variable {
                let mut c = CMatrix::zeros(m, m);
                for (i, row) in entries.iter().enumerate() {
                    for (j, a) in row.iter().enumerate() {
                        c[(i, j)] = factor * eval_or_nan(a, 0.0, &params, complex);
                    }
                }
                coeffs.push(Coefficient::constant(c));
                continue;
            }
            let params = Arc::clone(&params);
            coeffs.push(Coefficient::function(m, move |x| {
                CMatrix::from_fn(m, m, |i, j| factor * eval_or_nan(&entries[i][j], x, &params, complex))
            }));
        }
        Ok(EllipticOperator::new(self.interval.0, self.interval.1, coeffs)?)
    }

    pub fn boundary(&self) -> CliResult<BoundaryCondition> {
        Ok(BoundaryCondition::new(self.ra.clone(), self.rb.clone())?)
    }

    /// Sampling plan with the configured overrides.
    pub fn plan(&self) -> SamplingPlan {
        let mut plan = SamplingPlan::default();
        if let Some(t) = self.options.tol {
            plan.tol = t;
        }
        if self.options.window.is_some() {
            plan.window = self.options.window;
        }
        if self.options.basis_terms.is_some() {
            plan.basis_terms = self.options.basis_terms;
        }
        if let Some(s) = self.options.samples {
            plan.samples = s;
        }
        plan
    }

    /// Canonical TOML form; parsing it gives back an equal configuration.
    pub fn to_toml(&self) -> String {
        let mut t = Table::new();
        t.insert("interval".into(), Value::Array(vec![self.interval.0.into(), self.interval.1.into()]));
        t.insert("order".into(), Value::Integer(self.order as i64));
        t.insert("dim".into(), Value::Integer(self.dim as i64));
        t.insert("deriv_convention".into(), self.deriv_convention.as_str().into());
        t.insert("angle".into(), self.angle.into());
        t.insert("complex_expressions".into(), self.complex_expressions.into());
        let coeffs = self
            .coefficients
            .iter()
            .map(|m| {
                Value::Array(
                    m.iter().map(|row| Value::Array(row.iter().map(|s| Value::String(s.clone())).collect())).collect(),
                )
            })
            .collect();
        t.insert("coefficients".into(), Value::Array(coeffs));
        let params: Table = self.parameters.iter().map(|(k, v)| (k.clone(), complex_value(*v))).collect();
        t.insert("parameters".into(), Value::Table(params));
        let mut b = Table::new();
        b.insert("Ra".into(), matrix_value(&self.ra));
        b.insert("Rb".into(), matrix_value(&self.rb));
        t.insert("boundary".into(), Value::Table(b));
        let mut o = Table::new();
        if let Some(v) = self.options.tol {
            o.insert("tol".into(), v.into());
        }
        if let Some((lo, hi)) = self.options.window {
            o.insert("window".into(), Value::Array(vec![lo.into(), hi.into()]));
        }
        if let Some(v) = self.options.basis_terms {
            o.insert("basis_terms".into(), Value::Integer(v as i64));
        }
        if let Some(v) = self.options.samples {
            o.insert("samples".into(), Value::Integer(v as i64));
        }
        t.insert("options".into(), Value::Table(o));
        let mut s = Table::new();
        s.insert("count".into(), Value::Integer(self.spectrum.count as i64));
        match self.spectrum.region {
            Some(SearchRegion::Real { lo, hi }) => {
                s.insert("interval".into(), Value::Array(vec![lo.into(), hi.into()]));
            }
            Some(SearchRegion::Box { re, im }) => {
                let mut bx = Table::new();
                bx.insert("re".into(), Value::Array(vec![re.0.into(), re.1.into()]));
                bx.insert("im".into(), Value::Array(vec![im.0.into(), im.1.into()]));
                s.insert("box".into(), Value::Table(bx));
            }
            None => {}
        }
        t.insert("spectrum".into(), Value::Table(s));
        toml::to_string(&t).expect("tables of plain values always serialize")
    }

    /// Default spectrum search region when none is configured.
    pub fn spectrum_region(&self) -> SearchRegion {
        self.spectrum.region.unwrap_or(if self.order.is_multiple_of(2) {
            SearchRegion::Real { lo: -1e3, hi: 1e6 }
        } else {
            SearchRegion::Real { lo: -1e3, hi: 1e3 }
        })
    }
}

fn eval_or_nan(a: &ExprAst, x: f64, params: &Params, complex: bool) -> Complex64 {
    a.eval(x, params, complex).unwrap_or(Complex64::new(f64::NAN, f64::NAN))
}

fn complex_value(z: Complex64) -> Value {
    if z.im == 0.0 {
        Value::Float(z.re)
    } else {
        Value::Array(vec![z.re.into(), z.im.into()])
    }
}

fn matrix_value(m: &CMatrix) -> Value {
    Value::Array(
        (0..m.rows())
            .map(|i| Value::Array((0..m.cols()).map(|j| complex_value(m[(i, j)])).collect()))
            .collect(),
    )
}
