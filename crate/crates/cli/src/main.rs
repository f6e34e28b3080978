use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use detline_cli::commands::{run_command, Command, Flags};
use detline_cli::config::{parse_config, DerivConvention};
use detline_cli::{CliError, CliResult};

/// Zeta-regularized determinants of elliptic boundary value problems on an interval.
#[derive(Debug, Parser)]
#[command(name = "detline", version)]
struct Args {
    /// det, constant, zeta0, spectrum, validate or report
    #[arg(value_parser = parse_command)]
    command: Command,
    /// Problem configuration (TOML); optional for `validate`
    config: Option<PathBuf>,
    /// Print the machine-readable JSON document
    #[arg(long)]
    json: bool,
    /// Coefficient convention: D (= -i d/dx) or ddx
    #[arg(long, value_parser = parse_convention)]
    deriv_convention: Option<DerivConvention>,
    /// Integration tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// Fit window as xmin,xmax
    #[arg(long, value_parser = parse_window)]
    window: Option<(f64, f64)>,
    /// Number of basis terms in the asymptotic fit
    #[arg(long)]
    basis_terms: Option<usize>,
    /// Seed for randomized fixtures
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_command(s: &str) -> Result<Command, String> {
    Command::parse(s).ok_or_else(|| format!("unknown command `{s}`"))
}

fn parse_convention(s: &str) -> Result<DerivConvention, String> {
    DerivConvention::parse(s).ok_or_else(|| format!("expected D or ddx, got `{s}`"))
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected xmin,xmax")?;
    let (a, b): (f64, f64) = (a.trim().parse().map_err(|e| format!("{e}"))?, b.trim().parse().map_err(|e| format!("{e}"))?);
    if !(0.0 < a && a < b) {
        return Err("need 0 < xmin < xmax".into());
    }
    Ok((a, b))
}

fn run(args: &Args) -> CliResult<detline_cli::commands::Output> {
    let config = match &args.config {
        Some(path) => Some(parse_config(&std::fs::read_to_string(path)?)?),
        None if args.command.needs_config() => {
            return Err(CliError::Io(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                "a configuration path is required",
            )))
        }
        None => None,
    };
    let flags = Flags {
        json: args.json,
        deriv_convention: args.deriv_convention,
        tol: args.tol,
        window: args.window,
        basis_terms: args.basis_terms,
        seed: args.seed,
    };
    run_command(args.command, config.as_ref(), &flags)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(out) => {
            if args.json {
                println!("{}", serde_json::to_string_pretty(&out.document).expect("json values serialize"));
            } else {
                print!("{}", out.text);
            }
            ExitCode::from(out.exit_code as u8)
        }
        Err(e) => {
            if args.json {
                let doc = serde_json::json!({ "error": e.to_string(), "diagnostics": e.diagnostics() });
                println!("{}", serde_json::to_string_pretty(&doc).expect("json values serialize"));
            } else {
                for d in e.diagnostics() {
                    eprintln!("{d}");
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
