use std::process::ExitCode;

use detline_cli::suite::{run_suite, DEFAULT_SEED};

fn main() -> ExitCode {
    let outcomes = run_suite(DEFAULT_SEED);
    for o in &outcomes {
        println!(
            "criterion {:>2} [{}] {} ({:.1} s): {}",
            o.id,
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.seconds,
            o.detail
        );
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} of {} criteria passed", outcomes.len() - failed, outcomes.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
