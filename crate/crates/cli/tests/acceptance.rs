//! Runs every acceptance criterion at its stated tolerance and prints one
//! line per criterion. Exits nonzero if any criterion fails.

use std::process::ExitCode;

use taskcp_cli::acceptance::{library_quantile, quantile_oracle, run_suite, SuiteConfig};

/// Quantile that takes one order statistic too many.
fn off_by_one(scores: &[f64], alpha: f64) -> f64 {
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    let k = ((1.0 - alpha) * (s.len() as f64 + 1.0) - 1e-9).ceil() as usize + 1;
    s.get(k - 1).copied().unwrap_or(f64::INFINITY)
}

fn main() -> ExitCode {
    let reports = run_suite(&SuiteConfig::default());
    let mut ok = true;
    for r in &reports {
        println!("{r}");
        ok &= r.passed;
    }
    let mutant = quantile_oracle(off_by_one, 0, 1000);
    let control = quantile_oracle(library_quantile, 1, 1000);
    let caught = !mutant.passed && control.passed;
    println!(
        "{} mutation check: off-by-one quantile rejected ({})",
        if caught { "PASS" } else { "FAIL" },
        mutant.detail
    );
    ok &= caught;
    let passed = reports.iter().filter(|r| r.passed).count();
    println!("acceptance: {passed} of {} criteria passed", reports.len());
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
