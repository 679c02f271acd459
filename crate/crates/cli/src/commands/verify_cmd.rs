//! `stipple verify`: run the module property suites with fixed seeds.
//! Exits 1 if any check fails.

use anyhow::Result;
use stipple_core::verify::{run_suite, SUITES};

#[derive(clap::Args)]
pub struct Args {
    /// Suites to run: gradcheck, sampling, tonemap, envmap. All when empty.
    suites: Vec<String>,
}

pub fn run(args: Args) -> Result<i32> {
    let names: Vec<String> = if args.suites.is_empty() {
        SUITES.iter().map(|s| s.to_string()).collect()
    } else {
        args.suites
    };
    let mut all_passed = true;
    for name in &names {
        let report = run_suite(name)?;
        for check in &report.checks {
            let tag = if check.passed { "PASS" } else { "FAIL" };
            println!("{tag} {}/{}: {}", report.suite, check.name, check.detail);
        }
        all_passed &= report.passed();
    }
    Ok(if all_passed { 0 } else { 1 })
}
