//! `stipple` command-line interface.
//!
//! Subcommands: `genscene`, `render`, `bench`, `distill-env`, `tonemap`,
//! `verify`. Exit codes: 0 success, 1 verification failure, 2 usage error,
//! 3 I/O error. All outputs except the wall-clock timing tables are
//! byte-identical across runs and thread counts for fixed seeds.

mod commands;
mod manifest;
mod preview;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "stipple", version, about = "Probability-field point rendering toolkit")]
struct Cli {
    /// Worker thread count (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene container.
    Genscene(commands::genscene::Args),
    /// Render a camera trajectory from a scene.
    Render(commands::render::Args),
    /// Sorting cost accounting and timings on synthetic loads.
    Bench(commands::bench::Args),
    /// Distill a background oracle into an environment map.
    DistillEnv(commands::distill::Args),
    /// Forward or inverse tonemap a feature dump.
    Tonemap(commands::tonemap_cmd::Args),
    /// Run verification suites.
    Verify(commands::verify_cmd::Args),
}

fn classify(err: &anyhow::Error) -> i32 {
    if let Some(core) = err.downcast_ref::<stipple_core::Error>() {
        return match core {
            stipple_core::Error::Io(_) | stipple_core::Error::Format(_) => 3,
            _ => 2,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 3;
    }
    2
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // Ignore failure if a global pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let result = match cli.command {
        Command::Genscene(args) => commands::genscene::run(args),
        Command::Render(args) => commands::render::run(args),
        Command::Bench(args) => commands::bench::run(args),
        Command::DistillEnv(args) => commands::distill::run(args),
        Command::Tonemap(args) => commands::tonemap_cmd::run(args),
        Command::Verify(args) => commands::verify_cmd::run(args),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(classify(&err));
        }
    }
}
