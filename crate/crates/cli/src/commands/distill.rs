//! `stipple distill-env`: fit an environment map to a background oracle.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use nalgebra::Vector3;
use serde::Serialize;
use stipple_core::env::{distill_env, DistillConfig, ShBackgroundOracle};
use stipple_core::io::save_env_map;

#[derive(clap::Args, Serialize)]
pub struct Args {
    /// Output base path (writes <base>.f32 and <base>.json).
    #[arg(long)]
    out: PathBuf,
    /// Map size as HxW with W = 2H, e.g. 256x512.
    #[arg(long, default_value = "256x512")]
    size: String,
    #[arg(long, default_value_t = 1000)]
    iters: u32,
    /// Random directions per iteration.
    #[arg(long, default_value_t = 1 << 16)]
    batch: usize,
    #[arg(long, default_value_t = 0.01)]
    lr_start: f64,
    #[arg(long, default_value_t = 0.001)]
    lr_end: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Background oracle: "sh:<seed>" or "constant:r,g,b,a".
    #[arg(long, default_value = "sh:17")]
    oracle: String,
    /// Use the full-scale schedule (1024x2048, 1000 iters, 2^21 batch).
    #[arg(long, default_value_t = false)]
    full_scale: bool,
}

fn parse_size(s: &str) -> Result<u32> {
    let (h, w) = s
        .split_once('x')
        .context("size must look like 256x512")?;
    let h: u32 = h.parse().context("bad height")?;
    let w: u32 = w.parse().context("bad width")?;
    if w != 2 * h {
        bail!("equirectangular maps need width = 2 * height");
    }
    Ok(h)
}

pub fn run(args: Args) -> Result<i32> {
    let config = if args.full_scale {
        DistillConfig {
            seed: args.seed,
            ..DistillConfig::full_scale()
        }
    } else {
        DistillConfig {
            height: parse_size(&args.size)?,
            iters: args.iters,
            batch: args.batch,
            lr_start: args.lr_start,
            lr_end: args.lr_end,
            seed: args.seed,
            ..Default::default()
        }
    };

    let (map, report) = if let Some(spec) = args.oracle.strip_prefix("sh:") {
        let oracle_seed: u64 = spec.parse().context("bad sh oracle seed")?;
        let sh = ShBackgroundOracle::new(oracle_seed);
        distill_env(&|d: Vector3<f64>| sh.eval(d), &config)?
    } else if let Some(spec) = args.oracle.strip_prefix("constant:") {
        let parts: Vec<f64> = spec
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .context("bad constant oracle")?;
        if parts.len() != 4 {
            bail!("constant oracle needs four components");
        }
        let value = [parts[0], parts[1], parts[2], parts[3]];
        distill_env(&move |_d: Vector3<f64>| value, &config)?
    } else {
        bail!("unknown oracle '{}' (expected sh:<seed> or constant:r,g,b,a)", args.oracle);
    };

    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    save_env_map(&map, &args.out)?;
    crate::manifest::write(&args.out.with_extension("manifest.json"), "distill-env", &args)?;

    // Deterministic convergence record.
    let mut csv = std::fs::File::create(args.out.with_extension("losses.csv"))?;
    writeln!(csv, "iteration,heldout_mse")?;
    for (i, loss) in report.losses.iter().enumerate() {
        writeln!(csv, "{i},{loss:e}")?;
    }
    let psnr = -10.0 * report.final_mse.log10();
    println!(
        "distilled {}x{} map: held-out mse {:.3e} ({psnr:.1} dB)",
        map.height, map.width, report.final_mse
    );
    Ok(0)
}
