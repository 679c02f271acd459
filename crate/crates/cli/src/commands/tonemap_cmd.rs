//! `stipple tonemap`: file-to-file forward or inverse tonemapping of
//! feature dumps.

use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;
use stipple_core::io::{load_feature_image, save_feature_image};
use stipple_core::tonemap::{
    tonemap_forward_one, tonemap_inverse_one, ResponseCurve, DEFAULT_KNOTS,
};

#[derive(clap::Args, Serialize)]
pub struct Args {
    /// Input dump base path (reads <base>.f32 / <base>.json).
    #[arg(long)]
    input: PathBuf,
    /// Output dump base path.
    #[arg(long)]
    output: PathBuf,
    /// Apply the inverse map (display domain back to HDR).
    #[arg(long, default_value_t = false)]
    inverse: bool,
    #[arg(long, default_value_t = 0.0)]
    ev: f64,
    /// Response curve JSON (array of control values); identity when absent.
    #[arg(long)]
    curve: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<i32> {
    let curve = match &args.curve {
        Some(path) => {
            let text = std::fs::read(path).context("reading curve")?;
            serde_json::from_slice::<ResponseCurve>(&text).context("parsing curve")?
        }
        None => ResponseCurve::identity(DEFAULT_KNOTS),
    };
    let mut img = load_feature_image(&args.input).context("loading feature dump")?;
    for px in img.features.iter_mut() {
        for v in px.iter_mut() {
            *v = if args.inverse {
                tonemap_inverse_one(*v, args.ev, &curve)?
            } else {
                tonemap_forward_one(*v, args.ev, &curve)
            };
        }
    }
    if let Some(parent) = args.output.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    save_feature_image(&img, &args.output)?;
    crate::manifest::write(&args.output.with_extension("manifest.json"), "tonemap", &args)?;
    println!(
        "{} {} -> {}",
        if args.inverse { "inverted" } else { "tonemapped" },
        args.input.display(),
        args.output.display()
    );
    Ok(0)
}
