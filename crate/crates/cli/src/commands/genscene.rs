//! `stipple genscene`: deterministic synthetic scene generation.

use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;
use stipple_core::scene::DEFAULT_RESOLUTION;
use stipple_core::synth::{self, SceneKind};

#[derive(clap::Args, Serialize)]
pub struct Args {
    /// Scene kind: boxes, blobs, or shell.
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output scene file.
    #[arg(long)]
    out: PathBuf,
    /// Base field resolution per axis.
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    resolution: u32,
    /// Number of camera poses on the ring.
    #[arg(long, default_value_t = synth::DEFAULT_CAMERA_COUNT)]
    cameras: usize,
}

pub fn run(args: Args) -> Result<i32> {
    let kind: SceneKind = args.kind.parse()?;
    let scene = synth::generate(kind, args.resolution, args.seed, args.cameras)
        .context("scene generation failed")?;
    scene.save(&args.out).context("writing scene container")?;
    let manifest_path = args.out.with_extension("manifest.json");
    crate::manifest::write(&manifest_path, "genscene", &args)?;
    println!(
        "wrote {} ({} voxels, {} cameras)",
        args.out.display(),
        scene.field.len(),
        scene.cameras.len()
    );
    Ok(0)
}
