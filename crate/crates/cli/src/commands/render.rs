//! `stipple render`: render a scene's camera ring with a chosen sampler,
//! splat mode, and sorting pipeline.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use stipple_core::env::EnvironmentMap;
use stipple_core::io::{load_env_map, save_feature_image, Scene};
use stipple_core::raster::{
    constant_background, render_single64, render_tiled, RenderOptions, SplatMode,
};
use stipple_core::sampling::{global_extract, mix64, sample_view, RingBuffer, SamplingConfig};
use stipple_core::scene::{AppearanceOracle, CameraView, DirectionCache, FeatureImage};
use stipple_core::sh::CHANNELS;

use crate::preview::PreviewFormat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerMode {
    /// Fresh view-specific clouds every frame.
    Perframe,
    /// Reuse the last `buffer` clouds, sampling one new cloud per frame.
    Ring,
    /// One global pre-extracted cloud for the whole trajectory.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SortMode {
    Single64,
    TwoStage,
}

/// Resolved render configuration; JSON config file fields are overridden by
/// explicit command-line flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub scene: PathBuf,
    pub out: PathBuf,
    pub sampler: SamplerMode,
    pub splat: String,
    pub sort: SortMode,
    pub points: u64,
    pub buffer: usize,
    pub frames: usize,
    pub seed: u64,
    pub env: Option<PathBuf>,
    pub background: [f64; 4],
    pub distance_exponent: f64,
    pub dilation_variance: f64,
    pub near_plane_pixel_std: f64,
}

#[derive(clap::Args)]
pub struct Args {
    /// JSON config block; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    sampler: Option<SamplerMode>,
    /// Splat mode: bilinear or gaussian.
    #[arg(long)]
    splat: Option<String>,
    #[arg(long, value_enum)]
    sort: Option<SortMode>,
    /// Total point budget per frame (global: total extraction size).
    #[arg(long)]
    points: Option<u64>,
    /// Ring-buffer capacity.
    #[arg(long)]
    buffer: Option<usize>,
    /// Frames to render (cameras are cycled).
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Environment-map base path (reads <base>.f32 and <base>.json).
    #[arg(long)]
    env: Option<PathBuf>,
    /// Constant background "r,g,b,a" used when no map is given.
    #[arg(long)]
    background: Option<String>,
    #[arg(long, value_enum, default_value = "png")]
    preview: PreviewFormat,
    /// Skip the wall-clock timing table.
    #[arg(long, default_value_t = false)]
    no_timings: bool,
}

fn parse_background(s: &str) -> Result<[f64; 4]> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .context("background must be four comma-separated numbers")?;
    if parts.len() != CHANNELS {
        bail!("background needs exactly {CHANNELS} components");
    }
    Ok([parts[0], parts[1], parts[2], parts[3]])
}

fn resolve_config(args: &Args) -> Result<RunConfig> {
    let mut config = if let Some(path) = &args.config {
        let text = std::fs::read(path).context("reading config file")?;
        serde_json::from_slice::<RunConfig>(&text).context("parsing config file")?
    } else {
        RunConfig {
            scene: PathBuf::new(),
            out: PathBuf::new(),
            sampler: SamplerMode::Perframe,
            splat: "bilinear".into(),
            sort: SortMode::TwoStage,
            points: 1 << 18,
            buffer: stipple_core::sampling::DEFAULT_RING_CAPACITY,
            frames: 8,
            seed: 0,
            env: None,
            background: [0.0; 4],
            distance_exponent: 2.0,
            dilation_variance: stipple_core::raster::gaussian::DILATION_VARIANCE,
            near_plane_pixel_std: stipple_core::raster::gaussian::NEAR_PLANE_PIXEL_STD,
        }
    };
    if let Some(v) = &args.scene {
        config.scene = v.clone();
    }
    if let Some(v) = &args.out {
        config.out = v.clone();
    }
    if let Some(v) = args.sampler {
        config.sampler = v;
    }
    if let Some(v) = &args.splat {
        config.splat = v.clone();
    }
    if let Some(v) = args.sort {
        config.sort = v;
    }
    if let Some(v) = args.points {
        config.points = v;
    }
    if let Some(v) = args.buffer {
        config.buffer = v;
    }
    if let Some(v) = args.frames {
        config.frames = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = &args.env {
        config.env = Some(v.clone());
    }
    if let Some(v) = &args.background {
        config.background = parse_background(v)?;
    }
    if config.scene.as_os_str().is_empty() {
        bail!("--scene is required (flag or config file)");
    }
    if config.out.as_os_str().is_empty() {
        bail!("--out is required (flag or config file)");
    }
    Ok(config)
}

fn splat_mode(name: &str) -> Result<SplatMode> {
    match name {
        "bilinear" => Ok(SplatMode::Bilinear),
        "gaussian" => Ok(SplatMode::Gaussian),
        other => bail!("unknown splat mode '{other}' (expected bilinear|gaussian)"),
    }
}

/// Per-pixel background for one camera: environment lookup along cached ray
/// directions rotated into the world frame, or a constant.
pub fn background_image(
    camera: &CameraView,
    env: Option<&EnvironmentMap>,
    cache: &DirectionCache,
    constant: [f64; 4],
) -> Result<Vec<[f64; 4]>> {
    match env {
        None => Ok(constant_background(camera.width, camera.height, constant)),
        Some(map) => {
            let (grid, _) = cache.ray_directions(camera);
            let rot_t = camera.rotation.transpose();
            let mut out = Vec::with_capacity(grid.dirs().len());
            for d in grid.dirs() {
                out.push(map.sample(rot_t * d)?);
            }
            Ok(out)
        }
    }
}

pub fn run(args: Args) -> Result<i32> {
    let config = resolve_config(&args)?;
    let scene = Scene::load(&config.scene).context("loading scene")?;
    if scene.cameras.is_empty() {
        bail!("scene has no cameras");
    }
    std::fs::create_dir_all(&config.out)?;
    crate::manifest::write(&config.out.join("manifest.json"), "render", &config)?;

    let oracle = AppearanceOracle::new(scene.header.oracle_seed);
    let sampling = SamplingConfig {
        distance_exponent: config.distance_exponent,
    };
    let options = RenderOptions {
        mode: splat_mode(&config.splat)?,
        gaussian: stipple_core::raster::GaussianConfig {
            dilation_variance: config.dilation_variance,
            near_plane_pixel_std: config.near_plane_pixel_std,
        },
    };
    let env_map = match &config.env {
        Some(base) => Some(load_env_map(base).context("loading environment map")?),
        None => None,
    };
    let dir_cache = DirectionCache::new();

    let mut ring = RingBuffer::new(config.buffer.max(1));
    let global_cloud = if config.sampler == SamplerMode::Global {
        Some(global_extract(
            &scene.field,
            &scene.cameras,
            &oracle,
            config.points,
            config.seed,
            &sampling,
        )?)
    } else {
        None
    };

    let mut timings = Vec::new();
    for frame in 0..config.frames {
        let camera = &scene.cameras[frame % scene.cameras.len()];
        let t0 = Instant::now();
        let cloud = match config.sampler {
            SamplerMode::Global => global_cloud.clone().expect("pre-extracted"),
            SamplerMode::Perframe => {
                let per_cloud = config.points / config.buffer.max(1) as u64;
                let mut fresh = RingBuffer::new(config.buffer.max(1));
                for k in 0..config.buffer.max(1) as u64 {
                    let seed = mix64(config.seed ^ mix64(frame as u64) ^ mix64(0x1000 + k));
                    fresh.push(sample_view(
                        &scene.field,
                        camera,
                        &oracle,
                        per_cloud,
                        seed,
                        &sampling,
                    )?)?;
                }
                fresh.assemble()?
            }
            SamplerMode::Ring => {
                let per_cloud = config.points / config.buffer.max(1) as u64;
                let seed = mix64(config.seed ^ mix64(frame as u64));
                ring.push(sample_view(
                    &scene.field,
                    camera,
                    &oracle,
                    per_cloud,
                    seed,
                    &sampling,
                )?)?;
                ring.assemble()?
            }
        };
        let sample_ms = t0.elapsed().as_secs_f64() * 1e3;

        let background = background_image(camera, env_map.as_ref(), &dir_cache, config.background)?;
        let t1 = Instant::now();
        let image: FeatureImage = match config.sort {
            SortMode::TwoStage => render_tiled(&cloud, camera, &background, &options)?.0,
            SortMode::Single64 => render_single64(&cloud, camera, &background, &options)?.0,
        };
        let render_ms = t1.elapsed().as_secs_f64() * 1e3;

        let base = config.out.join(format!("frame_{frame:04}"));
        save_feature_image(&image, &base)?;
        let ext = match args.preview {
            PreviewFormat::Png => Some("png"),
            PreviewFormat::Ppm => Some("ppm"),
            PreviewFormat::None => None,
        };
        if let Some(ext) = ext {
            crate::preview::save(&image, &base.with_extension(ext), args.preview, 0.0)?;
        }
        timings.push((frame, cloud.len(), sample_ms, render_ms));
    }

    if !args.no_timings {
        // Wall-clock table; the one output excluded from byte-identity.
        let mut csv = std::fs::File::create(config.out.join("timings.csv"))?;
        writeln!(csv, "frame,points,sample_ms,render_ms")?;
        for (frame, points, sample_ms, render_ms) in &timings {
            writeln!(csv, "{frame},{points},{sample_ms:.3},{render_ms:.3}")?;
        }
    }
    println!("rendered {} frames into {}", config.frames, config.out.display());
    Ok(0)
}
