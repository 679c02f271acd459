//! `stipple bench`: radix-pass and key-memory accounting for both sorting
//! pipelines on synthetic 1080p-scale fragment loads, plus wall-clock
//! timings (the only non-deterministic output, kept in its own file).

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use nalgebra::Vector3;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use stipple_core::raster::{
    constant_background, flatten_footprints, gen_fragments_bilinear, render_tiled,
    sort_single64, sort_two_stage, tiles_covered_by_splat, CostReport, ProjectedPoint,
    RenderOptions,
};
use stipple_core::scene::PointSet;

#[derive(clap::Args, Serialize)]
pub struct Args {
    #[arg(long)]
    out: PathBuf,
    /// Synthetic point count.
    #[arg(long, default_value_t = 1 << 20)]
    points: u64,
    #[arg(long, default_value_t = 1920)]
    width: u32,
    #[arg(long, default_value_t = 1080)]
    height: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Wall-clock repetitions (median reported).
    #[arg(long, default_value_t = 5)]
    timing_runs: usize,
    /// Monte Carlo placements for the tiles-per-splat estimate.
    #[arg(long, default_value_t = 1_000_000)]
    mc_samples: u64,
}

/// Uniform sub-pixel placements away from the borders, so every splat keeps
/// all four fragments and the tile statistics match the unbounded model.
fn synthetic_projected(n: u64, width: u32, height: u32, seed: u64) -> Vec<ProjectedPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let margin = 8.0;
    (0..n)
        .map(|i| {
            let px = margin + rng.random::<f64>() * (width as f64 - 2.0 * margin);
            let py = margin + rng.random::<f64>() * (height as f64 - 2.0 * margin);
            let depth = 1.0 + rng.random::<f64>() * 99.0;
            ProjectedPoint {
                point: i as usize,
                p_cam: Vector3::new(px, py, depth),
                px,
                py,
                depth,
                view_dir: Vector3::new(0.0, 0.0, 1.0),
            }
        })
        .collect()
}

/// Monte Carlo mean of tiles overlapped per 2x2 splat.
pub fn tiles_per_splat_mc(samples: u64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0u64;
    for _ in 0..samples {
        let px = rng.random::<f64>() * 8.0;
        let py = rng.random::<f64>() * 8.0;
        total += tiles_covered_by_splat(px, py) as u64;
    }
    total as f64 / samples as f64
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[xs.len() / 2]
}

pub fn run(args: Args) -> Result<i32> {
    std::fs::create_dir_all(&args.out)?;
    crate::manifest::write(&args.out.join("manifest.json"), "bench", &args)?;

    let projected = synthetic_projected(args.points, args.width, args.height, args.seed);
    let footprints = gen_fragments_bilinear(&projected, args.width, args.height);
    let frags = flatten_footprints(&footprints);

    let (_, single64) = sort_single64(&frags, args.width, args.height)?;
    let (_, two_stage) = sort_two_stage(&footprints, args.width, args.height)?;
    let report = CostReport {
        n_points: footprints.len() as u64,
        n_fragments: frags.len() as u64,
        single64,
        two_stage,
    };
    let mc = tiles_per_splat_mc(args.mc_samples, args.seed ^ 0x7155);

    // Deterministic cost table.
    let md = format!(
        "# Sorting cost accounting\n\n\
         synthetic load: {n} points, {f} fragments, {w}x{h} image, 8x8 tiles\n\n\
         | pipeline | keys | passes | pass-keys | pass-keys / point | key bytes |\n\
         |---|---|---|---|---|---|\n\
         | single 64-bit | {sk} | {sp} | {spk} | {spkn:.4} | {sb} |\n\
         | two-stage: depth | {d1k} | {d1p} | {d1pk} | - | {d1b} |\n\
         | two-stage: tiles | {d2k} | {d2p} | {d2pk} | - | {d2b} |\n\
         | two-stage: total | - | - | {tpk} | {tpkn:.4} | {tb} |\n\n\
         tiles per splat: measured {tps:.6}, monte carlo ({mcn} placements) {mc:.6}\n\n\
         pass-cost ratio single64 / two-stage: {ratio:.4}\n\n\
         key memory vs one 64-bit key per point: measured reduction {mre:.4}%, \
         model (tiles/splat rounded to 2 decimals) {mod_:.4}%\n",
        n = report.n_points,
        f = report.n_fragments,
        w = args.width,
        h = args.height,
        sk = report.single64.keys,
        sp = report.single64.passes,
        spk = report.single64.pass_keys,
        spkn = report.single_pass_keys_per_point(),
        sb = report.single64.key_bytes,
        d1k = report.two_stage.stage1.keys,
        d1p = report.two_stage.stage1.passes,
        d1pk = report.two_stage.stage1.pass_keys,
        d1b = report.two_stage.stage1.key_bytes,
        d2k = report.two_stage.stage2.keys,
        d2p = report.two_stage.stage2.passes,
        d2pk = report.two_stage.stage2.pass_keys,
        d2b = report.two_stage.stage2.key_bytes,
        tpk = report.two_stage.pass_keys,
        tpkn = report.two_stage_pass_keys_per_point(),
        tb = report.two_stage.key_bytes,
        tps = report.two_stage.tiles_per_splat,
        mcn = args.mc_samples,
        mc = mc,
        ratio = report.single_pass_keys_per_point() / report.two_stage_pass_keys_per_point(),
        mre = report.key_memory_reduction_measured() * 100.0,
        mod_ = report.key_memory_reduction_model() * 100.0,
    );
    std::fs::write(args.out.join("bench.md"), &md)?;
    let json = serde_json::to_vec_pretty(&report)?;
    std::fs::write(args.out.join("bench.json"), json)?;

    // Deterministic CSV with the cost model.
    let mut csv = std::fs::File::create(args.out.join("bench.csv"))?;
    writeln!(csv, "pipeline,keys,passes,pass_keys,key_bytes")?;
    writeln!(
        csv,
        "single64,{},{},{},{}",
        report.single64.keys, report.single64.passes, report.single64.pass_keys,
        report.single64.key_bytes
    )?;
    writeln!(
        csv,
        "two_stage_depth,{},{},{},{}",
        report.two_stage.stage1.keys,
        report.two_stage.stage1.passes,
        report.two_stage.stage1.pass_keys,
        report.two_stage.stage1.key_bytes
    )?;
    writeln!(
        csv,
        "two_stage_tiles,{},{},{},{}",
        report.two_stage.stage2.keys,
        report.two_stage.stage2.passes,
        report.two_stage.stage2.pass_keys,
        report.two_stage.stage2.key_bytes
    )?;

    // Wall-clock timings: sorts, plus a small tiled render at one thread and
    // at the full pool, median of `timing_runs` warm runs.
    let mut sort_single_ms = Vec::new();
    let mut sort_two_ms = Vec::new();
    for _ in 0..args.timing_runs.max(1) {
        let t = Instant::now();
        let _ = sort_single64(&frags, args.width, args.height)?;
        sort_single_ms.push(t.elapsed().as_secs_f64() * 1e3);
        let t = Instant::now();
        let _ = sort_two_stage(&footprints, args.width, args.height)?;
        sort_two_ms.push(t.elapsed().as_secs_f64() * 1e3);
    }

    let scene = render_fixture(args.seed);
    let camera = stipple_core::verify::axis_camera(512, 288, 0.1);
    let bg = constant_background(512, 288, [0.0; 4]);
    let opts = RenderOptions::default();
    let mut render_ms = Vec::new();
    let mut render1_ms = Vec::new();
    let pool1 = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .context("thread pool")?;
    for _ in 0..args.timing_runs.max(1) {
        let t = Instant::now();
        let _ = render_tiled(&scene, &camera, &bg, &opts)?;
        render_ms.push(t.elapsed().as_secs_f64() * 1e3);
        let t = Instant::now();
        let _ = pool1.install(|| render_tiled(&scene, &camera, &bg, &opts))?;
        render1_ms.push(t.elapsed().as_secs_f64() * 1e3);
    }

    let mut csv = std::fs::File::create(args.out.join("timings.csv"))?;
    writeln!(csv, "measurement,median_ms,runs")?;
    writeln!(csv, "sort_single64,{:.3},{}", median(sort_single_ms), args.timing_runs)?;
    writeln!(csv, "sort_two_stage,{:.3},{}", median(sort_two_ms), args.timing_runs)?;
    writeln!(csv, "render_tiled_max_threads,{:.3},{}", median(render_ms), args.timing_runs)?;
    writeln!(csv, "render_tiled_1_thread,{:.3},{}", median(render1_ms), args.timing_runs)?;

    println!("{md}");
    Ok(0)
}

fn render_fixture(seed: u64) -> PointSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbe9c);
    let mut points = PointSet::default();
    for _ in 0..50_000 {
        let pos = Vector3::new(
            (rng.random::<f64>() - 0.5) * 2.0,
            (rng.random::<f64>() - 0.5) * 2.0,
            1.0 + rng.random::<f64>() * 3.0,
        );
        let mut sh = [[0.0; 9]; 4];
        for ch in &mut sh {
            ch[0] = rng.random::<f64>();
        }
        points.push(pos, rng.random::<f64>() * 0.9, sh);
    }
    points
}
