//! Differentiable point rasterizer: projection, splat footprint generation,
//! both sorting pipelines, tiled forward/backward blending, and a naive
//! per-pixel reference renderer used as the correctness oracle.
//!
//! Ordering contract shared by every path: per-pixel fragments are sorted by
//! the 32-bit depth encoding of [`sort::depth_key`], ties broken by ascending
//! point index. The two-stage pipeline therefore reproduces the single-sort
//! pipeline's blend order exactly.

pub mod blend;
pub mod gaussian;
pub mod sort;

use nalgebra::Vector3;
use rayon::prelude::*;

pub use blend::{blend_pixel, blend_pixel_backward, BackwardOptions, BlendFragment, ALPHA_MAX};
pub use gaussian::{gaussian_world_scale, GaussianConfig, ProjectedGaussian};
pub use sort::{
    depth_key, pixel_index_bits, sort_single64, sort_two_stage, CostReport, SortCost, SortKey64,
    TileKey, TileLists, TwoStageCost,
};

use crate::error::{Error, Result};
use crate::scene::{CameraView, FeatureImage, PointSet};
use crate::sh::{apply_basis, sh_basis, ShBlock, CHANNELS, SH_COEFFS};

/// Fixed tile edge in pixels.
pub const TILE_SIZE: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplatMode {
    Bilinear,
    Gaussian,
}

/// Rendering knobs beyond the camera and point set.
#[derive(Debug, Clone, Copy)]
pub struct RenderOptions {
    pub mode: SplatMode,
    pub gaussian: GaussianConfig,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            mode: SplatMode::Bilinear,
            gaussian: GaussianConfig::default(),
        }
    }
}

/// A point surviving near-plane culling.
#[derive(Debug, Clone, Copy)]
pub struct ProjectedPoint {
    /// Index into the source point set.
    pub point: usize,
    pub p_cam: Vector3<f64>,
    /// Continuous pixel position (may lie outside the image).
    pub px: f64,
    pub py: f64,
    /// Camera-space z.
    pub depth: f64,
    /// Unit direction from the camera center to the point, world frame.
    pub view_dir: Vector3<f64>,
}

/// One point's in-image fragments for one view.
#[derive(Debug, Clone)]
pub struct Fragment {
    pub x: u32,
    pub y: u32,
    pub depth: f64,
    pub point: usize,
    pub weight: f64,
}

/// All fragments of one point, sharing its depth.
#[derive(Debug, Clone)]
pub struct Footprint {
    pub point: usize,
    pub depth: f64,
    /// `(x, y, weight)` triples, all inside the image.
    pub frags: Vec<(u32, u32, f64)>,
}

/// Flat per-pixel fragment for the single-sort path.
pub type PixelFragment = Fragment;

/// Project a point set, culling everything at or behind the near plane.
pub fn project_points(points: &PointSet, camera: &CameraView) -> Vec<ProjectedPoint> {
    let origin = camera.origin();
    let maybe: Vec<Option<ProjectedPoint>> = points
        .positions
        .par_iter()
        .enumerate()
        .map(|(i, &p_world)| {
            let p_cam = camera.to_camera(p_world);
            if p_cam.z <= camera.z_near {
                return None;
            }
            let (px, py) = camera.project_camera(p_cam);
            let dir = p_world - origin;
            let n = dir.norm();
            let view_dir = if n > 0.0 {
                dir / n
            } else {
                Vector3::new(0.0, 0.0, 1.0)
            };
            Some(ProjectedPoint {
                point: i,
                p_cam,
                px,
                py,
                depth: p_cam.z,
                view_dir,
            })
        })
        .collect();
    maybe.into_iter().flatten().collect()
}

/// The 2x2 bilinear footprint of a continuous pixel position, unclipped.
/// The four weights always sum to 1.
#[inline]
pub fn bilinear_footprint(px: f64, py: f64) -> [(i64, i64, f64); 4] {
    let x0 = (px - 0.5).floor();
    let y0 = (py - 0.5).floor();
    let fx = (px - 0.5) - x0;
    let fy = (py - 0.5) - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x0 + 1, y0, fx * (1.0 - fy)),
        (x0, y0 + 1, (1.0 - fx) * fy),
        (x0 + 1, y0 + 1, fx * fy),
    ]
}

/// Number of distinct 8x8 tiles a 2x2 splat at this position overlaps,
/// ignoring image bounds. `(1 + 1/8)^2` tiles on average under uniform
/// sub-pixel placement.
pub fn tiles_covered_by_splat(px: f64, py: f64) -> u32 {
    let along = |p: f64| -> u32 {
        let c0 = (p - 0.5).floor() as i64;
        let t0 = c0.div_euclid(TILE_SIZE as i64);
        let t1 = (c0 + 1).div_euclid(TILE_SIZE as i64);
        if t0 == t1 {
            1
        } else {
            2
        }
    };
    along(px) * along(py)
}

/// Spawn the 2x2 bilinear fragments of each projected point, dropping
/// fragments outside the image. Zero-weight fragments are kept; they matter
/// to the backward pass.
pub fn gen_fragments_bilinear(
    projected: &[ProjectedPoint],
    width: u32,
    height: u32,
) -> Vec<Footprint> {
    let mut out = Vec::with_capacity(projected.len());
    for p in projected {
        let mut frags = Vec::with_capacity(4);
        for (x, y, w) in bilinear_footprint(p.px, p.py) {
            if x >= 0 && y >= 0 && (x as u32) < width && (y as u32) < height {
                frags.push((x as u32, y as u32, w));
            }
        }
        if !frags.is_empty() {
            out.push(Footprint {
                point: p.point,
                depth: p.depth,
                frags,
            });
        }
    }
    out
}

/// Expand footprints into the flat per-pixel fragment stream.
pub fn flatten_footprints(footprints: &[Footprint]) -> Vec<PixelFragment> {
    let mut out = Vec::with_capacity(footprints.len() * 4);
    for fp in footprints {
        for &(x, y, w) in &fp.frags {
            out.push(Fragment {
                x,
                y,
                depth: fp.depth,
                point: fp.point,
                weight: w,
            });
        }
    }
    out
}

/// Per-point gradients produced by the backward pass.
#[derive(Debug, Clone)]
pub struct GradientBuffers {
    pub d_opacity: Vec<f64>,
    pub d_sh: Vec<ShBlock>,
}

impl GradientBuffers {
    fn zeros(n: usize) -> Self {
        GradientBuffers {
            d_opacity: vec![0.0; n],
            d_sh: vec![[[0.0; SH_COEFFS]; CHANNELS]; n],
        }
    }
}

/// Everything the backward pass needs from a forward tiled render.
pub struct RenderCache {
    width: u32,
    height: u32,
    n_points: usize,
    mode: SplatMode,
    footprints: Vec<Footprint>,
    /// Per-footprint opacity, SH basis, and evaluated feature.
    opacity_of: Vec<f64>,
    basis_of: Vec<[f64; SH_COEFFS]>,
    feature_of: Vec<[f64; CHANNELS]>,
    tiles: TileLists,
    background: Vec<[f64; CHANNELS]>,
    /// Sorting cost of the two-stage pipeline for this frame.
    pub cost: TwoStageCost,
}

fn check_background(background: &[[f64; CHANNELS]], camera: &CameraView) -> Result<()> {
    let need = camera.width as usize * camera.height as usize;
    if background.len() != need {
        return Err(Error::ShapeMismatch(format!(
            "background has {} pixels, image needs {}",
            background.len(),
            need
        )));
    }
    Ok(())
}

/// A constant background image.
pub fn constant_background(width: u32, height: u32, value: [f64; CHANNELS]) -> Vec<[f64; CHANNELS]> {
    vec![value; width as usize * height as usize]
}

/// Project and splat a point set into footprints plus per-footprint shading
/// inputs, shared by every pipeline.
fn prepare(
    points: &PointSet,
    camera: &CameraView,
    options: &RenderOptions,
) -> Result<(Vec<Footprint>, Vec<f64>, Vec<[f64; SH_COEFFS]>, Vec<[f64; CHANNELS]>)> {
    camera.validate()?;
    points.validate()?;
    let projected = project_points(points, camera);
    let footprints = match options.mode {
        SplatMode::Bilinear => gen_fragments_bilinear(&projected, camera.width, camera.height),
        SplatMode::Gaussian => {
            let s = gaussian_world_scale(camera, &options.gaussian);
            let gaussians: Vec<ProjectedGaussian> = projected
                .iter()
                .map(|p| gaussian::project_gaussian(p, s, camera, &options.gaussian))
                .collect::<Result<_>>()?;
            gaussian::gen_fragments_gaussian(&gaussians, camera.width, camera.height)
        }
    };
    // View directions indexed by original point; footprints reference them.
    let mut dir_of_point = vec![Vector3::new(0.0, 0.0, 1.0); points.len()];
    for p in &projected {
        dir_of_point[p.point] = p.view_dir;
    }
    let shading: Vec<(f64, [f64; SH_COEFFS], [f64; CHANNELS])> = footprints
        .par_iter()
        .map(|fp| {
            let basis = sh_basis(dir_of_point[fp.point]);
            let feature = apply_basis(&points.sh_coeffs[fp.point], &basis);
            (points.opacities[fp.point], basis, feature)
        })
        .collect();
    let mut opacity_of = Vec::with_capacity(shading.len());
    let mut basis_of = Vec::with_capacity(shading.len());
    let mut feature_of = Vec::with_capacity(shading.len());
    for (o, b, f) in shading {
        opacity_of.push(o);
        basis_of.push(b);
        feature_of.push(f);
    }
    Ok((footprints, opacity_of, basis_of, feature_of))
}

#[inline]
fn fragment_alpha(opacity: f64, weight: f64) -> f64 {
    (opacity * weight).clamp(0.0, ALPHA_MAX)
}

struct TileSpan {
    x0: u32,
    y0: u32,
    w: u32,
    h: u32,
}

fn tile_span(tiles: &TileLists, tile: u32, width: u32, height: u32) -> TileSpan {
    let tc = tile % tiles.tile_cols;
    let tr = tile / tiles.tile_cols;
    let x0 = tc * TILE_SIZE;
    let y0 = tr * TILE_SIZE;
    TileSpan {
        x0,
        y0,
        w: (width - x0).min(TILE_SIZE),
        h: (height - y0).min(TILE_SIZE),
    }
}

/// Per-pixel lists of `(entry position, weight)` for one tile, row-major,
/// preserving the depth order of the tile's entry list.
fn tile_pixel_lists(
    span: &TileSpan,
    entries: &[u32],
    footprints: &[Footprint],
) -> Vec<Vec<(u32, f64)>> {
    let mut lists: Vec<Vec<(u32, f64)>> = vec![Vec::new(); (span.w * span.h) as usize];
    for (e, &fp_idx) in entries.iter().enumerate() {
        for &(x, y, w) in &footprints[fp_idx as usize].frags {
            if x >= span.x0 && x < span.x0 + span.w && y >= span.y0 && y < span.y0 + span.h {
                let local = (y - span.y0) * span.w + (x - span.x0);
                lists[local as usize].push((e as u32, w));
            }
        }
    }
    lists
}

/// Render through the tiled two-stage pipeline. Tiles are processed in
/// parallel and written back in tile order, so the output is bitwise
/// independent of the worker thread count.
pub fn render_tiled(
    points: &PointSet,
    camera: &CameraView,
    background: &[[f64; CHANNELS]],
    options: &RenderOptions,
) -> Result<(FeatureImage, RenderCache)> {
    check_background(background, camera)?;
    let (footprints, opacity_of, basis_of, feature_of) = prepare(points, camera, options)?;
    let (tiles, cost) = sort_two_stage(&footprints, camera.width, camera.height)?;

    let tile_count = tiles.tile_count();
    let results: Vec<Vec<([f64; CHANNELS], f64)>> = (0..tile_count)
        .into_par_iter()
        .map(|tile| {
            let span = tile_span(&tiles, tile, camera.width, camera.height);
            let entries = tiles.entries_of(tile);
            let lists = tile_pixel_lists(&span, entries, &footprints);
            let mut out = Vec::with_capacity(lists.len());
            let mut scratch: Vec<BlendFragment> = Vec::new();
            for (local, list) in lists.iter().enumerate() {
                let x = span.x0 + (local as u32) % span.w;
                let y = span.y0 + (local as u32) / span.w;
                scratch.clear();
                for &(e, w) in list {
                    let fp = entries[e as usize] as usize;
                    scratch.push(BlendFragment {
                        alpha: fragment_alpha(opacity_of[fp], w),
                        feature: feature_of[fp],
                    });
                }
                let bg = background[(y * camera.width + x) as usize];
                out.push(blend_pixel(&scratch, bg));
            }
            out
        })
        .collect();

    let mut image = FeatureImage::new(camera.width, camera.height);
    for (tile, result) in results.into_iter().enumerate() {
        let span = tile_span(&tiles, tile as u32, camera.width, camera.height);
        for (local, (feature, trans)) in result.into_iter().enumerate() {
            let x = span.x0 + (local as u32) % span.w;
            let y = span.y0 + (local as u32) / span.w;
            let idx = image.index(x, y);
            image.features[idx] = feature;
            image.transmittance[idx] = trans;
        }
    }

    let cache = RenderCache {
        width: camera.width,
        height: camera.height,
        n_points: points.len(),
        mode: options.mode,
        footprints,
        opacity_of,
        basis_of,
        feature_of,
        tiles,
        background: background.to_vec(),
        cost,
    };
    Ok((image, cache))
}

/// Backward pass over a cached tiled render: per-point opacity and SH
/// gradients for an upstream per-pixel feature gradient.
///
/// Accumulation is a deterministic two-phase reduction: per-tile partials in
/// pixel order, merged in tile order.
pub fn blend_backward(
    cache: &RenderCache,
    upstream: &[[f64; CHANNELS]],
    opts: BackwardOptions,
) -> Result<GradientBuffers> {
    if cache.mode == SplatMode::Gaussian {
        return Err(Error::invalid(
            "backward pass",
            "gaussian splatting is forward-only",
        ));
    }
    let need = cache.width as usize * cache.height as usize;
    if upstream.len() != need {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient has {} pixels, image needs {need}",
            upstream.len()
        )));
    }

    let tile_count = cache.tiles.tile_count();
    // (d_opacity, d_feature) per tile entry.
    let partials: Vec<(Vec<f64>, Vec<[f64; CHANNELS]>)> = (0..tile_count)
        .into_par_iter()
        .map(|tile| {
            let span = tile_span(&cache.tiles, tile, cache.width, cache.height);
            let entries = cache.tiles.entries_of(tile);
            let lists = tile_pixel_lists(&span, entries, &cache.footprints);
            let mut d_op = vec![0.0; entries.len()];
            let mut d_feat = vec![[0.0; CHANNELS]; entries.len()];
            let mut scratch: Vec<BlendFragment> = Vec::new();
            let mut grads: Vec<blend::FragmentGrad> = Vec::new();
            for (local, list) in lists.iter().enumerate() {
                if list.is_empty() {
                    continue;
                }
                let x = span.x0 + (local as u32) % span.w;
                let y = span.y0 + (local as u32) / span.w;
                scratch.clear();
                for &(e, w) in list {
                    let fp = entries[e as usize] as usize;
                    scratch.push(BlendFragment {
                        alpha: fragment_alpha(cache.opacity_of[fp], w),
                        feature: cache.feature_of[fp],
                    });
                }
                let idx = (y * cache.width + x) as usize;
                blend_pixel_backward(
                    &scratch,
                    cache.background[idx],
                    upstream[idx],
                    opts,
                    &mut grads,
                );
                for (k, &(e, w)) in list.iter().enumerate() {
                    let fp = entries[e as usize] as usize;
                    // Chain through alpha = opacity * weight; the clamp
                    // zeroes the gradient where it saturates.
                    let raw = cache.opacity_of[fp] * w;
                    if raw < ALPHA_MAX {
                        d_op[e as usize] += grads[k].d_alpha * w;
                    }
                    for c in 0..CHANNELS {
                        d_feat[e as usize][c] += grads[k].d_feature[c];
                    }
                }
            }
            (d_op, d_feat)
        })
        .collect();

    let mut out = GradientBuffers::zeros(cache.n_points);
    for (tile, (d_op, d_feat)) in partials.into_iter().enumerate() {
        let entries = cache.tiles.entries_of(tile as u32);
        for (e, &fp_idx) in entries.iter().enumerate() {
            let fp = fp_idx as usize;
            let point = cache.footprints[fp].point;
            out.d_opacity[point] += d_op[e];
            let basis = &cache.basis_of[fp];
            for c in 0..CHANNELS {
                let g = d_feat[e][c];
                if g != 0.0 {
                    for j in 0..SH_COEFFS {
                        out.d_sh[point][c][j] += g * basis[j];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Render through the baseline 64-bit single-sort pipeline.
pub fn render_single64(
    points: &PointSet,
    camera: &CameraView,
    background: &[[f64; CHANNELS]],
    options: &RenderOptions,
) -> Result<(FeatureImage, SortCost)> {
    check_background(background, camera)?;
    let (footprints, opacity_of, basis_of, feature_of) = prepare(points, camera, options)?;
    let _ = basis_of;
    // Footprint index per flat fragment, aligned with `flatten_footprints`.
    let mut fp_of_frag = Vec::new();
    for (i, fp) in footprints.iter().enumerate() {
        fp_of_frag.extend(std::iter::repeat(i).take(fp.frags.len()));
    }
    let frags = flatten_footprints(&footprints);
    let (order, cost) = sort_single64(&frags, camera.width, camera.height)?;

    let mut image = FeatureImage::new(camera.width, camera.height);
    for (i, f) in image.features.iter_mut().enumerate() {
        *f = background[i];
    }
    let mut scratch: Vec<BlendFragment> = Vec::new();
    let mut i = 0usize;
    while i < order.len() {
        let first = &frags[order[i] as usize];
        let pixel = (first.y * camera.width + first.x) as usize;
        let mut j = i;
        let mut prev_key = 0u32;
        scratch.clear();
        while j < order.len() {
            let f = &frags[order[j] as usize];
            if (f.y * camera.width + f.x) as usize != pixel {
                break;
            }
            let key = depth_key(f.depth);
            if cfg!(debug_assertions) && j > i && key < prev_key {
                return Err(Error::invalid("fragment stream", "not depth-sorted"));
            }
            prev_key = key;
            let fp = fp_of_frag[order[j] as usize];
            scratch.push(BlendFragment {
                alpha: fragment_alpha(opacity_of[fp], f.weight),
                feature: feature_of[fp],
            });
            j += 1;
        }
        let (feature, trans) = blend_pixel(&scratch, background[pixel]);
        image.features[pixel] = feature;
        image.transmittance[pixel] = trans;
        i = j;
    }
    Ok((image, cost))
}

/// Brute-force reference renderer: gather every fragment per pixel, sort
/// each pixel's list with a comparison sort on (depth key, point index), and
/// composite front to back. Ground truth for both pipelines.
pub fn render_reference(
    points: &PointSet,
    camera: &CameraView,
    background: &[[f64; CHANNELS]],
    options: &RenderOptions,
) -> Result<FeatureImage> {
    check_background(background, camera)?;
    let (footprints, opacity_of, _, feature_of) = prepare(points, camera, options)?;

    let n_pixels = camera.width as usize * camera.height as usize;
    let mut buckets: Vec<Vec<(u32, usize, usize, f64)>> = vec![Vec::new(); n_pixels];
    for (i, fp) in footprints.iter().enumerate() {
        let key = depth_key(fp.depth);
        for &(x, y, w) in &fp.frags {
            buckets[(y * camera.width + x) as usize].push((key, fp.point, i, w));
        }
    }

    let mut image = FeatureImage::new(camera.width, camera.height);
    for (pixel, bucket) in buckets.iter_mut().enumerate() {
        bucket.sort_by_key(|&(key, point, _, _)| (key, point));
        // Direct front-to-back evaluation of the compositing sum.
        let mut acc = [0.0; CHANNELS];
        let mut t = 1.0;
        for &(_, _, fp, w) in bucket.iter() {
            let alpha = fragment_alpha(opacity_of[fp], w);
            for c in 0..CHANNELS {
                acc[c] += t * alpha * feature_of[fp][c];
            }
            t *= 1.0 - alpha;
        }
        for c in 0..CHANNELS {
            acc[c] += t * background[pixel][c];
        }
        image.features[pixel] = acc;
        image.transmittance[pixel] = t;
    }
    Ok(image)
}

/// Run projection, splatting, and both sorts on a point set to collect the
/// cost accounting without blending.
pub fn cost_report(
    points: &PointSet,
    camera: &CameraView,
    options: &RenderOptions,
) -> Result<CostReport> {
    let (footprints, ..) = prepare(points, camera, options)?;
    let frags = flatten_footprints(&footprints);
    let (_, single64) = sort_single64(&frags, camera.width, camera.height)?;
    let (_, two_stage) = sort_two_stage(&footprints, camera.width, camera.height)?;
    Ok(CostReport {
        n_points: footprints.len() as u64,
        n_fragments: frags.len() as u64,
        single64,
        two_stage,
    })
}
