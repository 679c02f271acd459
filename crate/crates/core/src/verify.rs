//! Verification suites with fixed seeds, runnable from the CLI and reused by
//! the integration tests. Also hosts the independent statistical oracles
//! (chi-square uniformity, finite differences, pairwise distances).

use nalgebra::{Matrix3, Vector3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::env::{distill_env, DistillConfig, ShBackgroundOracle};
use crate::error::Result;
use crate::kernels::{add_weight_decay_grad, cauchy_loss};
use crate::raster::{
    blend_backward, constant_background, render_tiled, BackwardOptions, RenderOptions,
};
use crate::sampling::{
    allocate_counts, halton_points, rejection_sample, view_pdf, SamplingConfig, VoxelPdf,
};
use crate::scene::{CameraView, PointSet, ProbabilityField, Voxel};
use crate::tonemap::{tonemap_forward_one, tonemap_inverse_one, ResponseCurve};

/// One named check with its outcome.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// All checks of one suite.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(CheckResult {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

/// Chi-square upper-tail p-value for observed counts against uniform
/// expectation.
pub fn chi_square_uniform_p(counts: &[u64], total: u64) -> f64 {
    let cells = counts.len() as f64;
    let expected = total as f64 / cells;
    let stat: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let dist = ChiSquared::new(cells - 1.0).expect("valid dof");
    1.0 - dist.cdf(stat)
}

/// Minimum pairwise distance of a point set (brute force).
pub fn min_pairwise_distance(points: &[Vector3<f64>]) -> f64 {
    let mut min = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            min = min.min((points[i] - points[j]).norm_squared());
        }
    }
    min.sqrt()
}

/// A camera at the origin looking down +z, used by the sampling checks.
pub fn axis_camera(width: u32, height: u32, z_near: f64) -> CameraView {
    CameraView {
        fx: width as f64,
        fy: width as f64,
        cx: width as f64 / 2.0,
        cy: height as f64 / 2.0,
        width,
        height,
        rotation: Matrix3::identity(),
        translation: Vector3::zeros(),
        z_near,
        distortion: None,
    }
}

/// Random scene for gradient checking: points in front of an axis camera
/// with opacities clear of the saturation clamp.
pub fn gradcheck_scene(n: usize, seed: u64) -> PointSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = PointSet::default();
    for _ in 0..n {
        let pos = Vector3::new(
            (rng.random::<f64>() - 0.5) * 1.6,
            (rng.random::<f64>() - 0.5) * 1.6,
            1.0 + rng.random::<f64>() * 3.0,
        );
        let mut sh = [[0.0; 9]; 4];
        for ch in &mut sh {
            for v in ch.iter_mut() {
                *v = rng.random::<f64>() - 0.5;
            }
        }
        points.push(pos, 0.1 + 0.8 * rng.random::<f64>(), sh);
    }
    points
}

/// Half-clipped voxel fixture: a single-voxel field cut exactly in half by
/// the camera's near plane (the one axis-aligned frustum plane, so the
/// visible region is a clean box).
pub fn half_clipped_fixture() -> (ProbabilityField, CameraView) {
    let field = ProbabilityField::new(
        2,
        Vector3::new(-1.0, -1.0, -1.0),
        2.0,
        vec![Voxel {
            index: [1, 1, 1],
            level: 0,
            center: Vector3::new(0.5, 0.5, 0.5),
            size: 1.0,
            weight: 1.0,
        }],
    )
    .unwrap();
    // Camera on the voxel axis at world (0.5, 0.5, -0.75); the near plane
    // z_cam = 1.25 slices the voxel (world z in [0, 1]) at its center. Side
    // planes stay clear: |x_cam|/z <= 0.5/1.25 = 0.4 < cx/fx = 0.5.
    let camera = CameraView {
        fx: 100.0,
        fy: 100.0,
        cx: 50.0,
        cy: 50.0,
        width: 100,
        height: 100,
        rotation: Matrix3::identity(),
        translation: Vector3::new(-0.5, -0.5, 0.75),
        z_near: 1.25,
        distortion: None,
    };
    (field, camera)
}

/// Chi-square uniformity of rejection sampling over the visible half of a
/// half-clipped voxel, on a `cells^3` sub-grid.
pub fn rejection_uniformity_p(samples: u64, cells: usize, seed: u64) -> Result<f64> {
    let (field, camera) = half_clipped_fixture();
    let pdf = view_pdf(&field, &camera, &SamplingConfig::default())?;
    let positions = rejection_sample(&field, &pdf, &[samples], &camera, seed)?;
    // Visible half: x in [0, 1], y in [0, 1], z in [0.5, 1].
    let mut counts = vec![0u64; cells * cells * cells];
    for p in &positions {
        assert!(camera.in_frustum(*p), "accepted point outside frustum");
        let ux = p.x.clamp(0.0, 1.0 - 1e-12);
        let uy = p.y.clamp(0.0, 1.0 - 1e-12);
        let uz = ((p.z - 0.5) / 0.5).clamp(0.0, 1.0 - 1e-12);
        let ix = (ux * cells as f64) as usize;
        let iy = (uy * cells as f64) as usize;
        let iz = (uz * cells as f64) as usize;
        counts[(ix * cells + iy) * cells + iz] += 1;
    }
    Ok(chi_square_uniform_p(&counts, samples))
}

/// Finite-difference check of the blending backward pass on a random scene.
/// Returns the worst relative error over every opacity and a sweep of SH
/// coefficients.
pub fn blend_gradcheck_worst_rel_err(
    n_points: usize,
    width: u32,
    height: u32,
    seed: u64,
    sh_stride: usize,
) -> f64 {
    let camera = axis_camera(width, height, 0.1);
    let points = gradcheck_scene(n_points, seed);
    let bg = constant_background(width, height, [0.4, 0.2, 0.1, 0.6]);
    let opts = RenderOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let upstream: Vec<[f64; 4]> = (0..width as usize * height as usize)
        .map(|_| std::array::from_fn(|_| rng.random::<f64>() * 2.0 - 1.0))
        .collect();
    let (_, cache) = render_tiled(&points, &camera, &bg, &opts).unwrap();
    let grads = blend_backward(&cache, &upstream, BackwardOptions::default()).unwrap();

    let loss = |pts: &PointSet| -> f64 {
        let (img, _) = render_tiled(pts, &camera, &bg, &opts).unwrap();
        img.features
            .iter()
            .zip(upstream.iter())
            .map(|(f, u)| (0..4).map(|c| f[c] * u[c]).sum::<f64>())
            .sum()
    };

    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut check = |fd: f64, analytic: f64| {
        let denom = fd.abs().max(analytic.abs());
        if denom > 1e-7 {
            worst = worst.max((fd - analytic).abs() / denom);
        } else {
            worst = worst.max((fd - analytic).abs());
        }
    };
    for i in 0..points.len() {
        let mut plus = points.clone();
        plus.opacities[i] += h;
        let mut minus = points.clone();
        minus.opacities[i] -= h;
        let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
        check(fd, grads.d_opacity[i]);
        for flat in (0..36).step_by(sh_stride.max(1)) {
            let (c, j) = (flat / 9, flat % 9);
            let mut plus = points.clone();
            plus.sh_coeffs[i][c][j] += h;
            let mut minus = points.clone();
            minus.sh_coeffs[i][c][j] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            check(fd, grads.d_sh[i][c][j]);
        }
    }
    worst
}

/// Gradient suite: blending backward vs finite differences, plus the
/// element-wise kernels and environment-map texel gradients.
pub fn gradcheck_suite() -> SuiteReport {
    let mut report = SuiteReport {
        suite: "gradcheck".into(),
        checks: Vec::new(),
    };

    let worst = blend_gradcheck_worst_rel_err(24, 48, 40, 1, 7);
    report.push(
        "blend backward vs central differences",
        worst < 1e-4,
        format!("worst relative error {worst:.3e} (tolerance 1e-4)"),
    );

    // Per-element checks keep the finite differences clear of the roundoff
    // floor a large batch mean would impose on tiny gradients.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let c = 0.7;
    let mut worst = 0.0f64;
    for _ in 0..64 {
        let x = rng.random::<f64>() * 6.0 - 3.0;
        let grad = cauchy_loss(&[x], c).unwrap().grad[0];
        let h = 1e-6 * x.abs().max(1.0);
        let fd = (cauchy_loss(&[x + h], c).unwrap().loss
            - cauchy_loss(&[x - h], c).unwrap().loss)
            / (2.0 * h);
        let denom = fd.abs().max(grad.abs()).max(1e-12);
        worst = worst.max((fd - grad).abs() / denom);
    }
    report.push(
        "cauchy loss gradient",
        worst < 1e-8,
        format!("worst relative error {worst:.3e} (tolerance 1e-8)"),
    );

    let lambda = 0.31;
    let decay_loss = |w: f64| lambda * w * w;
    let mut worst = 0.0f64;
    for _ in 0..64 {
        let w = rng.random::<f64>() * 4.0 - 2.0;
        let mut grad = vec![0.0];
        add_weight_decay_grad(&[w], &mut grad, lambda).unwrap();
        let h = 1e-6 * w.abs().max(1.0);
        let fd = (decay_loss(w + h) - decay_loss(w - h)) / (2.0 * h);
        let denom = fd.abs().max(grad[0].abs()).max(1e-12);
        worst = worst.max((fd - grad[0]).abs() / denom);
    }
    report.push(
        "weight decay gradient",
        worst < 1e-8,
        format!("worst relative error {worst:.3e} (tolerance 1e-8)"),
    );

    // Environment texel gradients equal the bilinear weights.
    let mut map = crate::env::EnvironmentMap::new(8, [0.0; 4]).unwrap();
    for t in map.texels.iter_mut() {
        *t = std::array::from_fn(|_| rng.random::<f64>());
    }
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let z = 1.0 - 2.0 * rng.random::<f64>();
        let phi = std::f64::consts::TAU * rng.random::<f64>();
        let r = (1.0 - z * z).max(0.0).sqrt();
        let d = Vector3::new(r * phi.cos(), z, r * phi.sin());
        let fp = map.footprint(d).unwrap();
        let h = 1e-6;
        for &idx in &fp.indices {
            let base = map.texels[idx][0];
            map.texels[idx][0] = base + h;
            let plus = map.sample(d).unwrap()[0];
            map.texels[idx][0] = base - h;
            let minus = map.sample(d).unwrap()[0];
            map.texels[idx][0] = base;
            let fd = (plus - minus) / (2.0 * h);
            let weight: f64 = fp
                .indices
                .iter()
                .zip(fp.weights.iter())
                .filter(|(i, _)| **i == idx)
                .map(|(_, w)| *w)
                .sum();
            let denom = weight.abs().max(1e-9);
            worst = worst.max((fd - weight).abs() / denom);
        }
    }
    report.push(
        "environment texel gradients",
        worst < 1e-8,
        format!("worst relative error {worst:.3e} (tolerance 1e-8)"),
    );

    report
}

/// Sampling suite: chi-square uniformity, allocation invariants, and the
/// low-discrepancy property of Halton placement.
pub fn sampling_suite() -> SuiteReport {
    let mut report = SuiteReport {
        suite: "sampling".into(),
        checks: Vec::new(),
    };

    let p = rejection_uniformity_p(1_000_000, 8, 77).unwrap();
    report.push(
        "rejection sampling chi-square uniformity",
        p > 0.01,
        format!("p = {p:.4} over 8^3 cells, 1e6 samples (threshold 0.01)"),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut all_ok = true;
    for trial in 0..1000u64 {
        let k = 1 + (rng.random::<u64>() % 50) as usize;
        let mut weights: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-9).collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        let pdf = VoxelPdf {
            voxel_indices: (0..k).collect(),
            weights,
            normalization: total,
        };
        let n = k as u64 + rng.random::<u64>() % 4096;
        let counts = allocate_counts(&pdf, n, trial).unwrap();
        if counts.iter().sum::<u64>() != n || counts.iter().any(|&c| c == 0) {
            all_ok = false;
            break;
        }
    }
    report.push(
        "allocation sum and minimum-one rule",
        all_ok,
        "1000 random PDFs".into(),
    );

    let mut halton_wins = 0;
    let seeds = 10;
    let count = 4096;
    let mut halton_mean = 0.0;
    let mut random_mean = 0.0;
    for s in 0..seeds {
        let hp = halton_points(Vector3::zeros(), 1.0, count, 1 + 977 * s);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let rp: Vec<Vector3<f64>> = (0..count)
            .map(|_| {
                Vector3::new(
                    rng.random::<f64>(),
                    rng.random::<f64>(),
                    rng.random::<f64>(),
                )
            })
            .collect();
        let hd = min_pairwise_distance(&hp);
        let rd = min_pairwise_distance(&rp);
        halton_mean += hd / seeds as f64;
        random_mean += rd / seeds as f64;
        if hd > rd {
            halton_wins += 1;
        }
    }
    report.push(
        "halton minimum pairwise distance beats uniform random",
        halton_mean > random_mean,
        format!(
            "mean over {seeds} seeds: halton {halton_mean:.5} vs random {random_mean:.5} ({halton_wins}/{seeds} wins)"
        ),
    );

    report
}

/// Tonemap suite: invertibility at 1e-12 over random triples.
pub fn tonemap_suite() -> SuiteReport {
    let mut report = SuiteReport {
        suite: "tonemap".into(),
        checks: Vec::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut max_err = 0.0f64;
    for _ in 0..1_000_000 {
        let curve = random_valid_curve(&mut rng);
        let ev = rng.random::<f64>() * 8.0 - 4.0;
        let x = rng.random::<f64>() * ev.exp2();
        let y = tonemap_forward_one(x, ev, &curve);
        let back = tonemap_inverse_one(y, ev, &curve).unwrap();
        max_err = max_err.max((back - x).abs());
        let y2 = rng.random::<f64>();
        let fwd = tonemap_forward_one(tonemap_inverse_one(y2, ev, &curve).unwrap(), ev, &curve);
        max_err = max_err.max((fwd - y2).abs());
    }
    report.push(
        "round trip over 1e6 random (value, ev, curve) triples",
        max_err <= 1e-12,
        format!("max abs error {max_err:.3e} (tolerance 1e-12)"),
    );

    // Unpinned endpoints leave part of [0, 1] without preimage; the
    // validator must reject them.
    let mut values: Vec<f64> = (0..25).map(|i| i as f64 / 24.0 * 0.9).collect();
    let rejected = ResponseCurve::new(values.clone()).is_err();
    *values.last_mut().unwrap() = 1.0;
    report.push(
        "endpoint validator rejects non-covering curves",
        rejected,
        "curve ending at 0.9 rejected".into(),
    );
    report
}

/// Random monotone response curve with bounded gap ratios.
pub fn random_valid_curve(rng: &mut ChaCha8Rng) -> ResponseCurve {
    let k = crate::tonemap::DEFAULT_KNOTS;
    let gaps: Vec<f64> = (0..k - 1).map(|_| 0.2 + 1.6 * rng.random::<f64>()).collect();
    let total: f64 = gaps.iter().sum();
    let mut values = Vec::with_capacity(k);
    values.push(0.0);
    let mut acc = 0.0;
    for g in &gaps[..k - 2] {
        acc += g;
        values.push(acc / total);
    }
    values.push(1.0);
    ResponseCurve::new(values).expect("constructed valid")
}

/// Environment-map suite: constant fit and band-limited distillation
/// quality under the desk-scale schedule.
pub fn envmap_suite() -> SuiteReport {
    let mut report = SuiteReport {
        suite: "envmap".into(),
        checks: Vec::new(),
    };

    let constant = |_d: Vector3<f64>| [0.7, 0.3, 0.2, 0.9];
    let config = DistillConfig {
        height: 32,
        iters: 50,
        batch: 1 << 12,
        seed: 1,
        ..Default::default()
    };
    let (_, rep) = distill_env(&constant, &config).unwrap();
    report.push(
        "constant oracle converges",
        rep.final_mse < 1e-10,
        format!("mse {:.3e} (tolerance 1e-10)", rep.final_mse),
    );

    let sh = ShBackgroundOracle::new(17);
    let oracle = |d: Vector3<f64>| sh.eval(d);
    let config = DistillConfig {
        height: 256,
        iters: 1000,
        batch: 1 << 16,
        seed: 2,
        ..Default::default()
    };
    let (_, rep) = distill_env(&oracle, &config).unwrap();
    let psnr = -10.0 * rep.final_mse.log10();
    report.push(
        "band-limited oracle reaches 40 dB at 256x512",
        psnr >= 40.0,
        format!("psnr {psnr:.1} dB (threshold 40)"),
    );
    let tail_ok = rep
        .losses
        .windows(2)
        .skip(10)
        .all(|w| w[1] <= w[0]);
    report.push(
        "loss non-increasing beyond iteration 10",
        tail_ok,
        "held-out loss curve".into(),
    );
    report
}

/// Run one suite by name.
pub fn run_suite(name: &str) -> Result<SuiteReport> {
    match name {
        "gradcheck" => Ok(gradcheck_suite()),
        "sampling" => Ok(sampling_suite()),
        "tonemap" => Ok(tonemap_suite()),
        "envmap" => Ok(envmap_suite()),
        other => Err(crate::error::Error::invalid("suite", other.to_string())),
    }
}

/// All suite names, in run order.
pub const SUITES: [&str; 4] = ["gradcheck", "sampling", "tonemap", "envmap"];
