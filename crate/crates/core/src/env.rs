//! Equirectangular background environment maps: differentiable bilinear
//! lookup and distillation of a direction-to-feature oracle into the texels.

use nalgebra::Vector3;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sh::{apply_basis, sh_basis, ShBlock, CHANNELS};

/// Full-scale map height (width is twice that).
pub const FULL_SCALE_HEIGHT: u32 = 1024;
/// Full-scale distillation iteration count.
pub const FULL_SCALE_ITERS: u32 = 1000;
/// Full-scale directions per iteration (2^21).
pub const FULL_SCALE_BATCH: usize = 1 << 21;

/// Equirectangular 4-channel texture, `width = 2 * height`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentMap {
    pub height: u32,
    pub width: u32,
    /// Row-major texels.
    pub texels: Vec<[f64; CHANNELS]>,
}

/// The four texels and bilinear weights touched by one lookup.
#[derive(Debug, Clone, Copy)]
pub struct TexelFootprint {
    pub indices: [usize; 4],
    pub weights: [f64; 4],
}

impl EnvironmentMap {
    pub fn new(height: u32, fill: [f64; CHANNELS]) -> Result<Self> {
        if height == 0 {
            return Err(Error::invalid("environment map", "height must be positive"));
        }
        let width = 2 * height;
        Ok(EnvironmentMap {
            height,
            width,
            texels: vec![fill; (width * height) as usize],
        })
    }

    pub fn from_texels(height: u32, texels: Vec<[f64; CHANNELS]>) -> Result<Self> {
        let width = 2 * height;
        if texels.len() != (width * height) as usize {
            return Err(Error::ShapeMismatch(format!(
                "{} texels for a {width}x{height} map",
                texels.len()
            )));
        }
        Ok(EnvironmentMap {
            height,
            width,
            texels,
        })
    }

    /// Bilinear footprint of a unit direction under the equirectangular
    /// mapping `u = (atan2(dx, dz)/2pi + 0.5) W`, `v = acos(dy)/pi * H`,
    /// with azimuthal wrap and polar clamp. The four weights sum to 1 and
    /// are exactly the texel gradients of the lookup.
    pub fn footprint(&self, dir: Vector3<f64>) -> Result<TexelFootprint> {
        let n = dir.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::invalid("direction", "zero-length or non-finite"));
        }
        let d = dir / n;
        let u = (d.x.atan2(d.z) / std::f64::consts::TAU + 0.5) * self.width as f64;
        let v = (d.y.clamp(-1.0, 1.0).acos() / std::f64::consts::PI) * self.height as f64;

        let x = u - 0.5;
        let y = v - 0.5;
        let x0 = x.floor();
        let fx = x - x0;
        let y0 = y.floor();
        let fy = y - y0;
        let w = self.width as i64;
        let h = self.height as i64;
        let c0 = (x0 as i64).rem_euclid(w) as usize;
        let c1 = (x0 as i64 + 1).rem_euclid(w) as usize;
        let r0 = (y0 as i64).clamp(0, h - 1) as usize;
        let r1 = (y0 as i64 + 1).clamp(0, h - 1) as usize;
        let ws = self.width as usize;
        Ok(TexelFootprint {
            indices: [r0 * ws + c0, r0 * ws + c1, r1 * ws + c0, r1 * ws + c1],
            weights: [
                (1.0 - fx) * (1.0 - fy),
                fx * (1.0 - fy),
                (1.0 - fx) * fy,
                fx * fy,
            ],
        })
    }

    /// Bilinear lookup along a unit direction.
    pub fn sample(&self, dir: Vector3<f64>) -> Result<[f64; CHANNELS]> {
        let fp = self.footprint(dir)?;
        let mut out = [0.0; CHANNELS];
        for (idx, w) in fp.indices.iter().zip(fp.weights.iter()) {
            let t = &self.texels[*idx];
            for c in 0..CHANNELS {
                out[c] += w * t[c];
            }
        }
        Ok(out)
    }
}

/// Distillation schedule and shapes; the defaults are the desk-scale run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistillConfig {
    pub height: u32,
    pub iters: u32,
    /// Random directions per iteration.
    pub batch: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub seed: u64,
    /// Directions used for the spherical-mean initialization.
    pub init_samples: usize,
    /// Fixed held-out directions used for the recorded loss curve.
    pub eval_samples: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            height: 256,
            iters: 1000,
            batch: 1 << 16,
            lr_start: 0.01,
            lr_end: 0.001,
            seed: 0,
            init_samples: 1 << 12,
            eval_samples: 1 << 13,
        }
    }
}

impl DistillConfig {
    /// The full-scale schedule: 1024x2048 texels, 1000 iterations, 2^21
    /// directions per iteration, learning rate 0.01 decayed to 0.001.
    pub fn full_scale() -> Self {
        DistillConfig {
            height: FULL_SCALE_HEIGHT,
            iters: FULL_SCALE_ITERS,
            batch: FULL_SCALE_BATCH,
            ..Default::default()
        }
    }
}

/// Convergence record of one distillation run.
#[derive(Debug, Clone)]
pub struct DistillReport {
    /// MSE on the fixed held-out set after each iteration.
    pub losses: Vec<f64>,
    /// Final held-out MSE.
    pub final_mse: f64,
}

fn random_unit_dir(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let z = 1.0 - 2.0 * rng.random::<f64>();
    let phi = std::f64::consts::TAU * rng.random::<f64>();
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vector3::new(r * phi.cos(), z, r * phi.sin())
}

/// Mean squared error of the map against the oracle over a direction set.
pub fn env_mse<F>(map: &EnvironmentMap, oracle: &F, dirs: &[Vector3<f64>]) -> f64
where
    F: Fn(Vector3<f64>) -> [f64; CHANNELS] + Sync,
{
    let total: f64 = dirs
        .par_iter()
        .map(|&d| {
            let pred = map.sample(d).expect("unit direction");
            let target = oracle(d);
            (0..CHANNELS).map(|c| (pred[c] - target[c]).powi(2)).sum::<f64>()
        })
        .sum();
    total / (dirs.len() * CHANNELS) as f64
}

/// Distill a direction oracle into an environment map by stochastic gradient
/// descent on the texels.
///
/// Each iteration samples a fresh batch of uniform directions, measures the
/// squared error of the bilinear lookup, and steps every touched texel along
/// its accumulated residual, normalized by the accumulated bilinear weight.
/// The scatter runs in a fixed sample order, so the result is deterministic
/// for a given seed regardless of thread count. Texels start at an estimate
/// of the oracle's spherical mean.
pub fn distill_env<F>(oracle: &F, config: &DistillConfig) -> Result<(EnvironmentMap, DistillReport)>
where
    F: Fn(Vector3<f64>) -> [f64; CHANNELS] + Sync,
{
    if config.height == 0 || config.batch == 0 {
        return Err(Error::invalid("distill config", "empty map or batch"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Spherical-mean initialization.
    let mut mean = [0.0; CHANNELS];
    for _ in 0..config.init_samples {
        let d = random_unit_dir(&mut rng);
        let t = oracle(d);
        for c in 0..CHANNELS {
            mean[c] += t[c];
        }
    }
    for c in mean.iter_mut() {
        *c /= config.init_samples as f64;
    }
    let mut map = EnvironmentMap::new(config.height, mean)?;

    // Fixed held-out set for the recorded loss curve.
    let eval_dirs: Vec<Vector3<f64>> = (0..config.eval_samples)
        .map(|_| random_unit_dir(&mut rng))
        .collect();

    let n_texels = map.texels.len();
    let mut grad_acc = vec![[0.0f64; CHANNELS]; n_texels];
    let mut weight_acc = vec![0.0f64; n_texels];
    let mut losses = Vec::with_capacity(config.iters as usize);

    let decay = if config.iters > 1 {
        (config.lr_end / config.lr_start).powf(1.0 / (config.iters - 1) as f64)
    } else {
        1.0
    };

    for iter in 0..config.iters {
        let lr = config.lr_start * decay.powi(iter as i32);
        let dirs: Vec<Vector3<f64>> = (0..config.batch)
            .map(|_| random_unit_dir(&mut rng))
            .collect();
        let samples: Vec<(TexelFootprint, [f64; CHANNELS])> = dirs
            .par_iter()
            .map(|&d| {
                let fp = map.footprint(d).expect("unit direction");
                let mut residual = [0.0; CHANNELS];
                let target = oracle(d);
                for (idx, w) in fp.indices.iter().zip(fp.weights.iter()) {
                    for c in 0..CHANNELS {
                        residual[c] += w * map.texels[*idx][c];
                    }
                }
                for c in 0..CHANNELS {
                    residual[c] -= target[c];
                }
                (fp, residual)
            })
            .collect();

        // Deterministic scatter in sample order.
        for (fp, residual) in &samples {
            for (idx, w) in fp.indices.iter().zip(fp.weights.iter()) {
                weight_acc[*idx] += w;
                for c in 0..CHANNELS {
                    grad_acc[*idx][c] += w * residual[c];
                }
            }
        }
        for t in 0..n_texels {
            if weight_acc[t] > 0.0 {
                let inv = 1.0 / weight_acc[t];
                for c in 0..CHANNELS {
                    map.texels[t][c] -= lr * 2.0 * grad_acc[t][c] * inv;
                    grad_acc[t][c] = 0.0;
                }
                weight_acc[t] = 0.0;
            }
        }

        let loss = env_mse(&map, oracle, &eval_dirs);
        if !loss.is_finite() {
            return Err(Error::invalid(
                "distillation",
                format!("non-finite loss {loss} at iteration {iter}"),
            ));
        }
        losses.push(loss);
    }

    let final_mse = losses.last().copied().unwrap_or(0.0);
    Ok((map, DistillReport { losses, final_mse }))
}

/// Band-limited background oracle: a degree-2 SH expansion per channel with
/// outputs inside [0, 1]. Representable by a modest equirectangular map, so
/// distillation quality is measurable against it.
#[derive(Debug, Clone)]
pub struct ShBackgroundOracle {
    coeffs: ShBlock,
}

impl ShBackgroundOracle {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coeffs = [[0.0; crate::sh::SH_COEFFS]; CHANNELS];
        for ch in coeffs.iter_mut() {
            // DC around 0.5, higher orders bounded so values stay in [0, 1].
            ch[0] = (0.4 + 0.2 * rng.random::<f64>()) / 0.282_094_791_773_878_14;
            for v in ch.iter_mut().skip(1) {
                *v = 0.25 * (rng.random::<f64>() * 2.0 - 1.0);
            }
        }
        ShBackgroundOracle { coeffs }
    }

    pub fn eval(&self, dir: Vector3<f64>) -> [f64; CHANNELS] {
        let basis = sh_basis(dir);
        let mut out = apply_basis(&self.coeffs, &basis);
        for v in out.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_map_returns_constant() {
        let map = EnvironmentMap::new(8, [0.1, 0.2, 0.3, 0.4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let d = random_unit_dir(&mut rng);
            let s = map.sample(d).unwrap();
            for c in 0..CHANNELS {
                assert_relative_eq!(s[c], [0.1, 0.2, 0.3, 0.4][c], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn texel_center_direction_hits_single_texel() {
        let mut map = EnvironmentMap::new(16, [0.0; 4]).unwrap();
        let (col, row) = (5u32, 7u32);
        map.texels[(row * map.width + col) as usize] = [9.0, 0.0, 0.0, 0.0];
        // Invert the mapping at the texel center.
        let u = col as f64 + 0.5;
        let v = row as f64 + 0.5;
        let az = (u / map.width as f64 - 0.5) * std::f64::consts::TAU;
        let polar = v / map.height as f64 * std::f64::consts::PI;
        let d = Vector3::new(
            polar.sin() * az.sin(),
            polar.cos(),
            polar.sin() * az.cos(),
        );
        // At an interpolation node one weight carries everything (the
        // reconstruction may land on either side of the node).
        let fp = map.footprint(d).unwrap();
        let max_w = fp.weights.iter().cloned().fold(0.0f64, f64::max);
        assert_relative_eq!(max_w, 1.0, epsilon = 1e-9);
        let s = map.sample(d).unwrap();
        assert_relative_eq!(s[0], 9.0, epsilon = 1e-8);
    }

    #[test]
    fn footprint_weights_sum_to_one() {
        let map = EnvironmentMap::new(32, [0.0; 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10_000 {
            let d = random_unit_dir(&mut rng);
            let fp = map.footprint(d).unwrap();
            let sum: f64 = fp.weights.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn seam_interpolates_between_last_and_first_columns() {
        // Independent check: an explicit clamped lookup over a copy of the
        // texel grid extended by one wrapped column.
        let mut map = EnvironmentMap::new(8, [0.0; 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for t in map.texels.iter_mut() {
            *t = std::array::from_fn(|_| rng.random::<f64>());
        }
        let extended_sample = |u: f64, v: f64| -> [f64; 4] {
            // u in [0, W]; columns 0..=W with column W = column 0.
            let w = map.width as usize;
            let read = |col: usize, row: usize| map.texels[row * w + (col % w)];
            let x = u - 0.5;
            let y = (v - 0.5).clamp(0.0, map.height as f64 - 1.0);
            let x0 = x.floor();
            let fx = x - x0;
            let y0 = y.floor();
            let fy = y - y0;
            let (c0, c1) = (x0 as usize, x0 as usize + 1);
            let (r0, r1) = (y0 as usize, (y0 as usize + 1).min(map.height as usize - 1));
            let mut out = [0.0; 4];
            for c in 0..4 {
                out[c] = read(c0, r0)[c] * (1.0 - fx) * (1.0 - fy)
                    + read(c1, r0)[c] * fx * (1.0 - fy)
                    + read(c0, r1)[c] * (1.0 - fx) * fy
                    + read(c1, r1)[c] * fx * fy;
            }
            out
        };
        // Directions with azimuth near the wrap line u = W.
        for frac in [0.96875, 0.99, 0.999] {
            let u = frac * map.width as f64;
            let v = 0.4 * map.height as f64;
            let az = (u / map.width as f64 - 0.5) * std::f64::consts::TAU;
            let polar = v / map.height as f64 * std::f64::consts::PI;
            let d = Vector3::new(
                polar.sin() * az.sin(),
                polar.cos(),
                polar.sin() * az.cos(),
            );
            let got = map.sample(d).unwrap();
            let expected = extended_sample(u, v);
            for c in 0..4 {
                assert_relative_eq!(got[c], expected[c], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn zero_direction_rejected() {
        let map = EnvironmentMap::new(4, [0.0; 4]).unwrap();
        assert!(map.sample(Vector3::zeros()).is_err());
    }

    #[test]
    fn texel_gradients_match_finite_differences() {
        let mut map = EnvironmentMap::new(8, [0.0; 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for t in map.texels.iter_mut() {
            *t = std::array::from_fn(|_| rng.random::<f64>());
        }
        for _ in 0..50 {
            let d = random_unit_dir(&mut rng);
            let fp = map.footprint(d).unwrap();
            let h = 1e-6;
            for (slot, &idx) in fp.indices.iter().enumerate() {
                let base = map.texels[idx][0];
                map.texels[idx][0] = base + h;
                let plus = map.sample(d).unwrap()[0];
                map.texels[idx][0] = base - h;
                let minus = map.sample(d).unwrap()[0];
                map.texels[idx][0] = base;
                let fd = (plus - minus) / (2.0 * h);
                // Duplicate indices (polar clamp / wrap) fold two slots
                // into one texel; compare against the summed weight.
                let weight: f64 = fp
                    .indices
                    .iter()
                    .zip(fp.weights.iter())
                    .filter(|(i, _)| **i == idx)
                    .map(|(_, w)| *w)
                    .sum();
                let _ = slot;
                assert_relative_eq!(fd, weight, max_relative = 1e-8, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn constant_oracle_distills_to_constant() {
        let oracle = |_d: Vector3<f64>| [0.7, 0.3, 0.2, 0.9];
        let config = DistillConfig {
            height: 16,
            iters: 20,
            batch: 1 << 10,
            seed: 5,
            ..Default::default()
        };
        let (_, report) = distill_env(&oracle, &config).unwrap();
        assert!(report.final_mse < 1e-10, "mse {}", report.final_mse);
    }

    #[test]
    fn distillation_fits_band_limited_oracle() {
        let sh = ShBackgroundOracle::new(21);
        let oracle = |d: Vector3<f64>| sh.eval(d);
        let config = DistillConfig {
            height: 64,
            iters: 1000,
            batch: 1 << 12,
            seed: 2,
            ..Default::default()
        };
        let (map, report) = distill_env(&oracle, &config).unwrap();
        let psnr = -10.0 * report.final_mse.log10();
        assert!(psnr >= 40.0, "psnr {psnr}");
        // Spot check against the oracle away from training directions.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let d = random_unit_dir(&mut rng);
            let got = map.sample(d).unwrap();
            let want = oracle(d);
            for c in 0..4 {
                assert!((got[c] - want[c]).abs() < 0.1);
            }
        }
    }

    #[test]
    fn distillation_deterministic_across_thread_counts() {
        let sh = ShBackgroundOracle::new(3);
        let oracle = |d: Vector3<f64>| sh.eval(d);
        let config = DistillConfig {
            height: 16,
            iters: 10,
            batch: 1 << 10,
            seed: 8,
            ..Default::default()
        };
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let (m1, _) = pool1.install(|| distill_env(&oracle, &config)).unwrap();
        let (m4, _) = pool4.install(|| distill_env(&oracle, &config)).unwrap();
        assert_eq!(m1.texels, m4.texels);
    }
}
