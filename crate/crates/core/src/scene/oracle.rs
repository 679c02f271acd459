//! Procedural appearance oracle.
//!
//! Stands in for a trained appearance field: maps a contracted 3D position to
//! an opacity and a degree-2 SH coefficient block. Smooth trigonometric waves
//! keep renders spatially coherent; every parameter derives from the seed, so
//! outputs are reproducible anywhere.

use nalgebra::Vector3;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sh::{ShBlock, CHANNELS, SH_COEFFS};

#[derive(Debug, Clone, Copy)]
struct Wave {
    freq: Vector3<f64>,
    phase: f64,
    amplitude: f64,
}

impl Wave {
    #[inline]
    fn eval(&self, p: Vector3<f64>) -> f64 {
        self.amplitude * (self.freq.dot(&p) + self.phase).sin()
    }
}

fn random_wave(rng: &mut ChaCha8Rng, amplitude: f64, freq_lo: f64, freq_hi: f64) -> Wave {
    // Random direction scaled by a random frequency magnitude.
    let dir = loop {
        let v = Vector3::new(
            rng.random::<f64>() * 2.0 - 1.0,
            rng.random::<f64>() * 2.0 - 1.0,
            rng.random::<f64>() * 2.0 - 1.0,
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            break v / n;
        }
    };
    let scale = freq_lo + (freq_hi - freq_lo) * rng.random::<f64>();
    Wave {
        freq: dir * scale,
        phase: rng.random::<f64>() * std::f64::consts::TAU,
        amplitude,
    }
}

/// Deterministic stand-in appearance field over the contraction ball.
#[derive(Debug, Clone)]
pub struct AppearanceOracle {
    seed: u64,
    opacity_waves: [Wave; 3],
    dc_waves: [Wave; CHANNELS],
    dc_offsets: [f64; CHANNELS],
    coeff_waves: Vec<Wave>, // CHANNELS x (SH_COEFFS - 1), row-major
}

impl AppearanceOracle {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Fixed amplitudes summing to 5 so the sigmoid argument regularly
        // reaches past +-3 and the opacity histogram spans (0, 1).
        let opacity_waves = [
            random_wave(&mut rng, 2.5, 1.5, 4.0),
            random_wave(&mut rng, 1.5, 1.5, 4.0),
            random_wave(&mut rng, 1.0, 1.5, 4.0),
        ];
        let mut dc_waves = [Wave {
            freq: Vector3::zeros(),
            phase: 0.0,
            amplitude: 0.0,
        }; CHANNELS];
        let mut dc_offsets = [0.0; CHANNELS];
        for c in 0..CHANNELS {
            dc_waves[c] = random_wave(&mut rng, 0.35, 1.0, 3.0);
            dc_offsets[c] = 0.4 + 0.2 * rng.random::<f64>();
        }
        let mut coeff_waves = Vec::with_capacity(CHANNELS * (SH_COEFFS - 1));
        for _c in 0..CHANNELS {
            for j in 1..SH_COEFFS {
                let amp = if j < 4 { 0.15 } else { 0.05 };
                coeff_waves.push(random_wave(&mut rng, amp, 1.0, 3.0));
            }
        }
        AppearanceOracle {
            seed,
            opacity_waves,
            dc_waves,
            dc_offsets,
            coeff_waves,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Evaluate one contracted position. The position must lie inside the
    /// contraction ball (norm ≤ 2).
    pub fn query_one(&self, p: Vector3<f64>) -> Result<(f64, ShBlock)> {
        if p.norm() > 2.0 + 1e-6 {
            return Err(Error::invalid(
                "position",
                format!("norm {} outside contraction ball", p.norm()),
            ));
        }
        let s: f64 = self.opacity_waves.iter().map(|w| w.eval(p)).sum();
        let opacity = 1.0 / (1.0 + (-s).exp());
        let mut block = [[0.0; SH_COEFFS]; CHANNELS];
        for c in 0..CHANNELS {
            block[c][0] = self.dc_offsets[c] + self.dc_waves[c].eval(p);
            for j in 1..SH_COEFFS {
                block[c][j] = self.coeff_waves[c * (SH_COEFFS - 1) + j - 1].eval(p);
            }
        }
        Ok((opacity, block))
    }

    /// Batch query; equivalent to mapping [`Self::query_one`] over positions.
    pub fn query(&self, positions: &[Vector3<f64>]) -> Result<(Vec<f64>, Vec<ShBlock>)> {
        let mut opacities = Vec::with_capacity(positions.len());
        let mut blocks = Vec::with_capacity(positions.len());
        for &p in positions {
            let (o, b) = self.query_one(p)?;
            opacities.push(o);
            blocks.push(b);
        }
        Ok((opacities, blocks))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = AppearanceOracle::new(99);
        let b = AppearanceOracle::new(99);
        let p = Vector3::new(0.3, -0.7, 0.2);
        assert_eq!(a.query_one(p).unwrap(), b.query_one(p).unwrap());
    }

    #[test]
    fn batch_matches_single_queries() {
        let oracle = AppearanceOracle::new(3);
        let pts = vec![
            Vector3::new(0.1, 0.2, 0.3),
            Vector3::new(-0.5, 0.0, 0.9),
            Vector3::new(1.2, -0.4, 0.1),
        ];
        let (ops, blocks) = oracle.query(&pts).unwrap();
        for (i, &p) in pts.iter().enumerate() {
            let (o, b) = oracle.query_one(p).unwrap();
            assert_eq!(ops[i], o);
            assert_eq!(blocks[i], b);
        }
    }

    #[test]
    fn rejects_positions_outside_ball() {
        let oracle = AppearanceOracle::new(0);
        assert!(oracle.query_one(Vector3::new(2.1, 0.0, 0.0)).is_err());
        assert!(oracle.query_one(Vector3::new(2.0, 0.0, 0.0)).is_ok());
    }

    #[test]
    fn opacity_spans_unit_interval() {
        // Validated once against the oracle parameterization: the histogram
        // over 1e5 in-ball positions must be non-degenerate.
        use rand::prelude::*;
        let oracle = AppearanceOracle::new(12345);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(777);
        let (mut lo, mut hi) = (1.0f64, 0.0f64);
        for _ in 0..100_000 {
            let p = loop {
                let v = Vector3::new(
                    rng.random::<f64>() * 4.0 - 2.0,
                    rng.random::<f64>() * 4.0 - 2.0,
                    rng.random::<f64>() * 4.0 - 2.0,
                );
                if v.norm() <= 2.0 {
                    break v;
                }
            };
            let (o, _) = oracle.query_one(p).unwrap();
            assert!((0.0..=1.0).contains(&o));
            lo = lo.min(o);
            hi = hi.max(o);
        }
        assert!(lo < 0.1, "min opacity {lo} not below 0.1");
        assert!(hi > 0.9, "max opacity {hi} not above 0.9");
    }
}
