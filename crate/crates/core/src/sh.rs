//! Real spherical harmonics up to degree two.
//!
//! Uses the real basis common in graphics (no Condon-Shortley phase), ordered
//! `[Y00, Y1-1, Y10, Y11, Y2-2, Y2-1, Y20, Y21, Y22]`. Outputs are
//! convention-dependent; all stored coefficient blocks in this crate use this
//! basis.

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Number of basis functions for degree ≤ 2.
pub const SH_COEFFS: usize = 9;
/// Feature channels carried per point.
pub const CHANNELS: usize = 4;

/// A 4-channel block of degree-2 coefficients, channel-major.
pub type ShBlock = [[f64; SH_COEFFS]; CHANNELS];

const C0: f64 = 0.282_094_791_773_878_14; // 1/(2*sqrt(pi))
const C1: f64 = 0.488_602_511_902_919_9; // sqrt(3/(4*pi))
const C2A: f64 = 1.092_548_430_592_079_2; // sqrt(15/(4*pi))
const C2B: f64 = 0.315_391_565_252_520_05; // sqrt(5/(16*pi))
const C2C: f64 = 0.546_274_215_296_039_6; // sqrt(15/(16*pi))

/// Evaluate the nine basis functions for a unit direction.
///
/// The direction is normalized internally; callers on hot paths should pass
/// unit vectors to avoid the extra work being wasted.
#[inline]
pub fn sh_basis(dir: Vector3<f64>) -> [f64; SH_COEFFS] {
    let n = dir.norm();
    let (x, y, z) = if (n - 1.0).abs() <= 1e-12 {
        (dir.x, dir.y, dir.z)
    } else {
        (dir.x / n, dir.y / n, dir.z / n)
    };
    [
        C0,
        C1 * y,
        C1 * z,
        C1 * x,
        C2A * x * y,
        C2A * y * z,
        C2B * (3.0 * z * z - 1.0),
        C2A * x * z,
        C2C * (x * x - y * y),
    ]
}

/// Contract a coefficient block against a precomputed basis vector.
#[inline]
pub fn apply_basis(coeffs: &ShBlock, basis: &[f64; SH_COEFFS]) -> [f64; CHANNELS] {
    let mut out = [0.0; CHANNELS];
    for (c, row) in coeffs.iter().enumerate() {
        let mut acc = 0.0;
        for (v, b) in row.iter().zip(basis.iter()) {
            acc += v * b;
        }
        out[c] = acc;
    }
    out
}

/// Evaluate a degree-2 coefficient block at a view direction.
///
/// Non-unit directions are normalized internally. A zero direction or a NaN
/// coefficient is an error.
pub fn eval_sh_degree2(coeffs: &ShBlock, dir: Vector3<f64>) -> Result<[f64; CHANNELS]> {
    if dir.norm() == 0.0 || !dir.norm().is_finite() {
        return Err(Error::invalid("direction", "zero-length or non-finite"));
    }
    if coeffs.iter().flatten().any(|v| v.is_nan()) {
        return Err(Error::invalid("sh coefficients", "NaN entry"));
    }
    let basis = sh_basis(dir);
    Ok(apply_basis(coeffs, &basis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dc_block(value: f64) -> ShBlock {
        let mut b = [[0.0; SH_COEFFS]; CHANNELS];
        for ch in &mut b {
            ch[0] = value;
        }
        b
    }

    #[test]
    fn dc_only_gives_y00_constant() {
        let out = eval_sh_degree2(&dc_block(1.0), Vector3::new(0.3, -0.2, 0.5)).unwrap();
        for c in out {
            assert_relative_eq!(c, 0.282_094_791_8, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_coeffs_give_zero() {
        let out = eval_sh_degree2(&[[0.0; SH_COEFFS]; CHANNELS], Vector3::new(0.0, 0.0, 1.0))
            .unwrap();
        assert_eq!(out, [0.0; CHANNELS]);
    }

    #[test]
    fn y10_is_odd_in_z() {
        let mut coeffs = [[0.0; SH_COEFFS]; CHANNELS];
        coeffs[0][2] = 1.0;
        let up = eval_sh_degree2(&coeffs, Vector3::new(0.0, 0.0, 1.0)).unwrap();
        let down = eval_sh_degree2(&coeffs, Vector3::new(0.0, 0.0, -1.0)).unwrap();
        assert_relative_eq!(up[0], -down[0], epsilon = 1e-15);
        assert!(up[0] > 0.4);
    }

    #[test]
    fn non_unit_direction_is_normalized() {
        let mut coeffs = [[0.0; SH_COEFFS]; CHANNELS];
        coeffs[1][3] = 2.0;
        let a = eval_sh_degree2(&coeffs, Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let b = eval_sh_degree2(&coeffs, Vector3::new(7.5, 0.0, 0.0)).unwrap();
        assert_relative_eq!(a[1], b[1], epsilon = 1e-14);
    }

    #[test]
    fn nan_coefficient_rejected() {
        let mut coeffs = [[0.0; SH_COEFFS]; CHANNELS];
        coeffs[2][4] = f64::NAN;
        assert!(eval_sh_degree2(&coeffs, Vector3::new(0.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn linearity_in_coefficients() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let mut c1 = [[0.0; SH_COEFFS]; CHANNELS];
            let mut c2 = [[0.0; SH_COEFFS]; CHANNELS];
            for ch in 0..CHANNELS {
                for j in 0..SH_COEFFS {
                    c1[ch][j] = rng.random::<f64>() * 2.0 - 1.0;
                    c2[ch][j] = rng.random::<f64>() * 2.0 - 1.0;
                }
            }
            let (a, b) = (0.7, -1.3);
            let mut mixed = [[0.0; SH_COEFFS]; CHANNELS];
            for ch in 0..CHANNELS {
                for j in 0..SH_COEFFS {
                    mixed[ch][j] = a * c1[ch][j] + b * c2[ch][j];
                }
            }
            let dir = Vector3::new(
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
                rng.random::<f64>() - 0.5,
            )
            .normalize();
            let lhs = eval_sh_degree2(&mixed, dir).unwrap();
            let r1 = eval_sh_degree2(&c1, dir).unwrap();
            let r2 = eval_sh_degree2(&c2, dir).unwrap();
            for ch in 0..CHANNELS {
                assert_relative_eq!(lhs[ch], a * r1[ch] + b * r2[ch], epsilon = 1e-12);
            }
        }
    }
}
