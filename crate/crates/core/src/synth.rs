//! Deterministic synthetic scene generators: a probability field, an
//! appearance-oracle seed, and a ring of cameras, packaged as a scene.

use nalgebra::Vector3;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{Scene, SceneHeader};
use crate::scene::{CameraView, ProbabilityField, Voxel};

/// Default number of camera poses on the ring.
pub const DEFAULT_CAMERA_COUNT: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    /// A floor and a few axis-aligned boxes inside a room.
    Boxes,
    /// Soft spherical blobs at random centers.
    RandomBlobs,
    /// A thin spherical shell around the origin.
    Shell,
}

impl std::str::FromStr for SceneKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "boxes" => Ok(SceneKind::Boxes),
            "blobs" | "random-blobs" => Ok(SceneKind::RandomBlobs),
            "shell" => Ok(SceneKind::Shell),
            other => Err(Error::invalid("scene kind", other.to_string())),
        }
    }
}

enum Layout {
    /// Floor slab plus axis-aligned boxes: (center, half-extent) pairs.
    Boxes(Vec<(Vector3<f64>, Vector3<f64>)>),
    /// Soft spheres: (center, radius) pairs.
    Blobs(Vec<(Vector3<f64>, f64)>),
    Shell,
}

impl Layout {
    fn build(kind: SceneKind, seed: u64) -> Layout {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match kind {
            SceneKind::Boxes => Layout::Boxes(vec![
                (Vector3::new(-0.4, 0.45, -0.2), Vector3::new(0.25, 0.35, 0.25)),
                (Vector3::new(0.35, 0.55, 0.3), Vector3::new(0.2, 0.25, 0.2)),
                (Vector3::new(0.1, 0.65, -0.45), Vector3::new(0.3, 0.15, 0.15)),
            ]),
            SceneKind::RandomBlobs => Layout::Blobs(
                (0..6)
                    .map(|_| {
                        let c = Vector3::new(
                            rng.random::<f64>() * 1.2 - 0.6,
                            rng.random::<f64>() * 1.2 - 0.6,
                            rng.random::<f64>() * 1.2 - 0.6,
                        );
                        (c, 0.15 + 0.2 * rng.random::<f64>())
                    })
                    .collect(),
            ),
            SceneKind::Shell => Layout::Shell,
        }
    }

    /// Weight at a voxel center `p` in scene coordinates ([-1, 1]^3).
    fn density(&self, p: Vector3<f64>) -> f64 {
        match self {
            Layout::Boxes(boxes) => {
                let mut w: f64 = 0.0;
                if p.y > 0.75 && p.y < 0.95 {
                    w = 1.0;
                }
                for (c, half) in boxes {
                    let d = p - c;
                    if d.x.abs() < half.x && d.y.abs() < half.y && d.z.abs() < half.z {
                        w = 1.0;
                    }
                }
                w
            }
            Layout::Blobs(blobs) => {
                let mut w = 0.0;
                for (c, r) in blobs {
                    let d = (p - c).norm();
                    if d < *r {
                        w += 1.0 - d / r;
                    }
                }
                w
            }
            Layout::Shell => {
                let r = p.norm();
                if (r - 0.7).abs() < 0.08 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Build the sparse field for a scene kind at the given base resolution.
pub fn generate_field(kind: SceneKind, resolution: u32, seed: u64) -> Result<ProbabilityField> {
    let bounds_min = Vector3::repeat(-1.0);
    let extent = 2.0;
    let size = extent / resolution as f64;
    let layout = Layout::build(kind, seed);
    let mut voxels = Vec::new();
    for ix in 0..resolution {
        for iy in 0..resolution {
            for iz in 0..resolution {
                let center = bounds_min
                    + Vector3::new(
                        (ix as f64 + 0.5) * size,
                        (iy as f64 + 0.5) * size,
                        (iz as f64 + 0.5) * size,
                    );
                let w = layout.density(center);
                if w > 0.0 {
                    voxels.push(Voxel {
                        index: [ix, iy, iz],
                        level: 0,
                        center,
                        size,
                        weight: w,
                    });
                }
            }
        }
    }
    ProbabilityField::new(resolution, bounds_min, extent, voxels)
}

/// A ring of cameras orbiting the origin, looking inward.
pub fn camera_ring(count: usize, width: u32, height: u32, seed: u64) -> Vec<CameraView> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xca3e);
    (0..count)
        .map(|i| {
            let angle = std::f64::consts::TAU * i as f64 / count as f64;
            let radius = 2.4 + 0.2 * rng.random::<f64>();
            let eye = Vector3::new(
                radius * angle.cos(),
                -0.3 - 0.2 * rng.random::<f64>(),
                radius * angle.sin(),
            );
            CameraView::look_at(
                eye,
                Vector3::zeros(),
                Vector3::new(0.0, -1.0, 0.0),
                width as f64 * 0.9,
                width as f64 * 0.9,
                width,
                height,
                0.05,
            )
        })
        .collect()
}

/// Generate a full scene: field, oracle seed, and camera ring.
pub fn generate(kind: SceneKind, resolution: u32, seed: u64, cameras: usize) -> Result<Scene> {
    let field = generate_field(kind, resolution, seed)?;
    let cams = camera_ring(cameras, 192, 144, seed);
    Ok(Scene {
        header: SceneHeader {
            version: 1,
            seed,
            oracle_seed: crate::sampling::mix64(seed ^ 0x6f72_6163_6c65),
            bounds_min: [-1.0, -1.0, -1.0],
            extent: 2.0,
            resolution,
        },
        field,
        cameras: cams,
        points: Vec::new(),
    })
}
