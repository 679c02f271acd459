//! Sparse probability field over cubic voxels.

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// 64-bit voxel identity: levels 0-15 in the top nibble, a 60-bit Morton code
/// below. Sorting by id groups voxels by level and then along the Z-curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VoxelId(pub u64);

/// Interleave the low 20 bits of three lattice coordinates.
pub fn morton3(ix: u32, iy: u32, iz: u32) -> u64 {
    fn split(mut x: u64) -> u64 {
        x &= 0xf_ffff;
        x = (x | x << 32) & 0x1f00000000ffff;
        x = (x | x << 16) & 0x1f0000ff0000ff;
        x = (x | x << 8) & 0x100f00f00f00f00f;
        x = (x | x << 4) & 0x10c30c30c30c30c3;
        x = (x | x << 2) & 0x1249249249249249;
        x
    }
    split(ix as u64) | split(iy as u64) << 1 | split(iz as u64) << 2
}

/// One cubic voxel of the field.
#[derive(Debug, Clone, PartialEq)]
pub struct Voxel {
    /// Lattice index at this voxel's level.
    pub index: [u32; 3],
    /// Subdivision level: 0 = base resolution, each level halves the edge.
    pub level: u8,
    pub center: Vector3<f64>,
    /// Edge length in world units.
    pub size: f64,
    /// Non-negative sampling weight.
    pub weight: f64,
}

impl Voxel {
    pub fn id(&self) -> VoxelId {
        VoxelId(
            (self.level as u64) << 60
                | morton3(self.index[0], self.index[1], self.index[2]),
        )
    }

    /// Minimum corner of the voxel cube.
    #[inline]
    pub fn min_corner(&self) -> Vector3<f64> {
        self.center - Vector3::repeat(self.size / 2.0)
    }
}

/// Sparse cubic-voxel grid with per-voxel sampling weights.
///
/// The lattice is anchored at `bounds_min` with a cubic extent of
/// `extent` world units; level-0 voxels have edge `extent / resolution`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityField {
    /// Base lattice resolution per axis.
    pub resolution: u32,
    pub bounds_min: Vector3<f64>,
    pub extent: f64,
    /// Voxels sorted by [`VoxelId`].
    pub voxels: Vec<Voxel>,
}

/// Default base resolution per axis.
pub const DEFAULT_RESOLUTION: u32 = 128;

impl ProbabilityField {
    pub fn new(
        resolution: u32,
        bounds_min: Vector3<f64>,
        extent: f64,
        mut voxels: Vec<Voxel>,
    ) -> Result<Self> {
        voxels.sort_by_key(|v| v.id());
        let field = ProbabilityField {
            resolution,
            bounds_min,
            extent,
            voxels,
        };
        field.validate()?;
        Ok(field)
    }

    /// Edge length of a voxel at the given level.
    pub fn level_size(&self, level: u8) -> f64 {
        self.extent / ((self.resolution as u64) << level) as f64
    }

    /// Expected center for a lattice index at a level.
    pub fn lattice_center(&self, index: [u32; 3], level: u8) -> Vector3<f64> {
        let size = self.level_size(level);
        self.bounds_min
            + Vector3::new(
                (index[0] as f64 + 0.5) * size,
                (index[1] as f64 + 0.5) * size,
                (index[2] as f64 + 0.5) * size,
            )
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution == 0 {
            return Err(Error::invalid("field", "resolution must be positive"));
        }
        if !(self.extent > 0.0) {
            return Err(Error::invalid("field", "extent must be positive"));
        }
        if self.voxels.is_empty() {
            return Err(Error::invalid("field", "no voxels"));
        }
        let mut any_positive = false;
        let mut prev: Option<VoxelId> = None;
        for v in &self.voxels {
            if !(v.weight >= 0.0) {
                return Err(Error::invalid("field", "negative or NaN weight"));
            }
            any_positive |= v.weight > 0.0;
            if !(v.size > 0.0) {
                return Err(Error::invalid("field", "non-positive voxel size"));
            }
            let expect_size = self.level_size(v.level);
            if (v.size - expect_size).abs() > 1e-12 * expect_size {
                return Err(Error::invalid(
                    "field",
                    format!("voxel size {} off lattice size {}", v.size, expect_size),
                ));
            }
            let cells = (self.resolution as u64) << v.level;
            if v.index.iter().any(|&i| (i as u64) >= cells) {
                return Err(Error::invalid("field", "voxel index outside lattice"));
            }
            let expect_center = self.lattice_center(v.index, v.level);
            if (v.center - expect_center).norm() > 1e-9 * v.size.max(1.0) {
                return Err(Error::invalid("field", "voxel center off lattice"));
            }
            let id = v.id();
            if prev == Some(id) {
                return Err(Error::invalid("field", "duplicate voxel index"));
            }
            if let Some(p) = prev {
                if id < p {
                    return Err(Error::invalid("field", "voxels not sorted by id"));
                }
            }
            prev = Some(id);
        }
        if !any_positive {
            return Err(Error::invalid("field", "all weights are zero"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }
}
