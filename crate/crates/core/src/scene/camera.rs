//! Pinhole cameras, frustum tests, and cached per-pixel ray directions.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Pinhole camera with a world-to-camera rigid transform and optional radial
/// distortion. Camera space is x-right, y-down, z-forward; pixel centers sit
/// at half-integer coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    /// World-to-camera translation: `p_cam = R * p_world + t`.
    pub translation: Vector3<f64>,
    pub z_near: f64,
    /// Radial distortion coefficients `[k1, k2]`, applied in normalized
    /// image coordinates during projection.
    pub distortion: Option<[f64; 2]>,
}

impl CameraView {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::invalid("camera", "focal lengths must be positive"));
        }
        if self.z_near <= 0.0 {
            return Err(Error::invalid("camera", "z_near must be positive"));
        }
        if self.width < 1 || self.height < 1 {
            return Err(Error::invalid("camera", "image must be at least 1x1"));
        }
        let rtr = self.rotation.transpose() * self.rotation;
        if (rtr - Matrix3::identity()).norm() > 1e-9 {
            return Err(Error::invalid("camera", "rotation is not orthonormal"));
        }
        Ok(())
    }

    /// Camera looking from `eye` toward `target` with the given up hint.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        fx: f64,
        fy: f64,
        width: u32,
        height: u32,
        z_near: f64,
    ) -> Self {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right).normalize();
        let rotation = Matrix3::from_rows(&[
            right.transpose(),
            down.transpose(),
            forward.transpose(),
        ]);
        let translation = -rotation * eye;
        CameraView {
            fx,
            fy,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            rotation,
            translation,
            z_near,
            distortion: None,
        }
    }

    #[inline]
    pub fn to_camera(&self, p_world: Vector3<f64>) -> Vector3<f64> {
        self.rotation * p_world + self.translation
    }

    /// Camera center in world coordinates.
    #[inline]
    pub fn origin(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Project a camera-space point to continuous pixel coordinates.
    /// Requires `z > 0`; distortion is applied when present.
    #[inline]
    pub fn project_camera(&self, p: Vector3<f64>) -> (f64, f64) {
        let xn = p.x / p.z;
        let yn = p.y / p.z;
        let (xd, yd) = match self.distortion {
            Some([k1, k2]) => {
                let r2 = xn * xn + yn * yn;
                let f = 1.0 + k1 * r2 + k2 * r2 * r2;
                (xn * f, yn * f)
            }
            None => (xn, yn),
        };
        (self.fx * xd + self.cx, self.fy * yd + self.cy)
    }

    /// World point inside the viewing frustum: in front of the near plane and
    /// projecting inside the image bounds.
    #[inline]
    pub fn in_frustum(&self, p_world: Vector3<f64>) -> bool {
        let p = self.to_camera(p_world);
        if p.z < self.z_near {
            return false;
        }
        let (u, v) = self.project_camera(p);
        u >= 0.0 && u <= self.width as f64 && v >= 0.0 && v <= self.height as f64
    }

    /// Back-project a continuous pixel coordinate to a unit direction in the
    /// camera frame, undistorting when coefficients are present.
    pub fn backproject_pixel(&self, u: f64, v: f64) -> Vector3<f64> {
        let xd = (u - self.cx) / self.fx;
        let yd = (v - self.cy) / self.fy;
        let (mut xu, mut yu) = (xd, yd);
        if let Some([k1, k2]) = self.distortion {
            // Fixed-point undistortion; converges fast for small k1/k2.
            for _ in 0..10 {
                let r2 = xu * xu + yu * yu;
                let f = 1.0 + k1 * r2 + k2 * r2 * r2;
                xu = xd / f;
                yu = yd / f;
            }
        }
        Vector3::new(xu, yu, 1.0).normalize()
    }

    /// Intrinsics-only cache key for direction grids.
    pub fn intrinsics_key(&self) -> IntrinsicsKey {
        let [k1, k2] = self.distortion.unwrap_or([f64::NAN, f64::NAN]);
        IntrinsicsKey {
            fx: self.fx.to_bits(),
            fy: self.fy.to_bits(),
            cx: self.cx.to_bits(),
            cy: self.cy.to_bits(),
            width: self.width,
            height: self.height,
            k1: k1.to_bits(),
            k2: k2.to_bits(),
        }
    }
}

/// Bit-exact intrinsics tuple; pose is deliberately absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IntrinsicsKey {
    fx: u64,
    fy: u64,
    cx: u64,
    cy: u64,
    width: u32,
    height: u32,
    k1: u64,
    k2: u64,
}

/// Per-pixel unit ray directions in the camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionGrid {
    pub width: u32,
    pub height: u32,
    dirs: Vec<Vector3<f64>>,
}

impl DirectionGrid {
    pub fn build(camera: &CameraView) -> Self {
        let mut dirs = Vec::with_capacity(camera.width as usize * camera.height as usize);
        for y in 0..camera.height {
            for x in 0..camera.width {
                dirs.push(camera.backproject_pixel(x as f64 + 0.5, y as f64 + 0.5));
            }
        }
        DirectionGrid {
            width: camera.width,
            height: camera.height,
            dirs,
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> Vector3<f64> {
        self.dirs[(y * self.width + x) as usize]
    }

    pub fn dirs(&self) -> &[Vector3<f64>] {
        &self.dirs
    }
}

/// Concurrent cache of direction grids keyed by camera intrinsics.
/// Lookups are lock-shared; insertion takes the write lock.
#[derive(Default)]
pub struct DirectionCache {
    grids: RwLock<HashMap<IntrinsicsKey, Arc<DirectionGrid>>>,
}

impl DirectionCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the grid for this camera's intrinsics and whether it was a
    /// cache hit.
    pub fn ray_directions(&self, camera: &CameraView) -> (Arc<DirectionGrid>, bool) {
        let key = camera.intrinsics_key();
        if let Some(grid) = self.grids.read().unwrap().get(&key) {
            return (Arc::clone(grid), true);
        }
        let grid = Arc::new(DirectionGrid::build(camera));
        let mut map = self.grids.write().unwrap();
        let entry = map.entry(key).or_insert_with(|| Arc::clone(&grid));
        (Arc::clone(entry), false)
    }
}

/// Uncached convenience wrapper around [`DirectionGrid::build`].
pub fn pixel_ray_directions(camera: &CameraView) -> DirectionGrid {
    DirectionGrid::build(camera)
}
