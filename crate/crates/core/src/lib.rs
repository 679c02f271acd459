//! CPU rendering core for implicit point clouds.
//!
//! A scene is represented by a sparse probability field over cubic voxels plus
//! a procedural appearance oracle. Explicit point clouds are sampled from the
//! field on demand (view-specific, ring-buffered, or pre-extracted globally)
//! and rendered by a differentiable tiled point rasterizer with bilinear or
//! isotropic-Gaussian splatting. Supporting pieces: background environment-map
//! distillation, fused math kernels, and a fully invertible tonemapper.
//!
//! Everything is deterministic for a fixed seed, including parallel paths:
//! results are bitwise independent of the worker thread count.

pub mod env;
pub mod error;
pub mod io;
pub mod kernels;
pub mod raster;
pub mod sampling;
pub mod scene;
pub mod sh;
pub mod synth;
pub mod tonemap;
pub mod verify;

pub use error::{Error, Result};
