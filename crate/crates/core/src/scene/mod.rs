//! Shared domain types: probability field, point sets, cameras, feature
//! images, and the procedural appearance oracle.

mod camera;
mod field;
mod image;
mod oracle;
mod points;

pub use camera::{pixel_ray_directions, CameraView, DirectionCache, DirectionGrid, IntrinsicsKey};
pub use field::{morton3, ProbabilityField, Voxel, VoxelId, DEFAULT_RESOLUTION};
pub use image::FeatureImage;
pub use oracle::AppearanceOracle;
pub use points::PointSet;
