//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// No voxel of the probability field intersects the camera frustum.
    #[error("empty frustum: no voxel is visible from this camera")]
    EmptyFrustum,

    /// The sample budget cannot give every visible voxel at least one sample.
    #[error("sample budget {budget} is below the visible voxel count {voxels}")]
    BudgetTooSmall { budget: u64, voxels: u64 },

    /// Rejection sampling exceeded its attempt cap for one voxel.
    #[error("degenerate visibility for voxel {voxel:#x}: rejection cap exceeded")]
    DegenerateVisibility { voxel: u64 },

    #[error("invalid {what}: {why}")]
    Invalid { what: &'static str, why: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed container: {0}")]
    Format(String),
}

impl Error {
    pub fn invalid(what: &'static str, why: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            why: why.into(),
        }
    }
}
