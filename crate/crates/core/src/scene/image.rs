//! Rendered feature images.

use crate::error::{Error, Result};
use crate::sh::CHANNELS;

/// H×W grid of 4-channel features plus the per-pixel residual transmittance
/// left for the background after alpha blending.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    pub width: u32,
    pub height: u32,
    /// Row-major, one `[f64; 4]` per pixel.
    pub features: Vec<[f64; CHANNELS]>,
    /// Row-major residual transmittance in [0, 1].
    pub transmittance: Vec<f64>,
}

impl FeatureImage {
    pub fn new(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        FeatureImage {
            width,
            height,
            features: vec![[0.0; CHANNELS]; n],
            transmittance: vec![1.0; n],
        }
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        (y * self.width + x) as usize
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> &[f64; CHANNELS] {
        &self.features[self.index(x, y)]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.width as usize * self.height as usize;
        if self.features.len() != n || self.transmittance.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} image with {} features / {} transmittance entries",
                self.width,
                self.height,
                self.features.len(),
                self.transmittance.len()
            )));
        }
        for f in &self.features {
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("feature image", "non-finite feature"));
            }
        }
        for &t in &self.transmittance {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::invalid(
                    "feature image",
                    "transmittance outside [0, 1]",
                ));
            }
        }
        Ok(())
    }

    /// Largest per-channel absolute difference against another image.
    pub fn max_abs_diff(&self, other: &FeatureImage) -> f64 {
        assert_eq!(self.width, other.width);
        assert_eq!(self.height, other.height);
        let mut max = 0.0f64;
        for (a, b) in self.features.iter().zip(other.features.iter()) {
            for c in 0..CHANNELS {
                max = max.max((a[c] - b[c]).abs());
            }
        }
        for (a, b) in self.transmittance.iter().zip(other.transmittance.iter()) {
            max = max.max((a - b).abs());
        }
        max
    }

    /// Mean absolute per-channel difference against another image.
    pub fn mean_abs_diff(&self, other: &FeatureImage) -> f64 {
        assert_eq!(self.width, other.width);
        assert_eq!(self.height, other.height);
        let mut sum = 0.0f64;
        for (a, b) in self.features.iter().zip(other.features.iter()) {
            for c in 0..CHANNELS {
                sum += (a[c] - b[c]).abs();
            }
        }
        sum / (self.features.len() * CHANNELS) as f64
    }
}
