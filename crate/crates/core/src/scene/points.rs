//! Explicit point clouds.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::sh::ShBlock;

/// Explicit point cloud: positions, scalar opacities, and degree-2 SH
/// coefficient blocks. All arrays are index-aligned.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointSet {
    pub positions: Vec<Vector3<f64>>,
    pub opacities: Vec<f64>,
    pub sh_coeffs: Vec<ShBlock>,
}

impl PointSet {
    pub fn with_capacity(n: usize) -> Self {
        PointSet {
            positions: Vec::with_capacity(n),
            opacities: Vec::with_capacity(n),
            sh_coeffs: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn push(&mut self, position: Vector3<f64>, opacity: f64, sh: ShBlock) {
        self.positions.push(position);
        self.opacities.push(opacity);
        self.sh_coeffs.push(sh);
    }

    /// Append another cloud, preserving order.
    pub fn extend(&mut self, other: &PointSet) {
        self.positions.extend_from_slice(&other.positions);
        self.opacities.extend_from_slice(&other.opacities);
        self.sh_coeffs.extend_from_slice(&other.sh_coeffs);
    }

    pub fn validate(&self) -> Result<()> {
        if self.opacities.len() != self.positions.len()
            || self.sh_coeffs.len() != self.positions.len()
        {
            return Err(Error::ShapeMismatch(format!(
                "positions {} / opacities {} / sh {}",
                self.positions.len(),
                self.opacities.len(),
                self.sh_coeffs.len()
            )));
        }
        for p in &self.positions {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::invalid("point set", "non-finite position"));
            }
        }
        for &o in &self.opacities {
            if !(0.0..=1.0).contains(&o) {
                return Err(Error::invalid("point set", "opacity outside [0, 1]"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extend_preserves_order_and_size() {
        let mut a = PointSet::default();
        a.push(Vector3::new(1.0, 0.0, 0.0), 0.5, [[0.0; 9]; 4]);
        let mut b = PointSet::default();
        b.push(Vector3::new(2.0, 0.0, 0.0), 0.25, [[0.0; 9]; 4]);
        b.push(Vector3::new(3.0, 0.0, 0.0), 0.75, [[0.0; 9]; 4]);
        a.extend(&b);
        assert_eq!(a.len(), 3);
        assert_eq!(a.positions[1].x, 2.0);
        assert_eq!(a.opacities[2], 0.75);
    }

    #[test]
    fn opacity_bounds_enforced() {
        let mut p = PointSet::default();
        p.push(Vector3::zeros(), 1.5, [[0.0; 9]; 4]);
        assert!(p.validate().is_err());
    }
}
