//! Inference-time splatting of points as small isotropic Gaussians.
//!
//! A world-space scale is chosen so a Gaussian sitting on the near plane
//! projects to a bounded pixel footprint at the image center; each point's
//! extent is pushed through an affine approximation of the perspective
//! projection, dilated to an anti-aliasing floor, and truncated at 3 sigma.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Footprint, ProjectedPoint};
use crate::scene::CameraView;

/// Dilation variance added to every projected covariance (3DGS-style
/// renderers commonly use 0.3; this pipeline defaults to 0.16).
pub const DILATION_VARIANCE: f64 = 0.16;
/// Pixel standard deviation of a near-plane Gaussian at the image center.
pub const NEAR_PLANE_PIXEL_STD: f64 = 5.0;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GaussianConfig {
    pub dilation_variance: f64,
    pub near_plane_pixel_std: f64,
}

impl Default for GaussianConfig {
    fn default() -> Self {
        GaussianConfig {
            dilation_variance: DILATION_VARIANCE,
            near_plane_pixel_std: NEAR_PLANE_PIXEL_STD,
        }
    }
}

/// World-space Gaussian scale: std of a near-plane, image-center Gaussian is
/// exactly `near_plane_pixel_std` pixels under the larger focal length.
pub fn gaussian_world_scale(camera: &CameraView, config: &GaussianConfig) -> f64 {
    config.near_plane_pixel_std * camera.z_near / camera.fx.max(camera.fy)
}

/// A point projected as a 2D Gaussian.
#[derive(Debug, Clone, Copy)]
pub struct ProjectedGaussian {
    pub point: usize,
    /// Mean in pixel coordinates.
    pub mean: (f64, f64),
    /// Symmetric 2x2 covariance in pixels^2 as (xx, xy, yy).
    pub cov: [f64; 3],
    /// Truncation radius: `3 * sqrt(largest eigenvalue)`.
    pub radius: f64,
    pub depth: f64,
}

/// Largest eigenvalue of a symmetric 2x2 matrix (xx, xy, yy).
#[inline]
fn lambda_max(cov: [f64; 3]) -> f64 {
    let [a, b, c] = cov;
    0.5 * (a + c) + (0.25 * (a - c) * (a - c) + b * b).sqrt()
}

/// Project one already-culled point as an isotropic Gaussian of world scale
/// `s`. The world rotation cancels for isotropic covariance, so the screen
/// covariance is `s^2 * J * J^T` plus the dilation, with `J` the pinhole
/// Jacobian at the camera-space position.
pub fn project_gaussian(
    proj: &ProjectedPoint,
    s: f64,
    camera: &CameraView,
    config: &GaussianConfig,
) -> Result<ProjectedGaussian> {
    let p = proj.p_cam;
    let (x, y, z) = (p.x, p.y, p.z);
    let (fx, fy) = (camera.fx, camera.fy);
    // J = [[fx/z, 0, -fx x/z^2], [0, fy/z, -fy y/z^2]]
    let j00 = fx / z;
    let j02 = -fx * x / (z * z);
    let j11 = fy / z;
    let j12 = -fy * y / (z * z);
    let s2 = s * s;
    let xx = s2 * (j00 * j00 + j02 * j02) + config.dilation_variance;
    let xy = s2 * (j02 * j12);
    let yy = s2 * (j11 * j11 + j12 * j12) + config.dilation_variance;
    let det = xx * yy - xy * xy;
    if !(det > 0.0 && xx > 0.0 && yy > 0.0) {
        return Err(Error::invalid(
            "projected gaussian",
            format!("covariance not positive definite: ({xx}, {xy}, {yy})"),
        ));
    }
    let cov = [xx, xy, yy];
    Ok(ProjectedGaussian {
        point: proj.point,
        mean: (proj.px, proj.py),
        cov,
        radius: 3.0 * lambda_max(cov).sqrt(),
        depth: proj.depth,
    })
}

/// Generate fragments for every pixel whose center lies within the
/// truncation radius; the weight is the unnormalized Gaussian (peak 1) so
/// opacity semantics match bilinear splatting.
pub fn gen_fragments_gaussian(
    gaussians: &[ProjectedGaussian],
    width: u32,
    height: u32,
) -> Vec<Footprint> {
    let mut out = Vec::with_capacity(gaussians.len());
    for g in gaussians {
        let (mx, my) = g.mean;
        let x0 = ((mx - g.radius - 0.5).floor().max(0.0)) as i64;
        let x1 = ((mx + g.radius - 0.5).ceil()) as i64;
        let y0 = ((my - g.radius - 0.5).floor().max(0.0)) as i64;
        let y1 = ((my + g.radius - 0.5).ceil()) as i64;
        if x1 < 0 || y1 < 0 || x0 >= width as i64 || y0 >= height as i64 {
            continue;
        }
        let [a, b, c] = g.cov;
        let det = a * c - b * b;
        let (ixx, ixy, iyy) = (c / det, -b / det, a / det);
        let r2 = g.radius * g.radius;
        let mut frags = Vec::new();
        for y in y0.max(0)..=(y1.min(height as i64 - 1)) {
            for x in x0.max(0)..=(x1.min(width as i64 - 1)) {
                let dx = (x as f64 + 0.5) - mx;
                let dy = (y as f64 + 0.5) - my;
                if dx * dx + dy * dy > r2 {
                    continue;
                }
                let q = ixx * dx * dx + 2.0 * ixy * dx * dy + iyy * dy * dy;
                frags.push((x as u32, y as u32, (-0.5 * q).exp()));
            }
        }
        if !frags.is_empty() {
            out.push(Footprint {
                point: g.point,
                depth: g.depth,
                frags,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{Matrix3, Vector3};

    fn camera(fx: f64, fy: f64, z_near: f64) -> CameraView {
        CameraView {
            fx,
            fy,
            cx: 128.0,
            cy: 128.0,
            width: 256,
            height: 256,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            z_near,
            distortion: None,
        }
    }

    fn projected(p_cam: Vector3<f64>, cam: &CameraView) -> ProjectedPoint {
        let (px, py) = cam.project_camera(p_cam);
        ProjectedPoint {
            point: 0,
            p_cam,
            px,
            py,
            depth: p_cam.z,
            view_dir: p_cam.normalize(),
        }
    }

    #[test]
    fn world_scale_formula() {
        let cam = camera(1000.0, 1000.0, 0.1);
        let cfg = GaussianConfig::default();
        assert_relative_eq!(gaussian_world_scale(&cam, &cfg), 5e-4, epsilon = 1e-18);
        let far_near = camera(1000.0, 1000.0, 0.2);
        assert_relative_eq!(
            gaussian_world_scale(&far_near, &cfg),
            1e-3,
            epsilon = 1e-18
        );
    }

    #[test]
    fn near_plane_center_std_is_five_pixels() {
        let cam = camera(1000.0, 800.0, 0.1);
        let cfg = GaussianConfig::default();
        let s = gaussian_world_scale(&cam, &cfg);
        // Undilated std at (0, 0, z_near): strip the dilation back off.
        let proj = projected(Vector3::new(0.0, 0.0, cam.z_near), &cam);
        let g = project_gaussian(&proj, s, &cam, &cfg).unwrap();
        let sigma_x = (g.cov[0] - cfg.dilation_variance).sqrt();
        assert_relative_eq!(sigma_x, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn distant_point_collapses_to_dilation() {
        let cam = camera(1000.0, 1000.0, 0.1);
        let cfg = GaussianConfig::default();
        let s = gaussian_world_scale(&cam, &cfg);
        let proj = projected(Vector3::new(0.0, 0.0, 1e9), &cam);
        let g = project_gaussian(&proj, s, &cam, &cfg).unwrap();
        assert_relative_eq!(g.cov[0], 0.16, epsilon = 1e-9);
        assert_relative_eq!(g.cov[2], 0.16, epsilon = 1e-9);
        assert_relative_eq!(g.radius, 1.2, epsilon = 1e-6);
    }

    #[test]
    fn on_axis_covariance_is_isotropic() {
        let cam = camera(1000.0, 1000.0, 0.1);
        let cfg = GaussianConfig {
            dilation_variance: 0.0,
            ..Default::default()
        };
        let s = 2e-3;
        let z = 0.5;
        let proj = projected(Vector3::new(0.0, 0.0, z), &cam);
        let g = project_gaussian(&proj, s, &cam, &cfg).unwrap();
        let expected = (s * cam.fx / z).powi(2);
        assert_relative_eq!(g.cov[0], expected, epsilon = 1e-12);
        assert_relative_eq!(g.cov[2], expected, epsilon = 1e-12);
        assert_relative_eq!(g.cov[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn fragment_weight_peaks_at_mean() {
        let g = ProjectedGaussian {
            point: 0,
            mean: (10.5, 10.5),
            cov: [1.0, 0.0, 1.0],
            radius: 3.0,
            depth: 1.0,
        };
        let fps = gen_fragments_gaussian(&[g], 32, 32);
        let center = fps[0]
            .frags
            .iter()
            .find(|&&(x, y, _)| x == 10 && y == 10)
            .unwrap();
        assert_relative_eq!(center.2, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn truncation_ring_weight() {
        // Pixel at distance exactly 3 sigma along the major axis.
        let g = ProjectedGaussian {
            point: 0,
            mean: (16.5, 16.5),
            cov: [4.0, 0.0, 1.0],
            radius: 6.0,
            depth: 1.0,
        };
        let fps = gen_fragments_gaussian(&[g], 64, 64);
        let ring = fps[0]
            .frags
            .iter()
            .find(|&&(x, y, _)| x == 22 && y == 16)
            .expect("3-sigma pixel included");
        assert_relative_eq!(ring.2, (-4.5f64).exp(), epsilon = 1e-12);
        // Nothing outside the truncation radius.
        for &(x, y, _) in &fps[0].frags {
            let dx = x as f64 + 0.5 - 16.5;
            let dy = y as f64 + 0.5 - 16.5;
            assert!(dx * dx + dy * dy <= 36.0 + 1e-12);
        }
    }

    #[test]
    fn isotropic_fragment_count_tracks_disk_area() {
        let sigma = 2.0f64;
        let g = ProjectedGaussian {
            point: 0,
            mean: (32.25, 32.75),
            cov: [sigma * sigma, 0.0, sigma * sigma],
            radius: 3.0 * sigma,
            depth: 1.0,
        };
        let fps = gen_fragments_gaussian(&[g], 64, 64);
        let count = fps[0].frags.len() as f64;
        let area = std::f64::consts::PI * (3.0 * sigma) * (3.0 * sigma);
        // Boundary pixels can swing the count by roughly the circumference.
        assert!((count - area).abs() < 2.0 * std::f64::consts::PI * 3.0 * sigma + 4.0);
    }

    #[test]
    fn footprint_radius_shrinks_with_depth() {
        let cam = camera(500.0, 500.0, 0.1);
        let cfg = GaussianConfig::default();
        let s = gaussian_world_scale(&cam, &cfg);
        let mut prev = f64::INFINITY;
        for z in [0.2, 0.5, 1.0, 3.0, 10.0] {
            let proj = projected(Vector3::new(0.0, 0.0, z), &cam);
            let g = project_gaussian(&proj, s, &cam, &cfg).unwrap();
            assert!(g.radius < prev);
            prev = g.radius;
        }
    }

    #[test]
    fn every_gaussian_covers_at_least_four_pixel_centers() {
        // Radius never drops below 1.2 px with the default dilation; the
        // worst alignment leaves the mean at a pixel-corner, distance
        // sqrt(0.5) to the four neighbors.
        for (mx, my) in [(8.0, 8.0), (8.5, 8.5), (8.25, 8.75), (8.999, 8.001)] {
            let g = ProjectedGaussian {
                point: 0,
                mean: (mx, my),
                cov: [0.16, 0.0, 0.16],
                radius: 1.2,
                depth: 1.0,
            };
            let fps = gen_fragments_gaussian(&[g], 64, 64);
            assert!(fps[0].frags.len() >= 4, "{} at ({mx},{my})", fps[0].frags.len());
        }
    }
}
