//! Fused math kernels: spherical contraction, Cauchy loss, and direct
//! weight-decay gradients.

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Spherical contraction: identity inside the unit ball, radial remap
/// `(2 - 1/|x|) * x/|x|` outside. The image is the open ball of radius 2.
#[inline]
pub fn contract(x: Vector3<f64>) -> Vector3<f64> {
    let n = x.norm();
    if n <= 1.0 {
        x
    } else {
        x * ((2.0 - 1.0 / n) / n)
    }
}

/// Contract a batch in place in a single pass.
pub fn contract_in_place(points: &mut [Vector3<f64>]) {
    for p in points.iter_mut() {
        *p = contract(*p);
    }
}

/// Scalar loss plus gradient for a residual batch.
#[derive(Debug, Clone)]
pub struct LossResult {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Mean-reduced Cauchy loss `log1p(0.5 (x/c)^2)` with its gradient.
///
/// `log1p` keeps tiny residuals from underflowing to zero loss.
pub fn cauchy_loss(residuals: &[f64], c: f64) -> Result<LossResult> {
    if !(c > 0.0) {
        return Err(Error::invalid("cauchy scale", "must be positive"));
    }
    let n = residuals.len().max(1) as f64;
    let inv_c2 = 1.0 / (c * c);
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(residuals.len());
    for &x in residuals {
        loss += (0.5 * x * x * inv_c2).ln_1p();
        grad.push(2.0 * x / (2.0 * c * c + x * x) / n);
    }
    Ok(LossResult {
        loss: loss / n,
        grad,
    })
}

/// Accumulate the gradient of `lambda * mean(w^2)` directly into `grads`,
/// skipping the forward loss value entirely.
pub fn add_weight_decay_grad(weights: &[f64], grads: &mut [f64], lambda: f64) -> Result<()> {
    if weights.len() != grads.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights vs {} grads",
            weights.len(),
            grads.len()
        )));
    }
    let n = weights.len().max(1) as f64;
    let scale = lambda * 2.0 / n;
    for (g, &w) in grads.iter_mut().zip(weights.iter()) {
        *g += scale * w;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;

    #[test]
    fn contract_is_identity_inside_ball() {
        assert_eq!(contract(Vector3::zeros()), Vector3::zeros());
        let p = Vector3::new(0.3, -0.4, 0.5);
        assert_eq!(contract(p), p);
    }

    #[test]
    fn contract_known_value() {
        let out = contract(Vector3::new(2.0, 0.0, 0.0));
        assert_relative_eq!(out.x, 1.5, epsilon = 1e-15);
        assert_eq!(out.y, 0.0);
        assert_eq!(out.z, 0.0);
    }

    #[test]
    fn contract_stays_inside_radius_two() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1_000_000 {
            let scale = 10f64.powf(rng.random::<f64>() * 6.0);
            let p = Vector3::new(
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
            ) * scale;
            assert!(contract(p).norm() < 2.0);
        }
    }

    #[test]
    fn contract_continuous_at_unit_sphere() {
        let dir = Vector3::new(1.0, 2.0, -2.0).normalize();
        let eps = 1e-9;
        let inner = contract(dir * (1.0 - eps));
        let outer = contract(dir * (1.0 + eps));
        assert!((inner - outer).norm() < 1e-8);
        // One-sided radial derivative outside: d/dr (2 - 1/r) = 1/r^2 -> 1.
        let d_out = (contract(dir * (1.0 + 2.0 * eps)) - contract(dir * (1.0 + eps))).norm() / eps;
        assert_relative_eq!(d_out, 1.0, epsilon = 1e-3);
    }

    #[test]
    fn contract_idempotent_on_interior_image() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let p = Vector3::new(
                rng.random::<f64>() * 20.0 - 10.0,
                rng.random::<f64>() * 20.0 - 10.0,
                rng.random::<f64>() * 20.0 - 10.0,
            );
            let once = contract(p);
            let twice = contract(once);
            if once.norm() <= 1.0 {
                assert_eq!(once, twice);
            } else {
                // Monotone in radius, so re-contracting moves it further in.
                assert!(twice.norm() <= once.norm());
            }
        }
    }

    #[test]
    fn cauchy_loss_zero_at_origin() {
        let r = cauchy_loss(&[0.0, 0.0], 1.0).unwrap();
        assert_eq!(r.loss, 0.0);
        assert_eq!(r.grad, vec![0.0, 0.0]);
    }

    #[test]
    fn cauchy_loss_closed_form() {
        let r = cauchy_loss(&[1.0], 1.0).unwrap();
        assert_relative_eq!(r.loss, 1.5f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn cauchy_log1p_preserves_tiny_residuals() {
        let x = 1e-8;
        let r = cauchy_loss(&[x], 1.0).unwrap();
        assert!(r.loss > 0.0);
        assert_relative_eq!(r.loss, 5e-17, epsilon = 1e-18);
        // The naive formulation underflows to exactly zero.
        assert_eq!((1.0 + 0.5 * x * x).ln(), 0.0);
    }

    #[test]
    fn cauchy_gradient_matches_finite_difference() {
        // Per-element batches keep the difference quotient clear of the
        // roundoff floor of a large batch mean.
        for x in [0.7, -2.3, 0.001, 13.0] {
            let c = 0.8;
            let grad = cauchy_loss(&[x], c).unwrap().grad[0];
            let h = 1e-6 * x.abs().max(1.0);
            let fd = (cauchy_loss(&[x + h], c).unwrap().loss
                - cauchy_loss(&[x - h], c).unwrap().loss)
                / (2.0 * h);
            assert_relative_eq!(grad, fd, max_relative = 1e-8);
        }
    }

    #[test]
    fn cauchy_batch_gradient_scales_by_count() {
        let xs = [0.7, -2.3, 0.001, 13.0];
        let batch = cauchy_loss(&xs, 0.8).unwrap();
        for (i, &x) in xs.iter().enumerate() {
            let single = cauchy_loss(&[x], 0.8).unwrap();
            assert_relative_eq!(batch.grad[i], single.grad[0] / 4.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn cauchy_rejects_bad_scale() {
        assert!(cauchy_loss(&[1.0], 0.0).is_err());
        assert!(cauchy_loss(&[1.0], -1.0).is_err());
    }

    #[test]
    fn weight_decay_known_value() {
        let mut grads = vec![0.0];
        add_weight_decay_grad(&[3.0], &mut grads, 0.5).unwrap();
        assert_relative_eq!(grads[0], 3.0, epsilon = 1e-15);
    }

    #[test]
    fn weight_decay_zero_lambda_is_noop() {
        let mut grads = vec![1.0, -2.0];
        add_weight_decay_grad(&[5.0, 7.0], &mut grads, 0.0).unwrap();
        assert_eq!(grads, vec![1.0, -2.0]);
    }

    #[test]
    fn weight_decay_matches_finite_difference() {
        // L = lambda * mean(w^2)
        let weights = [0.4, -1.7, 2.2];
        let lambda = 0.37;
        let mut grads = vec![0.0; 3];
        add_weight_decay_grad(&weights, &mut grads, lambda).unwrap();
        let loss = |w: &[f64]| lambda * w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        for i in 0..3 {
            let h = 1e-6;
            let mut plus = weights;
            plus[i] += h;
            let mut minus = weights;
            minus[i] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert_relative_eq!(grads[i], fd, epsilon = 1e-10);
        }
    }

    #[test]
    fn weight_decay_shape_mismatch() {
        let mut grads = vec![0.0; 2];
        assert!(add_weight_decay_grad(&[1.0], &mut grads, 1.0).is_err());
    }

    #[test]
    fn weight_decay_linear_in_lambda_and_weights() {
        let weights = [1.5, -0.5];
        let mut g1 = vec![0.0; 2];
        let mut g2 = vec![0.0; 2];
        add_weight_decay_grad(&weights, &mut g1, 0.2).unwrap();
        add_weight_decay_grad(&weights, &mut g2, 0.4).unwrap();
        for i in 0..2 {
            assert_relative_eq!(g2[i], 2.0 * g1[i], epsilon = 1e-15);
        }
    }
}
