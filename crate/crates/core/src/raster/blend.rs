//! Depth-sorted alpha blending: forward compositing over a background and
//! the corrected backward pass.
//!
//! Forward, per pixel with fragments `i = 1..K` front to back:
//! `F = sum_i T_i a_i f_i + T_{K+1} f_bg`, `T_i = prod_{j<i} (1 - a_j)`.
//!
//! Backward, for fragment `k`:
//! `dF/df_k = T_k a_k` and
//! `dF/da_k = T_k f_k - (sum_{i>k} a_i T_i f_i + T_{K+1} f_bg) / (1 - a_k)`,
//! evaluated for every fragment including those with `a_k = 0`. Skipping the
//! zero-alpha fragments reproduces older implementations and stays available
//! behind [`BackwardOptions::skip_zero_alpha`] for A/B comparisons.

use crate::sh::CHANNELS;

/// Opacity-times-weight saturation; keeps `1 - a` bounded away from zero so
/// the backward pass stays finite.
pub const ALPHA_MAX: f64 = 0.9999;

/// One pixel's fragment as seen by the blender.
#[derive(Debug, Clone, Copy)]
pub struct BlendFragment {
    pub alpha: f64,
    pub feature: [f64; CHANNELS],
}

/// Composite one pixel front to back. Returns the blended feature and the
/// residual transmittance left for the background.
#[inline]
pub fn blend_pixel(frags: &[BlendFragment], bg: [f64; CHANNELS]) -> ([f64; CHANNELS], f64) {
    let mut out = [0.0; CHANNELS];
    let mut t = 1.0;
    for f in frags {
        let ta = t * f.alpha;
        for c in 0..CHANNELS {
            out[c] += ta * f.feature[c];
        }
        t *= 1.0 - f.alpha;
    }
    for c in 0..CHANNELS {
        out[c] += t * bg[c];
    }
    (out, t)
}

/// Per-fragment gradients produced by [`blend_pixel_backward`].
#[derive(Debug, Clone, Copy, Default)]
pub struct FragmentGrad {
    pub d_alpha: f64,
    pub d_feature: [f64; CHANNELS],
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BackwardOptions {
    /// Reproduce the historical behavior of skipping fragments with
    /// `alpha == 0` in the backward pass.
    pub skip_zero_alpha: bool,
}

/// Backward pass for one pixel given the upstream gradient of the blended
/// feature. Fragments must be the same, in the same order, as the forward
/// pass. Writes one gradient per fragment into `out`.
pub fn blend_pixel_backward(
    frags: &[BlendFragment],
    bg: [f64; CHANNELS],
    upstream: [f64; CHANNELS],
    opts: BackwardOptions,
    out: &mut Vec<FragmentGrad>,
) {
    let k = frags.len();
    out.clear();
    out.resize(k, FragmentGrad::default());

    // Transmittance in front of each fragment.
    let mut t = vec![1.0; k + 1];
    for i in 0..k {
        t[i + 1] = t[i] * (1.0 - frags[i].alpha);
    }
    // Suffix sum of everything behind fragment i, background included.
    let mut s = [0.0; CHANNELS];
    for c in 0..CHANNELS {
        s[c] = t[k] * bg[c];
    }
    for i in (0..k).rev() {
        let BlendFragment { alpha, feature } = frags[i];
        if !(opts.skip_zero_alpha && alpha == 0.0) {
            let mut grad = FragmentGrad::default();
            let inv = 1.0 / (1.0 - alpha);
            for c in 0..CHANNELS {
                grad.d_alpha += upstream[c] * (t[i] * feature[c] - s[c] * inv);
                grad.d_feature[c] = upstream[c] * t[i] * alpha;
            }
            out[i] = grad;
        }
        for c in 0..CHANNELS {
            s[c] += alpha * t[i] * feature[c];
        }
    }
}
