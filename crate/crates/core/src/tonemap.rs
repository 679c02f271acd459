//! Fully invertible tonemapper: per-image exposure plus an
//! endpoint-constrained piecewise-linear camera response curve.
//!
//! The response curve is pinned to 0 and 1 at its endpoints and kept strictly
//! increasing, so it covers the full output range and inverts exactly. All
//! arithmetic is double precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of response-curve control values.
pub const DEFAULT_KNOTS: usize = 25;
/// Minimum gap between consecutive control values.
pub const MIN_GAP: f64 = 1e-6;

/// Monotone piecewise-linear response over uniform knots on [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ResponseCurve {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for ResponseCurve {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        ResponseCurve::new(values)
    }
}

impl From<ResponseCurve> for Vec<f64> {
    fn from(c: ResponseCurve) -> Vec<f64> {
        c.values
    }
}

impl ResponseCurve {
    /// Validate and wrap control values. Endpoints must be exactly 0 and 1;
    /// anything else makes inversion impossible and is rejected.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid("response curve", "needs at least 2 knots"));
        }
        if values[0] != 0.0 {
            return Err(Error::invalid("response curve", "first value must be 0"));
        }
        if *values.last().unwrap() != 1.0 {
            return Err(Error::invalid("response curve", "last value must be 1"));
        }
        for w in values.windows(2) {
            if !(w[1] - w[0] >= MIN_GAP) {
                return Err(Error::invalid(
                    "response curve",
                    format!("gap {} below minimum {}", w[1] - w[0], MIN_GAP),
                ));
            }
        }
        Ok(ResponseCurve { values })
    }

    /// The identity response with `k` knots.
    pub fn identity(k: usize) -> Self {
        let values = (0..k).map(|i| i as f64 / (k - 1) as f64).collect();
        ResponseCurve { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn knots(&self) -> usize {
        self.values.len()
    }

    /// Piecewise-linear evaluation at `e` in [0, 1].
    #[inline]
    pub fn eval(&self, e: f64) -> f64 {
        let k = self.values.len();
        let x = e * (k - 1) as f64;
        let seg = (x.floor() as usize).min(k - 2);
        let t = x - seg as f64;
        self.values[seg] + t * (self.values[seg + 1] - self.values[seg])
    }

    /// Exact inverse of [`Self::eval`] for `y` in [0, 1]: locate the segment
    /// by binary search over the control values, then invert linearly.
    #[inline]
    pub fn invert(&self, y: f64) -> f64 {
        let k = self.values.len();
        let seg = self.values.partition_point(|&v| v <= y).saturating_sub(1);
        let seg = seg.min(k - 2);
        let t = (y - self.values[seg]) / (self.values[seg + 1] - self.values[seg]);
        (seg as f64 + t) / (k - 1) as f64
    }

    /// Project raw values onto the valid curve set: pin endpoints to 0 and 1
    /// and enforce strict monotonicity with `MIN_GAP` spacing.
    pub fn project(raw: &[f64]) -> Result<ResponseCurve> {
        let k = raw.len();
        if k < 2 {
            return Err(Error::invalid("response curve", "needs at least 2 knots"));
        }
        // Slightly above MIN_GAP so float rounding never drops a produced
        // gap below the validator's threshold.
        let gap = MIN_GAP * (1.0 + 1e-7);
        // Cumulative max with minimum gaps, then an affine remap to [0, 1].
        let mut m = vec![0.0; k];
        m[0] = raw[0];
        for i in 1..k {
            m[i] = raw[i].max(m[i - 1] + gap);
        }
        let range = m[k - 1] - m[0];
        let mut r: Vec<f64> = m.iter().map(|&v| (v - m[0]) / range).collect();
        r[0] = 0.0;
        r[k - 1] = 1.0;
        // The remap can compress gaps below MIN_GAP when the raw range is
        // large; restore them and clamp back under the pinned endpoint.
        for i in 1..k - 1 {
            r[i] = r[i].max(r[i - 1] + gap);
        }
        for i in (1..k - 1).rev() {
            r[i] = r[i].min(r[i + 1] - gap);
        }
        ResponseCurve::new(r)
    }
}

/// Per-image exposure values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExposureParams {
    pub ev: Vec<f64>,
}

/// Map one HDR value to the display domain: divide by `2^ev`, clamp to
/// [0, 1], and apply the response curve.
#[inline]
pub fn tonemap_forward_one(hdr: f64, ev: f64, curve: &ResponseCurve) -> f64 {
    let e = (hdr / ev.exp2()).clamp(0.0, 1.0);
    curve.eval(e)
}

/// Invert one display-domain value back to HDR. Inputs may overshoot [0, 1]
/// by at most 1e-12.
#[inline]
pub fn tonemap_inverse_one(y: f64, ev: f64, curve: &ResponseCurve) -> Result<f64> {
    if !(-1e-12..=1.0 + 1e-12).contains(&y) {
        return Err(Error::invalid("tonemap input", format!("{y} outside [0, 1]")));
    }
    let y = y.clamp(0.0, 1.0);
    Ok(curve.invert(y) * ev.exp2())
}

/// Forward tonemap over a batch.
pub fn tonemap_forward(hdr: &[f64], ev: f64, curve: &ResponseCurve) -> Vec<f64> {
    hdr.iter().map(|&v| tonemap_forward_one(v, ev, curve)).collect()
}

/// Inverse tonemap over a batch.
pub fn tonemap_inverse(values: &[f64], ev: f64, curve: &ResponseCurve) -> Result<Vec<f64>> {
    values
        .iter()
        .map(|&v| tonemap_inverse_one(v, ev, curve))
        .collect()
}
