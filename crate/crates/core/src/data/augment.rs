//! Paired-view augmentation.
//!
//! Spatial transforms (rotation, vertical flip, horizontal mirror) use one
//! draw for both views of a sample. Brightness and contrast are drawn per
//! view. Grayscale input has no color to drop, so contrast scaling stands in
//! for the usual gray-scale jitter.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationPolicy {
    /// Rotation angle drawn from `±rotation_deg`.
    pub rotation_deg: f64,
    /// Probability of flipping rows (vertical flip).
    pub flip_prob: f64,
    /// Probability of reversing columns (horizontal mirror).
    pub mirror_prob: f64,
    /// Additive offset drawn from `±brightness`.
    pub brightness: f64,
    /// Multiplicative factor drawn from `1 ± contrast`.
    pub contrast: f64,
}

impl AugmentationPolicy {
    /// Applies nothing; output equals input bit for bit.
    pub const IDENTITY: Self = Self { rotation_deg: 0.0, flip_prob: 0.0, mirror_prob: 0.0, brightness: 0.0, contrast: 0.0 };

    /// ±15° rotation, flips at 0.5, ±0.1 brightness, ±0.1 contrast.
    pub fn standard() -> Self {
        Self { rotation_deg: 15.0, flip_prob: 0.5, mirror_prob: 0.5, brightness: 0.1, contrast: 0.1 }
    }

    /// Brightness and contrast only.
    pub fn photometric() -> Self {
        Self { rotation_deg: 0.0, flip_prob: 0.0, mirror_prob: 0.0, ..Self::standard() }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [self.rotation_deg, self.brightness, self.contrast];
        if nonneg.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::config("augmentation ranges must be finite and ≥ 0"));
        }
        if self.contrast >= 1.0 {
            return Err(Error::config("augmentation contrast must be < 1"));
        }
        if [self.flip_prob, self.mirror_prob].iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::config("augmentation probabilities must lie in [0, 1]"));
        }
        Ok(())
    }
}

fn dims(t: &Tensor) -> (usize, usize) {
    (t.shape()[0], t.shape()[1])
}

/// Reverses row order.
pub fn flip_vertical(image: &Tensor) -> Tensor {
    let (h, w) = dims(image);
    let src = image.data();
    let data = (0..h).rev().flat_map(|r| src[r * w..(r + 1) * w].iter().copied()).collect();
    Tensor::new([h, w], data).expect("same extents")
}

/// Reverses column order.
pub fn mirror(image: &Tensor) -> Tensor {
    let (h, w) = dims(image);
    let src = image.data();
    let data = (0..h).flat_map(|r| src[r * w..(r + 1) * w].iter().rev().copied()).collect();
    Tensor::new([h, w], data).expect("same extents")
}

/// Rotates about the image center with bilinear sampling; pixels mapped
/// from outside the source become 0.
pub fn rotate(image: &Tensor, degrees: f64) -> Tensor {
    let (h, w) = dims(image);
    let src = image.data();
    let (sin, cos) = degrees.to_radians().sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let at = |r: isize, c: isize| {
        if r < 0 || c < 0 || r >= h as isize || c >= w as isize { 0.0 } else { src[r as usize * w + c as usize] }
    };
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let (dy, dx) = (r as f64 - cy, c as f64 - cx);
            // Inverse mapping: destination pixel back into the source.
            let sy = cos * dy - sin * dx + cy;
            let sx = sin * dy + cos * dx + cx;
            let (y0, x0) = (sy.floor(), sx.floor());
            let (fy, fx) = (sy - y0, sx - x0);
            let (y0, x0) = (y0 as isize, x0 as isize);
            let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
            let bottom = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Tensor::new([h, w], out).expect("same extents")
}

/// `clamp(x·contrast + brightness, 0, 1)` per pixel.
pub fn adjust(image: &Tensor, brightness: f64, contrast: f64) -> Tensor {
    let mut out = image.clone();
    for v in out.data_mut() {
        *v = (*v * contrast + brightness).clamp(0.0, 1.0);
    }
    out
}

fn photometric<R: Rng>(image: Tensor, policy: &AugmentationPolicy, rng: &mut R) -> Tensor {
    if policy.brightness == 0.0 && policy.contrast == 0.0 {
        return image;
    }
    let b = if policy.brightness > 0.0 { rng.random_range(-policy.brightness..=policy.brightness) } else { 0.0 };
    let c = if policy.contrast > 0.0 { rng.random_range(1.0 - policy.contrast..=1.0 + policy.contrast) } else { 1.0 };
    adjust(&image, b, c)
}

/// Augments both views of one sample.
pub fn augment<R: Rng>(hor: &Tensor, ver: &Tensor, policy: &AugmentationPolicy, rng: &mut R) -> (Tensor, Tensor) {
    let (mut h, mut v) = (hor.clone(), ver.clone());
    if policy.rotation_deg > 0.0 {
        let angle = rng.random_range(-policy.rotation_deg..=policy.rotation_deg);
        (h, v) = (rotate(&h, angle), rotate(&v, angle));
    }
    if policy.flip_prob > 0.0 && rng.random_bool(policy.flip_prob) {
        (h, v) = (flip_vertical(&h), flip_vertical(&v));
    }
    if policy.mirror_prob > 0.0 && rng.random_bool(policy.mirror_prob) {
        (h, v) = (mirror(&h), mirror(&v));
    }
    let h = photometric(h, policy, rng);
    let v = photometric(v, policy, rng);
    (h, v)
}
