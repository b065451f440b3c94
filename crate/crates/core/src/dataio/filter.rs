use serde::{Deserialize, Serialize};

use crate::colorspace::{rgb_pixel_to_lab, RgbImage};
use crate::error::{Error, Result};

/// Rejection rule for images that carry no usable colour signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterPolicy {
    /// Minimum mean CIELAB chroma `sqrt(a^2 + b^2)`.
    pub chroma_threshold: f64,
    /// Largest `|R-G|` / `|G-B|` that still counts as gray.
    pub grayscale_epsilon: f64,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self {
            chroma_threshold: 5.0,
            grayscale_epsilon: 0.0,
        }
    }
}

impl FilterPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.chroma_threshold.is_finite() && self.chroma_threshold >= 0.0 && self.grayscale_epsilon >= 0.0) {
            return Err(Error::config(format!(
                "filter thresholds must be non-negative, got chroma {} and epsilon {}",
                self.chroma_threshold, self.grayscale_epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterVerdict {
    Keep,
    Grayscale,
    LowChroma,
}

pub fn classify(img: &RgbImage, policy: &FilterPolicy) -> FilterVerdict {
    let px = img.pixels();
    let (h, w) = (img.height(), img.width());
    let mut max_spread = 0i32;
    for y in 0..h {
        for x in 0..w {
            let (r, g, b) = (
                i32::from(px[[y, x, 0]]),
                i32::from(px[[y, x, 1]]),
                i32::from(px[[y, x, 2]]),
            );
            max_spread = max_spread.max((r - g).abs()).max((g - b).abs());
        }
    }
    if f64::from(max_spread) <= policy.grayscale_epsilon {
        return FilterVerdict::Grayscale;
    }

    let mut chroma_sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            let lab = rgb_pixel_to_lab(img.pixel(y, x));
            chroma_sum += lab[1].hypot(lab[2]);
        }
    }
    if chroma_sum / ((h * w) as f64) < policy.chroma_threshold {
        FilterVerdict::LowChroma
    } else {
        FilterVerdict::Keep
    }
}

pub fn is_colorful(img: &RgbImage, policy: &FilterPolicy) -> bool {
    classify(img, policy) == FilterVerdict::Keep
}
