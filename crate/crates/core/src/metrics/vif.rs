use ndarray::{s, Array2};

use super::pixel::same_dims;
use super::window::{filter_same, gaussian_taps, luma};
use crate::colorspace::RgbImage;
use crate::error::{Error, Result};

pub const VIF_SCALES: usize = 4;
pub const VIF_NOISE_VAR: f64 = 2.0;
/// Smallest side for which every scale's reflected window still fits.
pub const VIF_MIN_SIZE: usize = 16;

const TINY: f64 = 1e-10;

/// Window side at scale `k` (0-based): 17, 9, 5, 3.
pub fn vif_window(k: usize) -> usize {
    (1 << (VIF_SCALES - k)) + 1
}

/// Pixel-domain multi-scale visual information fidelity of `distorted`
/// against `reference` (argument order matters).
pub fn vif(reference: &RgbImage, distorted: &RgbImage) -> Result<f64> {
    same_dims(reference, distorted)?;
    if reference.height().min(reference.width()) < VIF_MIN_SIZE {
        return Err(Error::shape(format!(
            "vif needs images of at least {VIF_MIN_SIZE}x{VIF_MIN_SIZE}, got {}x{}",
            reference.height(),
            reference.width()
        )));
    }
    if reference.pixels() == distorted.pixels() {
        return Ok(1.0);
    }
    let mut r = luma(reference);
    let mut d = luma(distorted);
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..VIF_SCALES {
        let n = vif_window(k);
        let taps = gaussian_taps(n, n as f64 / 5.0);
        if k > 0 {
            r = filter_same(&r, &taps).slice(s![..;2, ..;2]).to_owned();
            d = filter_same(&d, &taps).slice(s![..;2, ..;2]).to_owned();
        }
        let (sn, sd) = scale_terms(&r, &d, &taps);
        num += sn;
        den += sd;
    }
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(num / den)
}

fn scale_terms(r: &Array2<f64>, d: &Array2<f64>, taps: &[f64]) -> (f64, f64) {
    let mu_r = filter_same(r, taps);
    let mu_d = filter_same(d, taps);
    let e_rr = filter_same(&(r * r), taps);
    let e_dd = filter_same(&(d * d), taps);
    let e_rd = filter_same(&(r * d), taps);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..mu_r.len() {
        let at = |a: &Array2<f64>| a.as_slice().unwrap()[i];
        let (mr, md) = (at(&mu_r), at(&mu_d));
        let var_r = (at(&e_rr) - mr * mr).max(0.0);
        let var_d = (at(&e_dd) - md * md).max(0.0);
        let cov = at(&e_rd) - mr * md;
        let (var_r, gain, noise) = local_channel(var_r, var_d, cov);
        num += (1.0 + gain * gain * var_r / (noise + VIF_NOISE_VAR)).log2();
        den += (1.0 + var_r / VIF_NOISE_VAR).log2();
    }
    (num, den)
}

/// Gain and additive-noise variance of the local distortion channel, with
/// the usual guards for flat regions and negative gain.
pub(crate) fn local_channel(var_r: f64, var_d: f64, cov: f64) -> (f64, f64, f64) {
    let mut var_r = var_r;
    let mut g = cov / (var_r + TINY);
    let mut sv = var_d - g * cov;
    if var_r < TINY {
        g = 0.0;
        sv = var_d;
        var_r = 0.0;
    }
    if var_d < TINY {
        g = 0.0;
        sv = 0.0;
    }
    if g < 0.0 {
        sv = var_d;
        g = 0.0;
    }
    if sv <= TINY {
        sv = TINY;
    }
    (var_r, g, sv)
}
