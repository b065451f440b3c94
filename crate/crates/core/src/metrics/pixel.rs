use crate::colorspace::RgbImage;
use crate::error::{Error, Result};

/// Reported for identical images, where the ratio diverges.
pub const PSNR_CAP: f64 = 99.0;

pub(crate) fn same_dims(a: &RgbImage, b: &RgbImage) -> Result<()> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::shape(format!(
            "images differ in size: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

/// Mean squared 8-bit difference over all pixels and channels.
pub fn mse(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    same_dims(a, b)?;
    let sum: u64 = a
        .pixels()
        .iter()
        .zip(b.pixels().iter())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    Ok(sum as f64 / a.pixels().len() as f64)
}

pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        PSNR_CAP
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}
