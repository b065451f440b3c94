use ndarray::Array2;

use super::pixel::same_dims;
use super::window::{filter_valid, gaussian_taps, luma, luma_millis};
use crate::colorspace::RgbImage;
use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const UQI_WINDOW: usize = 8;

fn check_size(a: &RgbImage, window: usize, what: &str) -> Result<()> {
    if a.height().min(a.width()) < window {
        return Err(Error::shape(format!(
            "{what} needs images of at least {window}x{window}, got {}x{}",
            a.height(),
            a.width()
        )));
    }
    Ok(())
}

/// Mean SSIM over every full window position on the luma plane.
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    same_dims(a, b)?;
    check_size(a, SSIM_WINDOW, "ssim")?;
    let (x, y) = (luma(a), luma(b));
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = (SSIM_K1 * 255.0).powi(2);
    let c2 = (SSIM_K2 * 255.0).powi(2);
    let mu_x = filter_valid(&x, &taps);
    let mu_y = filter_valid(&y, &taps);
    let e_xx = filter_valid(&(&x * &x), &taps);
    let e_yy = filter_valid(&(&y * &y), &taps);
    let e_xy = filter_valid(&(&x * &y), &taps);
    let mut total = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x.as_slice().unwrap()[i], mu_y.as_slice().unwrap()[i]);
        let vx = e_xx.as_slice().unwrap()[i] - mx * mx;
        let vy = e_yy.as_slice().unwrap()[i] - my * my;
        let cov = e_xy.as_slice().unwrap()[i] - mx * my;
        let luminance = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
        let structure = (2.0 * cov + c2) / (vx + vy + c2);
        total += luminance * structure;
    }
    Ok(total / mu_x.len() as f64)
}

/// Universal quality index: SSIM without stabilising constants over an
/// 8x8 box window. Window sums are exact integers, so windows with a zero
/// denominator are detected exactly and skipped.
pub fn uqi(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    same_dims(a, b)?;
    check_size(a, UQI_WINDOW, "uqi")?;
    let (x, y) = (luma_millis(a), luma_millis(b));
    let n = (UQI_WINDOW * UQI_WINDOW) as i128;
    let sums = |f: &dyn Fn(usize, usize) -> i128| -> Array2<i128> {
        let (h, w) = x.dim();
        Array2::from_shape_fn((h + 1 - UQI_WINDOW, w + 1 - UQI_WINDOW), |(r, c)| {
            let mut s = 0;
            for dy in 0..UQI_WINDOW {
                for dx in 0..UQI_WINDOW {
                    s += f(r + dy, c + dx);
                }
            }
            s
        })
    };
    let sx = sums(&|r, c| x[[r, c]] as i128);
    let sy = sums(&|r, c| y[[r, c]] as i128);
    let sxx = sums(&|r, c| (x[[r, c]] * x[[r, c]]) as i128);
    let syy = sums(&|r, c| (y[[r, c]] * y[[r, c]]) as i128);
    let sxy = sums(&|r, c| (x[[r, c]] * y[[r, c]]) as i128);
    let mut total = 0.0;
    let mut used = 0usize;
    for (((&s1, &s2), (&s11, &s22)), &s12) in sx.iter().zip(&sy).zip(sxx.iter().zip(&syy)).zip(&sxy) {
        // Both factors carry a common n^2 scale that cancels.
        let cov_num = 2 * (n * s12 - s1 * s2);
        let var_den = n * s11 - s1 * s1 + n * s22 - s2 * s2;
        let mean_num = 2 * s1 * s2;
        let mean_den = s1 * s1 + s2 * s2;
        if var_den == 0 || mean_den == 0 {
            continue;
        }
        total += (cov_num as f64 / var_den as f64) * (mean_num as f64 / mean_den as f64);
        used += 1;
    }
    if used == 0 {
        return Ok(if x == y { 1.0 } else { 0.0 });
    }
    Ok(total / used as f64)
}
