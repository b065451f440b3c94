use ndarray::Array2;

use crate::colorspace::RgbImage;

/// BT.601 luma of an RGB image.
pub(crate) fn luma(img: &RgbImage) -> Array2<f64> {
    let p = img.pixels();
    Array2::from_shape_fn((img.height(), img.width()), |(y, x)| {
        0.299 * p[[y, x, 0]] as f64 + 0.587 * p[[y, x, 1]] as f64 + 0.114 * p[[y, x, 2]] as f64
    })
}

/// Luma scaled by 1000 so every value is an integer.
pub(crate) fn luma_millis(img: &RgbImage) -> Array2<i64> {
    let p = img.pixels();
    Array2::from_shape_fn((img.height(), img.width()), |(y, x)| {
        299 * p[[y, x, 0]] as i64 + 587 * p[[y, x, 1]] as i64 + 114 * p[[y, x, 2]] as i64
    })
}

/// Normalised 1-D Gaussian taps; the 2-D window is their outer product.
pub(crate) fn gaussian_taps(n: usize, sigma: f64) -> Vec<f64> {
    let c = (n as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..n)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Separable correlation keeping only positions where the window fits.
pub(crate) fn filter_valid(img: &Array2<f64>, taps: &[f64]) -> Array2<f64> {
    let (h, w) = img.dim();
    let n = taps.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let rows = Array2::from_shape_fn((h, ow), |(y, x)| (0..n).map(|k| taps[k] * img[[y, x + k]]).sum::<f64>());
    Array2::from_shape_fn((oh, ow), |(y, x)| {
        (0..n).map(|k| taps[k] * rows[[y + k, x]]).sum::<f64>()
    })
}

/// Mirror padding that does not repeat the edge sample (`dcb|abcd|cba`).
pub(crate) fn pad_reflect(img: &Array2<f64>, p: usize) -> Array2<f64> {
    let (h, w) = img.dim();
    let idx = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        if i < 0 {
            i = -i;
        }
        if i >= n {
            i = 2 * (n - 1) - i;
        }
        i as usize
    };
    Array2::from_shape_fn((h + 2 * p, w + 2 * p), |(y, x)| {
        img[[idx(y as isize - p as isize, h), idx(x as isize - p as isize, w)]]
    })
}

/// Same-size Gaussian smoothing with reflected borders.
pub(crate) fn filter_same(img: &Array2<f64>, taps: &[f64]) -> Array2<f64> {
    filter_valid(&pad_reflect(img, taps.len() / 2), taps)
}
