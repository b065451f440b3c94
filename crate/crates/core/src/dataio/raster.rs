use std::path::Path;

use ndarray::Array3;

use crate::colorspace::RgbImage;
use crate::error::{Error, Result};

/// Side length every training sample is resampled to.
pub const TRAINING_SIZE: usize = 256;

/// Decodes a PNG or JPEG file into 8-bit sRGB. Gray and gray-alpha files
/// are expanded to `R = G = B`; alpha is dropped.
pub fn load_image(path: &Path) -> Result<RgbImage> {
    if !path.is_file() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let decoded = image::ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    let rgb = decoded.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    RgbImage::from_raw(h, w, rgb.into_raw()).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.to_raw())
        .ok_or_else(|| Error::shape("raster buffer length mismatch"))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::Io(io),
            other => Error::Format {
                path: path.to_path_buf(),
                reason: other.to_string(),
            },
        })
}

/// Bilinear resample with pixel-centre alignment. Resampling to the same
/// size is the identity.
pub fn resize_bilinear(img: &RgbImage, height: usize, width: usize) -> RgbImage {
    let (sh, sw) = (img.height(), img.width());
    if sh == height && sw == width {
        return img.clone();
    }
    let src = img.pixels();
    let scale_y = sh as f64 / height as f64;
    let scale_x = sw as f64 / width as f64;
    let axis = |dst: usize, scale: f64, len: usize| -> (usize, usize, f64) {
        let pos = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(len - 1);
        (lo, hi, pos - lo as f64)
    };
    let xs: Vec<_> = (0..width).map(|x| axis(x, scale_x, sw)).collect();
    let mut out = Array3::zeros((height, width, 3));
    for y in 0..height {
        let (y0, y1, fy) = axis(y, scale_y, sh);
        for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
            for c in 0..3 {
                let p00 = f64::from(src[[y0, x0, c]]);
                let p01 = f64::from(src[[y0, x1, c]]);
                let p10 = f64::from(src[[y1, x0, c]]);
                let p11 = f64::from(src[[y1, x1, c]]);
                let top = p00 + (p01 - p00) * fx;
                let bottom = p10 + (p11 - p10) * fx;
                out[[y, x, c]] = (top + (bottom - top) * fy).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    RgbImage::new(out).expect("resize keeps three channels")
}

pub fn resize_to_training(img: &RgbImage) -> RgbImage {
    resize_bilinear(img, TRAINING_SIZE, TRAINING_SIZE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn downscale_shape_and_constant() {
        let img = RgbImage::filled(512, 512, [12, 200, 77]).unwrap();
        let out = resize_to_training(&img);
        assert_eq!((out.height(), out.width()), (256, 256));
        assert!(out
            .pixels()
            .outer_iter()
            .all(|row| row.outer_iter().all(|p| p.to_vec() == vec![12, 200, 77])));
    }

    #[test]
    fn same_size_is_identity() {
        let img = RgbImage::from_fn(256, 256, |y, x| {
            [(x % 256) as u8, (y % 256) as u8, ((x * y) % 251) as u8]
        })
        .unwrap();
        assert_eq!(resize_to_training(&img), img);
    }

    #[test]
    fn upscale_interpolates_between_neighbours() {
        let img = RgbImage::from_fn(1, 2, |_, x| if x == 0 { [0, 0, 0] } else { [100, 100, 100] }).unwrap();
        let out = resize_bilinear(&img, 1, 4);
        let row: Vec<u8> = (0..4).map(|x| out.pixel(0, x)[0]).collect();
        assert_eq!(row, vec![0, 25, 75, 100]);
    }

    #[test]
    fn missing_and_truncated_files() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.png");
        assert!(matches!(load_image(&missing), Err(Error::NotFound(_))));

        let img = RgbImage::filled(8, 8, [1, 2, 3]).unwrap();
        let good = dir.path().join("good.png");
        save_png(&img, &good).unwrap();
        let bytes = std::fs::read(&good).unwrap();
        let truncated = dir.path().join("bad.png");
        std::fs::write(&truncated, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_image(&truncated), Err(Error::Format { .. })));
        assert_eq!(load_image(&good).unwrap(), img);
    }

    #[test]
    fn single_channel_expands() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gray.png");
        let gray = image::GrayImage::from_fn(5, 3, |x, y| image::Luma([(x * 40 + y) as u8]));
        gray.save(&path).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!((img.height(), img.width()), (3, 5));
        for y in 0..3 {
            for x in 0..5 {
                let p = img.pixel(y, x);
                assert!(p[0] == p[1] && p[1] == p[2]);
                assert_eq!(p[0], (x * 40 + y) as u8);
            }
        }
    }
}
