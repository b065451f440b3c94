#![allow(dead_code)]

pub mod oracles;

use std::fs;
use std::path::Path;

use colorgan::colorspace::RgbImage;
use colorgan::dataio::save_png;
use colorgan::networks::{ExtractorConfig, NetworkConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> RgbImage {
    RgbImage::from_fn(h, w, |_, _| [rng.random(), rng.random(), rng.random()]).unwrap()
}

/// Smooth textured image whose colour depends on its lightness and on
/// `class`, so chroma is learnable from the gray channel.
#[allow(clippy::approx_constant)]
pub fn colourful_image(rng: &mut ChaCha8Rng, h: usize, w: usize, class: usize) -> RgbImage {
    let fx = rng.random_range(0.5..2.0);
    let fy = rng.random_range(0.5..2.0);
    let phase = rng.random_range(0.0..6.28);
    let palettes = [
        ([230.0, 60.0, 40.0], [30.0, 40.0, 120.0]),
        ([60.0, 200.0, 70.0], [90.0, 20.0, 80.0]),
        ([240.0, 210.0, 60.0], [20.0, 60.0, 140.0]),
        ([90.0, 180.0, 230.0], [110.0, 50.0, 20.0]),
    ];
    let (bright, dark) = palettes[class % palettes.len()];
    RgbImage::from_fn(h, w, |y, x| {
        let t = 0.5 + 0.5 * ((x as f64 / w as f64 * 6.28 * fx + phase).sin() * (y as f64 / h as f64 * 6.28 * fy).cos());
        let mut px = [0u8; 3];
        for c in 0..3 {
            px[c] = (dark[c] + (bright[c] - dark[c]) * t).round().clamp(0.0, 255.0) as u8;
        }
        px
    })
    .unwrap()
}

pub fn grayscale_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> RgbImage {
    RgbImage::from_fn(h, w, |_, _| {
        let v = rng.random();
        [v, v, v]
    })
    .unwrap()
}

/// Nearly gray: channels differ by at most one level.
pub fn low_chroma_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> RgbImage {
    RgbImage::from_fn(h, w, |_, _| {
        let v: u8 = rng.random_range(20..230);
        [v + 1, v, v]
    })
    .unwrap()
}

/// Writes `per_class` colourful PNGs into `root/class_<k>/` for each class.
pub fn write_class_dataset(root: &Path, classes: usize, per_class: usize, size: usize, seed: u64) {
    let mut r = rng(seed);
    for k in 0..classes {
        let dir = root.join(format!("class_{k}"));
        fs::create_dir_all(&dir).unwrap();
        for i in 0..per_class {
            save_png(
                &colourful_image(&mut r, size, size, k),
                &dir.join(format!("img_{i:03}.png")),
            )
            .unwrap();
        }
    }
}

pub fn tiny_network(image_size: usize) -> NetworkConfig {
    NetworkConfig {
        image_size,
        levels: 2,
        base_channels: 4,
        max_channels: 8,
        head_hidden: 8,
        dropout: 0.5,
        disc_channels: [4, 4, 8, 8],
        disc_hidden: 8,
        init_std: 0.02,
        extractor: ExtractorConfig {
            width: 4,
            seed: 7,
            weights: None,
        },
    }
}

pub fn small_network(image_size: usize) -> NetworkConfig {
    NetworkConfig {
        image_size,
        levels: 3,
        base_channels: 16,
        max_channels: 32,
        head_hidden: 32,
        dropout: 0.5,
        disc_channels: [8, 16, 16, 32],
        disc_hidden: 32,
        init_std: 0.02,
        extractor: ExtractorConfig {
            width: 8,
            seed: 7,
            weights: None,
        },
    }
}
