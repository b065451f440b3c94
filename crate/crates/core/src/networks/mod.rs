//! Generator, discriminator and frozen perceptual feature extractor.

mod blocks;
pub mod checkpoint;
mod discriminator;
mod extractor;
mod generator;
pub mod layers;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use blocks::UpBlock;
pub use checkpoint::{Archive, Tensor};
pub use discriminator::DiscriminatorNet;
pub use extractor::{ExtractorConfig, FeatureExtractor, IMAGENET_MEAN, IMAGENET_STD};
pub use generator::{GeneratorNet, GeneratorOutput};
pub use layers::{Mode, Param, Parameterized};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// Square side of generator and discriminator inputs.
    pub image_size: usize,
    /// Number of stride-2 encoder levels in the generator.
    pub levels: usize,
    pub base_channels: usize,
    pub max_channels: usize,
    pub head_hidden: usize,
    pub dropout: f64,
    pub disc_channels: [usize; 4],
    pub disc_hidden: usize,
    pub init_std: f64,
    pub extractor: ExtractorConfig,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            image_size: 256,
            levels: 6,
            base_channels: 64,
            max_channels: 512,
            head_hidden: 512,
            dropout: 0.5,
            disc_channels: [64, 128, 256, 512],
            disc_hidden: 512,
            init_std: 0.02,
            extractor: ExtractorConfig::default(),
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.levels >= usize::BITS as usize {
            return Err(Error::config(format!(
                "generator needs at least one level, got {}",
                self.levels
            )));
        }
        if self.image_size == 0 || !self.image_size.is_multiple_of(1usize << self.levels) {
            return Err(Error::config(format!(
                "image size {} is not divisible by 2^{} (bottleneck would be sub-pixel)",
                self.image_size, self.levels
            )));
        }
        if self.base_channels == 0 || self.max_channels == 0 || self.head_hidden == 0 || self.disc_hidden == 0 {
            return Err(Error::config("layer widths must be positive"));
        }
        if self.disc_channels.contains(&0) {
            return Err(Error::config("discriminator channels must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return Err(Error::config("init_std must be positive"));
        }
        Ok(())
    }

    /// Output channels of each encoder level: `base * 2^i`, capped.
    pub fn encoder_channels(&self) -> Vec<usize> {
        (0..self.levels)
            .map(|i| (self.base_channels << i.min(20)).min(self.max_channels))
            .collect()
    }

    pub fn bottleneck_side(&self) -> usize {
        self.image_size >> self.levels
    }
}

/// Builds generator and discriminator from one seed.
pub fn init_networks(cfg: &NetworkConfig, num_classes: usize, seed: u64) -> Result<(GeneratorNet, DiscriminatorNet)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let generator = GeneratorNet::new(cfg, num_classes, &mut rng)?;
    let discriminator = DiscriminatorNet::new(cfg, &mut rng)?;
    Ok((generator, discriminator))
}
