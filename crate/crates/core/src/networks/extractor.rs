use std::path::{Path, PathBuf};

use ndarray::Array4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Archive;
use super::layers::{Activation, ActivationLayer, Conv2d, Param};
use crate::error::{Error, Result};

/// ImageNet channel statistics expected by VGG-style feature extractors.
pub const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractorConfig {
    /// Channels of both 3x3 convolutions (64 for VGG `relu1_2`).
    pub width: usize,
    pub seed: u64,
    /// Archive holding `conv1_1.{weight,bias}` and `conv1_2.{weight,bias}`;
    /// when absent the extractor is a frozen random stack.
    pub weights: Option<PathBuf>,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            width: 64,
            seed: 1_000_003,
            weights: None,
        }
    }
}

/// Fixed convolutional feature map used by the perceptual loss. Gradients
/// reach the input image but never the extractor's own weights.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    convs: Vec<Conv2d>,
    relus: Vec<ActivationLayer<Array4<f64>>>,
    input_norm: Option<([f64; 3], [f64; 3])>,
}

impl FeatureExtractor {
    /// Stack of `conv -> ReLU` layers, all frozen.
    pub fn from_convs(convs: Vec<Conv2d>, input_norm: Option<([f64; 3], [f64; 3])>) -> Result<Self> {
        let mut ch = 3;
        for c in &convs {
            if c.in_channels() != ch {
                return Err(Error::shape(format!(
                    "extractor layer expects {} channels after {ch}",
                    c.in_channels()
                )));
            }
            ch = c.out_channels();
        }
        let relus = convs.iter().map(|_| ActivationLayer::new(Activation::Relu)).collect();
        Ok(Self {
            convs: convs.into_iter().map(Conv2d::frozen).collect(),
            relus,
            input_norm,
        })
    }

    pub fn identity() -> Self {
        Self {
            convs: Vec::new(),
            relus: Vec::new(),
            input_norm: None,
        }
    }

    /// Two He-initialised 3x3 convolutions mirroring VGG's first block.
    pub fn random(width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c1 = Conv2d::new(3, width, 3, 1, 1, (2.0 / 27.0f64).sqrt(), &mut rng);
        let c2 = Conv2d::new(width, width, 3, 1, 1, (2.0 / (9.0 * width as f64)).sqrt(), &mut rng);
        Self::from_convs(vec![c1, c2], Some((IMAGENET_MEAN, IMAGENET_STD))).expect("consistent channels")
    }

    pub fn from_archive(path: &Path) -> Result<Self> {
        let archive = Archive::read(path)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut convs = Vec::new();
        for name in ["conv1_1", "conv1_2"] {
            let w = archive.tensor(&format!("{name}.weight"))?;
            let b = archive.tensor(&format!("{name}.bias"))?;
            if w.shape.len() != 4 || w.shape[2] != 3 || w.shape[3] != 3 || b.shape != [w.shape[0]] {
                return Err(Error::Checkpoint(format!(
                    "{name}: expected (out, in, 3, 3) weights and (out) bias, got {:?} / {:?}",
                    w.shape, b.shape
                )));
            }
            let mut conv = Conv2d::new(w.shape[1], w.shape[0], 3, 1, 1, 0.0, &mut rng);
            conv.weight.value = w.data.clone();
            conv.bias.value = b.data.clone();
            convs.push(conv);
        }
        Self::from_convs(convs, Some((IMAGENET_MEAN, IMAGENET_STD)))
    }

    pub fn from_config(cfg: &ExtractorConfig) -> Result<Self> {
        match &cfg.weights {
            Some(p) => Self::from_archive(p),
            None => {
                if cfg.width == 0 {
                    return Err(Error::config("extractor width must be positive"));
                }
                Ok(Self::random(cfg.width, cfg.seed))
            }
        }
    }

    pub fn out_channels(&self) -> usize {
        self.convs.last().map_or(3, Conv2d::out_channels)
    }

    /// Ratio of input to output spatial size.
    pub fn stride(&self) -> usize {
        self.convs.iter().map(Conv2d::stride).product()
    }

    pub fn params(&self) -> Vec<&Param> {
        self.convs.iter().flat_map(|c| [&c.weight, &c.bias]).collect()
    }

    /// Maps an RGB batch `(B, 3, H, W)` with values nominally in `[0, 1]`
    /// to features.
    pub fn forward(&mut self, image: &Array4<f64>) -> Result<Array4<f64>> {
        if image.dim().1 != 3 {
            return Err(Error::shape(format!(
                "feature extractor expects 3 channels, got {}",
                image.dim().1
            )));
        }
        let mut x = image.clone();
        if let Some((mean, std)) = self.input_norm {
            for c in 0..3 {
                x.slice_mut(ndarray::s![.., c, .., ..])
                    .mapv_inplace(|v| (v - mean[c]) / std[c]);
            }
        }
        for (conv, relu) in self.convs.iter_mut().zip(&mut self.relus) {
            x = relu.forward(conv.forward(&x)?);
        }
        Ok(x)
    }

    /// Input gradient for the most recent forward call.
    pub fn backward(&mut self, d_features: &Array4<f64>) -> Result<Array4<f64>> {
        let mut g = d_features.clone();
        for (conv, relu) in self.convs.iter_mut().zip(&self.relus).rev() {
            g = conv.backward(&relu.backward(&g)?)?;
        }
        if let Some((_, std)) = self.input_norm {
            for (c, sd) in std.into_iter().enumerate() {
                g.slice_mut(ndarray::s![.., c, .., ..]).mapv_inplace(|v| v / sd);
            }
        }
        Ok(g)
    }
}
