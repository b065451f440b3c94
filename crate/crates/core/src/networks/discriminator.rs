use ndarray::{Array2, Array4};

use super::blocks::{ConvBlock, DenseHead};
use super::layers::{flatten, join, unflatten, Activation, Conv2d, Linear, Mode, Param, Parameterized};
use super::NetworkConfig;
use crate::error::{Error, Result};
use rand_chacha::ChaCha8Rng;

/// Four 5x5 stride-2 convolutions followed by two fully connected layers
/// and a sigmoid. Input is a 3-channel normalised Lab image.
#[derive(Debug, Clone)]
pub struct DiscriminatorNet {
    convs: Vec<ConvBlock>,
    head: DenseHead,
    image_size: usize,
    feature_shape: Option<(usize, usize, usize, usize)>,
}

impl DiscriminatorNet {
    pub fn new(cfg: &NetworkConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let std = cfg.init_std;
        let mut convs = Vec::with_capacity(4);
        let mut in_ch = 3;
        let mut side = cfg.image_size;
        for &ch in &cfg.disc_channels {
            let conv = Conv2d::new(in_ch, ch, 5, 2, 2, std, rng);
            side = conv.output_size(side)?;
            convs.push(ConvBlock::new(conv));
            in_ch = ch;
        }
        let flat = in_ch * side * side;
        let head = DenseHead::new(
            Linear::new(flat, cfg.disc_hidden, std, rng),
            Linear::new(cfg.disc_hidden, 1, std, rng),
            Some(Activation::Sigmoid),
        );
        Ok(Self {
            convs,
            head,
            image_size: cfg.image_size,
            feature_shape: None,
        })
    }

    /// Spatial side after each convolution, starting with the input.
    pub fn spatial_trace(&self) -> Vec<usize> {
        let mut trace = vec![self.image_size];
        let mut side = self.image_size;
        for block in &self.convs {
            side = block.conv.output_size(side).expect("validated at construction");
            trace.push(side);
        }
        trace
    }

    /// Probability that each image is real, shape `(B, 1)`.
    pub fn forward(&mut self, image: &Array4<f64>, mode: Mode) -> Result<Array2<f64>> {
        let (b, c, h, w) = image.dim();
        if b == 0 || c != 3 || h != self.image_size || w != self.image_size {
            return Err(Error::shape(format!(
                "discriminator expects (B, 3, {s}, {s}), got {:?}",
                image.dim(),
                s = self.image_size
            )));
        }
        let mut x = image.clone();
        for block in &mut self.convs {
            x = block.forward(&x, mode)?;
        }
        self.feature_shape = Some(x.dim());
        self.head.forward(&flatten(&x), mode)
    }

    /// Backpropagates `d loss / d probability`; returns the input gradient.
    pub fn backward(&mut self, d_prob: &Array2<f64>) -> Result<Array4<f64>> {
        let shape = self
            .feature_shape
            .ok_or_else(|| Error::shape("discriminator backward before forward"))?;
        let g = self.head.backward(d_prob)?;
        let mut g = unflatten(&g, shape);
        for block in self.convs.iter_mut().rev() {
            g = block.backward(&g)?;
        }
        Ok(g)
    }
}

impl Parameterized for DiscriminatorNet {
    fn collect_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        for (i, c) in self.convs.iter().enumerate() {
            c.collect_params(&join(prefix, &format!("conv{i}")), out);
        }
        self.head.collect_params(&join(prefix, "head"), out);
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        for (i, c) in self.convs.iter_mut().enumerate() {
            c.collect_params_mut(&join(prefix, &format!("conv{i}")), out);
        }
        self.head.collect_params_mut(&join(prefix, "head"), out);
    }
}
