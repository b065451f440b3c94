use ndarray::{Array2, Array4};
use rand_chacha::ChaCha8Rng;

use super::blocks::{ConvBlock, DenseHead, UpBlock};
use super::layers::{
    concat_channels, flatten, join, split_channels, unflatten, Conv2d, ConvTranspose2d, Linear, Mode, Param,
    Parameterized,
};
use super::NetworkConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GeneratorOutput {
    /// `(B, 2, S, S)`, every value in `(-1, 1)`.
    pub ab: Array4<f64>,
    /// `(B, num_classes)` raw scores.
    pub logits: Array2<f64>,
}

/// U-Net generator: `levels` stride-2 encoder convolutions, a mirrored
/// decoder of transposed convolutions fed with skip connections, and a
/// two-layer classifier on the flattened bottleneck.
#[derive(Debug, Clone)]
pub struct GeneratorNet {
    encoders: Vec<ConvBlock>,
    decoders: Vec<UpBlock>,
    head: DenseHead,
    channels: Vec<usize>,
    image_size: usize,
    num_classes: usize,
    bottleneck: Option<(usize, usize, usize, usize)>,
}

impl GeneratorNet {
    pub fn new(cfg: &NetworkConfig, num_classes: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        if num_classes == 0 {
            return Err(Error::config("num_classes must be positive"));
        }
        let n = cfg.levels;
        let channels = cfg.encoder_channels();
        let std = cfg.init_std;

        let mut encoders = Vec::with_capacity(n);
        let mut in_ch = 1;
        for &ch in &channels {
            encoders.push(ConvBlock::new(Conv2d::new(in_ch, ch, 4, 2, 1, std, rng)));
            in_ch = ch;
        }

        // Decoder level j restores the resolution of encoder level n-2-j.
        let mut decoders = Vec::with_capacity(n);
        for j in 0..n {
            let input = if j == 0 {
                channels[n - 1]
            } else {
                channels[n - j - 1] * 2
            };
            if j + 1 == n {
                decoders.push(UpBlock::output(ConvTranspose2d::new(input, 2, 4, 2, 1, std, rng)));
            } else {
                let out = channels[n - 2 - j];
                decoders.push(UpBlock::hidden(
                    ConvTranspose2d::new(input, out, 4, 2, 1, std, rng),
                    out,
                    cfg.dropout,
                ));
            }
        }

        let side = cfg.image_size >> n;
        let flat = channels[n - 1] * side * side;
        let head = DenseHead::new(
            Linear::new(flat, cfg.head_hidden, std, rng),
            Linear::new(cfg.head_hidden, num_classes, std, rng),
            None,
        );
        Ok(Self {
            encoders,
            decoders,
            head,
            channels,
            image_size: cfg.image_size,
            num_classes,
            bottleneck: None,
        })
    }

    pub fn levels(&self) -> usize {
        self.encoders.len()
    }

    pub fn encoder_channels(&self) -> &[usize] {
        &self.channels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn image_size(&self) -> usize {
        self.image_size
    }

    pub fn decoders(&self) -> &[UpBlock] {
        &self.decoders
    }

    pub fn forward(&mut self, l_n: &Array4<f64>, mode: Mode, rng: &mut ChaCha8Rng) -> Result<GeneratorOutput> {
        let (b, c, h, w) = l_n.dim();
        if c != 1 || h != self.image_size || w != self.image_size || b == 0 {
            return Err(Error::shape(format!(
                "generator expects (B, 1, {s}, {s}), got {:?}",
                l_n.dim(),
                s = self.image_size
            )));
        }
        let n = self.levels();
        let mut skips: Vec<Array4<f64>> = Vec::with_capacity(n);
        let mut x = l_n.clone();
        for enc in &mut self.encoders {
            x = enc.forward(&x, mode)?;
            skips.push(x.clone());
        }
        let bottleneck = skips[n - 1].clone();
        self.bottleneck = Some(bottleneck.dim());
        let logits = self.head.forward(&flatten(&bottleneck), mode)?;

        let mut y = self.decoders[0].forward(&bottleneck, mode, rng)?;
        for j in 1..n {
            let input = concat_channels(&y, &skips[n - 1 - j])?;
            y = self.decoders[j].forward(&input, mode, rng)?;
        }
        Ok(GeneratorOutput { ab: y, logits })
    }

    /// Backpropagates gradients of the chroma output and the class logits,
    /// accumulating parameter gradients. Returns the input gradient.
    pub fn backward(&mut self, d_ab: &Array4<f64>, d_logits: &Array2<f64>) -> Result<Array4<f64>> {
        let n = self.levels();
        let bshape = self
            .bottleneck
            .ok_or_else(|| Error::shape("generator backward before forward"))?;
        let mut enc_grads: Vec<Option<Array4<f64>>> = vec![None; n];

        let mut g = d_ab.clone();
        for j in (0..n).rev() {
            let gin = self.decoders[j].backward(&g)?;
            if j == 0 {
                accumulate(&mut enc_grads[n - 1], gin);
            } else {
                let up_channels = self.channels[n - 1 - j];
                let (g_prev, g_skip) = split_channels(&gin, up_channels);
                accumulate(&mut enc_grads[n - 1 - j], g_skip);
                g = g_prev;
            }
        }

        let g_flat = self.head.backward(d_logits)?;
        accumulate(&mut enc_grads[n - 1], unflatten(&g_flat, bshape));

        let mut dx = None;
        for i in (0..n).rev() {
            let gi = enc_grads[i].take().expect("every encoder level receives a gradient");
            let d = self.encoders[i].backward(&gi)?;
            if i == 0 {
                dx = Some(d);
            } else {
                accumulate(&mut enc_grads[i - 1], d);
            }
        }
        Ok(dx.expect("at least one level"))
    }
}

fn accumulate(slot: &mut Option<Array4<f64>>, g: Array4<f64>) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

impl Parameterized for GeneratorNet {
    fn collect_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        for (i, e) in self.encoders.iter().enumerate() {
            e.collect_params(&join(prefix, &format!("enc{i}")), out);
        }
        for (j, d) in self.decoders.iter().enumerate() {
            d.collect_params(&join(prefix, &format!("dec{j}")), out);
        }
        self.head.collect_params(&join(prefix, "head"), out);
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        for (i, e) in self.encoders.iter_mut().enumerate() {
            e.collect_params_mut(&join(prefix, &format!("enc{i}")), out);
        }
        for (j, d) in self.decoders.iter_mut().enumerate() {
            d.collect_params_mut(&join(prefix, &format!("dec{j}")), out);
        }
        self.head.collect_params_mut(&join(prefix, "head"), out);
    }
}
