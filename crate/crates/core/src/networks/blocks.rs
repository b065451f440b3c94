use ndarray::{Array2, Array4};
use rand_chacha::ChaCha8Rng;

use super::layers::{
    join, Activation, ActivationLayer, BatchNorm, Conv2d, ConvTranspose2d, Dropout, Linear, Mode, Param, Parameterized,
};
use crate::error::Result;

/// conv -> batch norm -> ReLU
#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub conv: Conv2d,
    pub bn: BatchNorm,
    act: ActivationLayer<Array4<f64>>,
}

impl ConvBlock {
    pub fn new(conv: Conv2d) -> Self {
        let bn = BatchNorm::new(conv.out_channels());
        Self {
            conv,
            bn,
            act: ActivationLayer::new(Activation::Relu),
        }
    }

    pub fn forward(&mut self, x: &Array4<f64>, mode: Mode) -> Result<Array4<f64>> {
        let y = self.conv.forward(x)?;
        let y = self.bn.forward4(&y, mode)?;
        Ok(self.act.forward(y))
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Result<Array4<f64>> {
        let d = self.act.backward(dy)?;
        let d = self.bn.backward4(&d)?;
        self.conv.backward(&d)
    }
}

impl Parameterized for ConvBlock {
    fn collect_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        out.push((join(prefix, "conv.weight"), &self.conv.weight));
        out.push((join(prefix, "conv.bias"), &self.conv.bias));
        bn_params(&self.bn, &join(prefix, "bn"), out);
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        out.push((join(prefix, "conv.weight"), &mut self.conv.weight));
        out.push((join(prefix, "conv.bias"), &mut self.conv.bias));
        bn_params_mut(&mut self.bn, &join(prefix, "bn"), out);
    }
}

pub(crate) fn bn_params<'a>(bn: &'a BatchNorm, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
    out.push((join(prefix, "gamma"), &bn.gamma));
    out.push((join(prefix, "beta"), &bn.beta));
    out.push((join(prefix, "running_mean"), &bn.running_mean));
    out.push((join(prefix, "running_var"), &bn.running_var));
}

pub(crate) fn bn_params_mut<'a>(bn: &'a mut BatchNorm, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
    out.push((join(prefix, "gamma"), &mut bn.gamma));
    out.push((join(prefix, "beta"), &mut bn.beta));
    out.push((join(prefix, "running_mean"), &mut bn.running_mean));
    out.push((join(prefix, "running_var"), &mut bn.running_var));
}

/// Decoder level: transposed conv, then either batch norm, ReLU and
/// dropout, or (output level) a bare tanh.
#[derive(Debug, Clone)]
pub struct UpBlock {
    pub deconv: ConvTranspose2d,
    pub bn: Option<BatchNorm>,
    act: ActivationLayer<Array4<f64>>,
    dropout: Option<Dropout>,
}

impl UpBlock {
    pub fn hidden(deconv: ConvTranspose2d, out_ch: usize, dropout: f64) -> Self {
        Self {
            deconv,
            bn: Some(BatchNorm::new(out_ch)),
            act: ActivationLayer::new(Activation::Relu),
            dropout: (dropout > 0.0).then(|| Dropout::new(dropout)),
        }
    }

    pub fn output(deconv: ConvTranspose2d) -> Self {
        Self {
            deconv,
            bn: None,
            act: ActivationLayer::new(Activation::Tanh),
            dropout: None,
        }
    }

    pub fn has_dropout(&self) -> bool {
        self.dropout.is_some()
    }

    pub fn activation(&self) -> Activation {
        self.act.kind()
    }

    pub fn forward(&mut self, x: &Array4<f64>, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Array4<f64>> {
        let mut y = self.deconv.forward(x)?;
        if let Some(bn) = &mut self.bn {
            y = bn.forward4(&y, mode)?;
        }
        let y = self.act.forward(y);
        Ok(match &mut self.dropout {
            Some(d) => d.forward(y, mode, rng),
            None => y,
        })
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Result<Array4<f64>> {
        let d = match &self.dropout {
            Some(drop) => drop.backward(dy),
            None => dy.clone(),
        };
        let mut d = self.act.backward(&d)?;
        if let Some(bn) = &mut self.bn {
            d = bn.backward4(&d)?;
        }
        self.deconv.backward(&d)
    }
}

impl Parameterized for UpBlock {
    fn collect_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        out.push((join(prefix, "deconv.weight"), &self.deconv.weight));
        out.push((join(prefix, "deconv.bias"), &self.deconv.bias));
        if let Some(bn) = &self.bn {
            bn_params(bn, &join(prefix, "bn"), out);
        }
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        out.push((join(prefix, "deconv.weight"), &mut self.deconv.weight));
        out.push((join(prefix, "deconv.bias"), &mut self.deconv.bias));
        if let Some(bn) = &mut self.bn {
            bn_params_mut(bn, &join(prefix, "bn"), out);
        }
    }
}

/// Two fully connected layers: `fc1 -> batch norm -> ReLU -> fc2`, with an
/// optional output activation.
#[derive(Debug, Clone)]
pub struct DenseHead {
    pub fc1: Linear,
    pub bn: BatchNorm,
    act: ActivationLayer<Array2<f64>>,
    pub fc2: Linear,
    out_act: Option<ActivationLayer<Array2<f64>>>,
}

impl DenseHead {
    pub fn new(fc1: Linear, fc2: Linear, out_act: Option<Activation>) -> Self {
        let bn = BatchNorm::new(fc1.out_features());
        Self {
            fc1,
            bn,
            act: ActivationLayer::new(Activation::Relu),
            fc2,
            out_act: out_act.map(ActivationLayer::new),
        }
    }

    pub fn forward(&mut self, x: &Array2<f64>, mode: Mode) -> Result<Array2<f64>> {
        let h = self.fc1.forward(x)?;
        let h = self.bn.forward2(&h, mode)?;
        let h = self.act.forward(h);
        let y = self.fc2.forward(&h)?;
        Ok(match &mut self.out_act {
            Some(a) => a.forward(y),
            None => y,
        })
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Result<Array2<f64>> {
        let d = match &self.out_act {
            Some(a) => a.backward(dy)?,
            None => dy.clone(),
        };
        let d = self.fc2.backward(&d)?;
        let d = self.act.backward(&d)?;
        let d = self.bn.backward2(&d)?;
        self.fc1.backward(&d)
    }
}

impl Parameterized for DenseHead {
    fn collect_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        out.push((join(prefix, "fc1.weight"), &self.fc1.weight));
        out.push((join(prefix, "fc1.bias"), &self.fc1.bias));
        bn_params(&self.bn, &join(prefix, "bn"), out);
        out.push((join(prefix, "fc2.weight"), &self.fc2.weight));
        out.push((join(prefix, "fc2.bias"), &self.fc2.bias));
    }

    fn collect_params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param)>) {
        out.push((join(prefix, "fc1.weight"), &mut self.fc1.weight));
        out.push((join(prefix, "fc1.bias"), &mut self.fc1.bias));
        bn_params_mut(&mut self.bn, &join(prefix, "bn"), out);
        out.push((join(prefix, "fc2.weight"), &mut self.fc2.weight));
        out.push((join(prefix, "fc2.bias"), &mut self.fc2.bias));
    }
}
