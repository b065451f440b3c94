//! Adversarial, per-pixel L1, classification and perceptual losses, and
//! their weighted combination.
//!
//! Every `*_and_grad` function returns the loss together with its gradient
//! with respect to the prediction argument.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Array4, Zip};
use serde::{Deserialize, Serialize};

use crate::colorspace::normalized_lab_to_rgb_smooth;
use crate::dataio::LabelMode;
use crate::error::{Error, Result};
use crate::networks::{DiscriminatorNet, FeatureExtractor, Mode};

/// Clamp applied to discriminator probabilities before taking logs.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// Per-pixel L1 weight.
    pub lambda1: f64,
    /// Classification weight.
    pub lambda2: f64,
    /// Perceptual weight.
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 100.0,
            lambda2: 10.0,
            lambda3: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossComponents {
    pub adv: f64,
    pub l1: f64,
    pub classification: f64,
    pub perceptual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub adv: f64,
    pub l1: f64,
    pub classification: f64,
    pub perceptual: f64,
    pub total: f64,
}

impl LossReport {
    /// One training-log line: `step adv l1 class per total`. Values use the
    /// shortest representation that round-trips exactly.
    pub fn log_line(&self, step: u64) -> String {
        format!(
            "{step} {} {} {} {} {}",
            self.adv, self.l1, self.classification, self.perceptual, self.total
        )
    }

    pub fn parse_log_line(line: &str) -> Result<(u64, LossReport)> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::config(format!("log line needs 6 fields: `{line}`")));
        }
        let bad = |e: &dyn fmt::Display| Error::config(format!("log line `{line}`: {e}"));
        let step = u64::from_str(fields[0]).map_err(|e| bad(&e))?;
        let v: Vec<f64> = fields[1..]
            .iter()
            .map(|f| f64::from_str(f).map_err(|e| bad(&e)))
            .collect::<Result<_>>()?;
        Ok((
            step,
            LossReport {
                adv: v[0],
                l1: v[1],
                classification: v[2],
                perceptual: v[3],
                total: v[4],
            },
        ))
    }
}

fn same_shape<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>, b: &ndarray::Array<f64, D>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    if a.is_empty() {
        return Err(Error::shape(format!("{what}: empty tensors")));
    }
    Ok(())
}

/// Mean absolute chroma difference over all elements.
pub fn l1_chroma_loss(pred: &Array4<f64>, target: &Array4<f64>) -> Result<f64> {
    same_shape(pred, target, "l1 loss")?;
    let sum: f64 = pred.iter().zip(target.iter()).map(|(p, t)| (p - t).abs()).sum();
    Ok(sum / pred.len() as f64)
}

pub fn l1_chroma_loss_and_grad(pred: &Array4<f64>, target: &Array4<f64>) -> Result<(f64, Array4<f64>)> {
    let loss = l1_chroma_loss(pred, target)?;
    let n = pred.len() as f64;
    let mut grad = Array4::zeros(pred.dim());
    Zip::from(&mut grad).and(pred).and(target).for_each(|g, &p, &t| {
        // subgradient 0 at equality
        *g = if p > t {
            1.0 / n
        } else if p < t {
            -1.0 / n
        } else {
            0.0
        };
    });
    Ok((loss, grad))
}

/// Mean squared feature difference `1/(B*C*H*W) * sum (V(pred) - V(target))^2`.
pub fn perceptual_loss(v: &mut FeatureExtractor, img_pred: &Array4<f64>, img_target: &Array4<f64>) -> Result<f64> {
    Ok(perceptual_loss_and_grad(v, img_pred, img_target)?.0)
}

pub fn perceptual_loss_and_grad(
    v: &mut FeatureExtractor,
    img_pred: &Array4<f64>,
    img_target: &Array4<f64>,
) -> Result<(f64, Array4<f64>)> {
    same_shape(img_pred, img_target, "perceptual loss")?;
    let f_target = v.forward(img_target)?;
    let f_pred = v.forward(img_pred)?;
    let n = f_pred.len() as f64;
    let diff = &f_pred - &f_target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let d_feat = diff * (2.0 / n);
    let grad = v.backward(&d_feat)?;
    Ok((loss, grad))
}

fn log_sum_exp(row: ndarray::ArrayView1<f64>) -> f64 {
    let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Softplus `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Softmax cross-entropy (single-class) or mean per-attribute sigmoid
/// cross-entropy (multi-attribute), averaged over the batch.
pub fn classification_loss(logits: &Array2<f64>, labels: &Array2<f64>, mode: LabelMode) -> Result<f64> {
    Ok(classification_loss_and_grad(logits, labels, mode)?.0)
}

pub fn classification_loss_and_grad(
    logits: &Array2<f64>,
    labels: &Array2<f64>,
    mode: LabelMode,
) -> Result<(f64, Array2<f64>)> {
    same_shape(logits, labels, "classification loss")?;
    let (b, k) = logits.dim();
    let mut grad = Array2::zeros((b, k));
    let mut total = 0.0;
    match mode {
        LabelMode::SingleClass => {
            for i in 0..b {
                let row = logits.row(i);
                let lse = log_sum_exp(row);
                for j in 0..k {
                    let y = labels[[i, j]];
                    total += y * (lse - row[j]);
                    grad[[i, j]] = ((row[j] - lse).exp() - y) / b as f64;
                }
            }
            Ok((total / b as f64, grad))
        }
        LabelMode::MultiAttribute => {
            let n = (b * k) as f64;
            for i in 0..b {
                for j in 0..k {
                    let (z, y) = (logits[[i, j]], labels[[i, j]]);
                    // y * softplus(-z) + (1 - y) * softplus(z)
                    total += y * softplus(-z) + (1.0 - y) * softplus(z);
                    grad[[i, j]] = (crate::networks::layers::sigmoid(z) - y) / n;
                }
            }
            Ok((total / n, grad))
        }
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// `-mean log D(x)`: the discriminator's real-sample term and the
/// generator's non-saturating adversarial term. Gradient is with respect
/// to the probabilities and vanishes where the clamp is active.
pub fn neg_log_likelihood_real(probs: &Array2<f64>) -> (f64, Array2<f64>) {
    let n = probs.len() as f64;
    let loss = -probs.iter().map(|&p| clamp_prob(p).ln()).sum::<f64>() / n;
    let grad = probs.mapv(|p| {
        if p > PROB_EPS && p < 1.0 - PROB_EPS {
            -1.0 / (p * n)
        } else {
            0.0
        }
    });
    (loss, grad)
}

/// `-mean log(1 - D(x))`: the discriminator's fake-sample term.
pub fn neg_log_likelihood_fake(probs: &Array2<f64>) -> (f64, Array2<f64>) {
    let n = probs.len() as f64;
    let loss = -probs.iter().map(|&p| (1.0 - clamp_prob(p)).ln()).sum::<f64>() / n;
    let grad = probs.mapv(|p| {
        if p > PROB_EPS && p < 1.0 - PROB_EPS {
            1.0 / ((1.0 - p) * n)
        } else {
            0.0
        }
    });
    (loss, grad)
}

/// Discriminator loss and non-saturating generator loss for one pair of
/// batches, both given as `(B, 3, S, S)` normalised Lab images.
pub fn adversarial_losses(
    d: &mut DiscriminatorNet,
    real_images: &Array4<f64>,
    fake_images: &Array4<f64>,
    mode: Mode,
) -> Result<(f64, f64)> {
    same_shape(real_images, fake_images, "adversarial loss")?;
    let p_real = d.forward(real_images, mode)?;
    let p_fake = d.forward(fake_images, mode)?;
    Ok(adversarial_from_probs(&p_real, &p_fake))
}

pub fn adversarial_from_probs(p_real: &Array2<f64>, p_fake: &Array2<f64>) -> (f64, f64) {
    let (real_term, _) = neg_log_likelihood_real(p_real);
    let (fake_term, _) = neg_log_likelihood_fake(p_fake);
    let (g_adv, _) = neg_log_likelihood_real(p_fake);
    (real_term + fake_term, g_adv)
}

/// `adv + lambda1 * l1 + lambda2 * classification + lambda3 * perceptual`.
pub fn total_generator_loss(c: &LossComponents, w: &LossWeights) -> Result<LossReport> {
    for (component, value) in [
        ("adversarial", c.adv),
        ("l1", c.l1),
        ("classification", c.classification),
        ("perceptual", c.perceptual),
    ] {
        if !value.is_finite() {
            return Err(Error::NonFinite { component, value });
        }
    }
    let total = c.adv + w.lambda1 * c.l1 + w.lambda2 * c.classification + w.lambda3 * c.perceptual;
    if !total.is_finite() {
        return Err(Error::NonFinite {
            component: "total",
            value: total,
        });
    }
    Ok(LossReport {
        adv: c.adv,
        l1: c.l1,
        classification: c.classification,
        perceptual: c.perceptual,
        total,
    })
}

/// Clip-free rendering of normalised Lab batches to RGB, keeping the
/// per-pixel Jacobian with respect to the chroma channels.
#[derive(Debug, Clone)]
pub struct RgbRendering {
    pub rgb: Array4<f64>,
    /// `(B, 3, 2, H*W)` flattened as `[b][rgb][ab][pixel]`.
    jacobian: Vec<f64>,
}

pub fn render_rgb(l_n: &Array4<f64>, ab: &Array4<f64>) -> Result<RgbRendering> {
    let (b, c, h, w) = l_n.dim();
    if c != 1 || ab.dim() != (b, 2, h, w) {
        return Err(Error::shape(format!(
            "lightness {:?} and chroma {:?} do not pair up",
            l_n.dim(),
            ab.dim()
        )));
    }
    let hw = h * w;
    let mut rgb = Array4::zeros((b, 3, h, w));
    let mut jacobian = vec![0.0; b * 6 * hw];
    for n in 0..b {
        for y in 0..h {
            for x in 0..w {
                let (px, jac) = normalized_lab_to_rgb_smooth(l_n[[n, 0, y, x]], ab[[n, 0, y, x]], ab[[n, 1, y, x]]);
                let pix = y * w + x;
                for i in 0..3 {
                    rgb[[n, i, y, x]] = px[i];
                    for k in 0..2 {
                        jacobian[((n * 3 + i) * 2 + k) * hw + pix] = jac[i][k + 1];
                    }
                }
            }
        }
    }
    Ok(RgbRendering { rgb, jacobian })
}

impl RgbRendering {
    /// Pulls an RGB gradient back onto the chroma channels.
    pub fn chroma_grad(&self, d_rgb: &Array4<f64>) -> Result<Array4<f64>> {
        let (b, c, h, w) = self.rgb.dim();
        if d_rgb.dim() != (b, c, h, w) {
            return Err(Error::shape("rgb gradient shape"));
        }
        let hw = h * w;
        let mut d_ab = Array4::zeros((b, 2, h, w));
        for n in 0..b {
            for y in 0..h {
                for x in 0..w {
                    let pix = y * w + x;
                    for k in 0..2 {
                        let mut acc = 0.0;
                        for i in 0..3 {
                            acc += d_rgb[[n, i, y, x]] * self.jacobian[((n * 3 + i) * 2 + k) * hw + pix];
                        }
                        d_ab[[n, k, y, x]] = acc;
                    }
                }
            }
        }
        Ok(d_ab)
    }
}
