use std::path::Path;

use ndarray::{Array2, Array4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::optim::Adagrad;
use super::{LossMode, TrainConfig};
use crate::dataio::{LabelMode, SampleBatch};
use crate::error::{Error, Result};
use crate::losses::{
    classification_loss_and_grad, l1_chroma_loss, l1_chroma_loss_and_grad, neg_log_likelihood_fake,
    neg_log_likelihood_real, perceptual_loss_and_grad, render_rgb, total_generator_loss, LossComponents, LossReport,
    LossWeights,
};
use crate::networks::layers::{concat_channels, split_channels};
use crate::networks::{
    init_networks, Archive, DiscriminatorNet, FeatureExtractor, GeneratorNet, GeneratorOutput, Mode, Parameterized,
};

const FORMAT_TAG: &str = "colorgan-checkpoint";

/// Coefficients applied to each generator loss component when forming the
/// objective that is differentiated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorObjective {
    pub adv: f64,
    pub l1: f64,
    pub classification: f64,
    pub perceptual: f64,
}

impl GeneratorObjective {
    pub fn new(weights: &LossWeights, mode: LossMode) -> Self {
        let on = |used: bool, w: f64| if used { w } else { 0.0 };
        Self {
            adv: 1.0,
            l1: on(mode.uses_l1(), weights.lambda1),
            classification: on(mode.uses_classification(), weights.lambda2),
            perceptual: on(mode.uses_perceptual(), weights.lambda3),
        }
    }

    pub fn value(&self, c: &LossComponents) -> f64 {
        self.adv * c.adv + self.l1 * c.l1 + self.classification * c.classification + self.perceptual * c.perceptual
    }
}

/// Runs the generator in training mode on `batch`, evaluates every loss
/// component with a nonzero coefficient and backpropagates the weighted
/// objective into the generator's parameter gradients (which are reset
/// first). Components with a zero coefficient are reported as 0.
///
/// The discriminator is run in training mode and accumulates parameter
/// gradients of its own; callers reset them before a discriminator update.
#[allow(clippy::too_many_arguments)]
pub fn generator_gradients(
    generator: &mut GeneratorNet,
    discriminator: &mut DiscriminatorNet,
    extractor: &mut FeatureExtractor,
    batch: &SampleBatch,
    label_mode: LabelMode,
    objective: &GeneratorObjective,
    rng: &mut ChaCha8Rng,
) -> Result<(LossComponents, f64)> {
    generator.zero_grad();
    let out = generator.forward(&batch.l_n, Mode::Train, rng)?;
    backprop_objective(generator, discriminator, extractor, batch, out, label_mode, objective)
}

fn backprop_objective(
    generator: &mut GeneratorNet,
    discriminator: &mut DiscriminatorNet,
    extractor: &mut FeatureExtractor,
    batch: &SampleBatch,
    out: GeneratorOutput,
    label_mode: LabelMode,
    objective: &GeneratorObjective,
) -> Result<(LossComponents, f64)> {
    let mut c = LossComponents::default();
    let mut d_ab = Array4::zeros(out.ab.dim());
    let mut d_logits = Array2::zeros(out.logits.dim());

    if objective.adv != 0.0 {
        let fake = concat_channels(&batch.l_n, &out.ab)?;
        let probs = discriminator.forward(&fake, Mode::Train)?;
        let (adv, d_prob) = neg_log_likelihood_real(&probs);
        c.adv = adv;
        let d_img = discriminator.backward(&(d_prob * objective.adv))?;
        d_ab += &split_channels(&d_img, 1).1;
    }
    if objective.l1 != 0.0 {
        let (l1, g) = l1_chroma_loss_and_grad(&out.ab, &batch.ab_target)?;
        c.l1 = l1;
        d_ab.scaled_add(objective.l1, &g);
    }
    if objective.classification != 0.0 {
        let (cls, g) = classification_loss_and_grad(&out.logits, &batch.labels, label_mode)?;
        c.classification = cls;
        d_logits.scaled_add(objective.classification, &g);
    }
    if objective.perceptual != 0.0 {
        let pred = render_rgb(&batch.l_n, &out.ab)?;
        let target = render_rgb(&batch.l_n, &batch.ab_target)?;
        let (per, d_rgb) = perceptual_loss_and_grad(extractor, &pred.rgb, &target.rgb)?;
        c.perceptual = per;
        d_ab.scaled_add(objective.perceptual, &pred.chroma_grad(&d_rgb)?);
    }
    generator.backward(&d_ab, &d_logits)?;
    Ok((c, objective.value(&c)))
}

/// Losses produced by one training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub report: LossReport,
    pub d_loss: f64,
    /// Unweighted chroma L1 of this step's generator output, measured even
    /// when the loss mode leaves it out of `report`.
    pub chroma_l1: f64,
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub config: TrainConfig,
    pub generator: GeneratorNet,
    pub discriminator: DiscriminatorNet,
    pub extractor: FeatureExtractor,
    pub opt_generator: Adagrad,
    pub opt_discriminator: Adagrad,
    pub num_classes: usize,
    pub label_mode: LabelMode,
    /// Epoch currently in progress (0-based).
    pub epoch: usize,
    /// Batches of `epoch` already consumed.
    pub batch_in_epoch: usize,
    pub global_step: u64,
    rng: ChaCha8Rng,
}

fn dropout_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    rng
}

impl TrainState {
    pub fn new(config: &TrainConfig, num_classes: usize, label_mode: LabelMode) -> Result<Self> {
        config.validate()?;
        if num_classes == 0 {
            return Err(Error::config("num_classes must be positive"));
        }
        let (generator, discriminator) = init_networks(&config.network, num_classes, config.seed)?;
        let extractor = FeatureExtractor::from_config(&config.network.extractor)?;
        Ok(Self {
            opt_generator: Adagrad::new(config.learning_rate, &generator),
            opt_discriminator: Adagrad::new(config.learning_rate, &discriminator),
            config: config.clone(),
            generator,
            discriminator,
            extractor,
            num_classes,
            label_mode,
            epoch: 0,
            batch_in_epoch: 0,
            global_step: 0,
            rng: dropout_rng(config.seed),
        })
    }

    /// One discriminator update followed by one generator update.
    pub fn train_step(&mut self, batch: &SampleBatch) -> Result<StepOutcome> {
        if batch.labels.dim().1 != self.num_classes {
            return Err(Error::shape(format!(
                "batch carries {} label columns, model has {} classes",
                batch.labels.dim().1,
                self.num_classes
            )));
        }
        self.generator.zero_grad();
        let out = self.generator.forward(&batch.l_n, Mode::Train, &mut self.rng)?;
        let real = concat_channels(&batch.l_n, &batch.ab_target)?;
        let fake = concat_channels(&batch.l_n, &out.ab)?;
        let chroma_l1 = l1_chroma_loss(&out.ab, &batch.ab_target)?;

        self.discriminator.zero_grad();
        let p_real = self.discriminator.forward(&real, Mode::Train)?;
        let (real_term, g_real) = neg_log_likelihood_real(&p_real);
        self.discriminator.backward(&g_real)?;
        let p_fake = self.discriminator.forward(&fake, Mode::Train)?;
        let (fake_term, g_fake) = neg_log_likelihood_fake(&p_fake);
        self.discriminator.backward(&g_fake)?;
        let d_loss = real_term + fake_term;
        if !d_loss.is_finite() {
            return Err(Error::NonFinite {
                component: "discriminator",
                value: d_loss,
            });
        }
        self.opt_discriminator.step(&mut self.discriminator);

        // The generator pass above is reused; the updated discriminator
        // scores the same fake batch for the adversarial term.
        let objective = GeneratorObjective::new(&self.config.weights, self.config.loss_mode);
        let (components, _) = backprop_objective(
            &mut self.generator,
            &mut self.discriminator,
            &mut self.extractor,
            batch,
            out,
            self.label_mode,
            &objective,
        )?;
        let report = total_generator_loss(&components, &self.config.weights)?;
        self.opt_generator.step(&mut self.generator);
        self.discriminator.zero_grad();

        self.global_step += 1;
        self.batch_in_epoch += 1;
        Ok(StepOutcome {
            report,
            d_loss,
            chroma_l1,
        })
    }

    pub fn to_archive(&self) -> Archive {
        let mut a = Archive::new(json!({
            "format": FORMAT_TAG,
            "config": self.config,
            "num_classes": self.num_classes,
            "label_mode": self.label_mode,
            "epoch": self.epoch,
            "batch_in_epoch": self.batch_in_epoch,
            "global_step": self.global_step,
            "rng_word_pos": self.rng.get_word_pos().to_string(),
        }));
        a.store_module("generator", &self.generator);
        a.store_module("discriminator", &self.discriminator);
        self.opt_generator.store(&mut a, "adagrad.generator", &self.generator);
        self.opt_discriminator
            .store(&mut a, "adagrad.discriminator", &self.discriminator);
        a
    }

    pub fn from_archive(archive: &Archive) -> Result<Self> {
        let meta = CheckpointMeta::parse(archive)?;
        let mut state = Self::new(&meta.config, meta.num_classes, meta.label_mode)?;
        archive.load_module("generator", &mut state.generator)?;
        archive.load_module("discriminator", &mut state.discriminator)?;
        state
            .opt_generator
            .load(archive, "adagrad.generator", &state.generator)?;
        state
            .opt_discriminator
            .load(archive, "adagrad.discriminator", &state.discriminator)?;
        let field = |k: &str| {
            archive.metadata[k]
                .as_u64()
                .ok_or_else(|| Error::Checkpoint(format!("metadata field `{k}` missing")))
        };
        state.epoch = field("epoch")? as usize;
        state.batch_in_epoch = field("batch_in_epoch")? as usize;
        state.global_step = field("global_step")?;
        let pos: u128 = archive.metadata["rng_word_pos"]
            .as_str()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Checkpoint("metadata field `rng_word_pos` missing".into()))?;
        state.rng.set_word_pos(pos);
        Ok(state)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&Archive::read(path)?)
    }
}

/// Configuration and label metadata stored in a checkpoint.
#[derive(Debug, Clone)]
pub(crate) struct CheckpointMeta {
    pub config: TrainConfig,
    pub num_classes: usize,
    pub label_mode: LabelMode,
}

impl CheckpointMeta {
    pub fn parse(archive: &Archive) -> Result<Self> {
        let m = &archive.metadata;
        if m["format"] != FORMAT_TAG {
            return Err(Error::Checkpoint("archive is not a training checkpoint".into()));
        }
        let bad = |k: &str, e: &dyn std::fmt::Display| Error::Checkpoint(format!("metadata field `{k}`: {e}"));
        let config: TrainConfig = serde_json::from_value(m["config"].clone()).map_err(|e| bad("config", &e))?;
        let label_mode: LabelMode =
            serde_json::from_value(m["label_mode"].clone()).map_err(|e| bad("label_mode", &e))?;
        let num_classes = m["num_classes"]
            .as_u64()
            .ok_or_else(|| Error::Checkpoint("metadata field `num_classes` missing".into()))?
            as usize;
        Ok(Self {
            config,
            num_classes,
            label_mode,
        })
    }
}
