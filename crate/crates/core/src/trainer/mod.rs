//! Alternating adversarial training, checkpointing, inference and the
//! loss-ablation experiment.

mod ablation;
mod infer;
mod optim;
mod run;
mod state;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use ablation::{run_ablation, AblationResult, ABLATION_MODES};
pub use infer::{colorize, evaluate_manifest, Colorizer};
pub use optim::{Adagrad, ADAGRAD_EPS};
pub use run::{latest_checkpoint, resume, train, train_observed, CHECKPOINT_POINTER, LOG_FILE};
pub use state::{generator_gradients, GeneratorObjective, StepOutcome, TrainState};

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::networks::NetworkConfig;

/// Which generator loss components are active. The adversarial term is
/// always on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    #[default]
    Full,
    L1Only,
    PerOnly,
    L1PlusPer,
}

impl LossMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LossMode::Full => "full",
            LossMode::L1Only => "l1_only",
            LossMode::PerOnly => "per_only",
            LossMode::L1PlusPer => "l1_plus_per",
        }
    }

    /// Column heading in comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            LossMode::Full => "full",
            LossMode::L1Only => "L1",
            LossMode::PerOnly => "per",
            LossMode::L1PlusPer => "L1+per",
        }
    }

    pub fn uses_l1(self) -> bool {
        matches!(self, LossMode::Full | LossMode::L1Only | LossMode::L1PlusPer)
    }

    pub fn uses_perceptual(self) -> bool {
        matches!(self, LossMode::Full | LossMode::PerOnly | LossMode::L1PlusPer)
    }

    pub fn uses_classification(self) -> bool {
        self == LossMode::Full
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "full" => LossMode::Full,
            "l1_only" => LossMode::L1Only,
            "per_only" => LossMode::PerOnly,
            "l1_plus_per" => LossMode::L1PlusPer,
            other => return Err(Error::config(format!("unknown loss mode `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weights: LossWeights,
    pub loss_mode: LossMode,
    pub seed: u64,
    /// Steps between checkpoints; unset means once per epoch.
    pub checkpoint_every: Option<u64>,
    pub network: NetworkConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 16,
            epochs: 20,
            weights: LossWeights::default(),
            loss_mode: LossMode::Full,
            seed: 0,
            checkpoint_every: None,
            network: NetworkConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::config("checkpoint_every must be at least 1"));
        }
        self.weights.validate()?;
        self.network.validate()
    }
}
