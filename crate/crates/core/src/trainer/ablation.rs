use std::path::{Path, PathBuf};

use super::infer::{evaluate_manifest, Colorizer};
use super::run::train_observed;
use super::{LossMode, TrainConfig};
use crate::dataio::{filter_manifest, Dataset, DatasetManifest, FilterPolicy};
use crate::error::{Error, Result};
use crate::metrics::ComparisonTable;
use crate::util::write_atomic;

/// Configurations compared by the ablation, in column order.
pub const ABLATION_MODES: [LossMode; 3] = [LossMode::L1Only, LossMode::PerOnly, LossMode::L1PlusPer];

#[derive(Debug, Clone)]
pub struct AblationResult {
    pub table: ComparisonTable,
    /// Final checkpoint of each run, in column order.
    pub checkpoints: Vec<PathBuf>,
    /// Mean chroma L1 of the generator's training outputs over the first and
    /// the last epoch of each run, measured in every loss mode.
    pub l1_first_last: Vec<(f64, f64)>,
}

/// Trains one model per loss mode on the training split of `manifest` and
/// scores each on the held-out split. Runs share data, seed and every other
/// setting. Writes `ablation.txt` and one subdirectory per mode to `out_dir`.
pub fn run_ablation(
    manifest: &DatasetManifest,
    policy: &FilterPolicy,
    base: &TrainConfig,
    out_dir: &Path,
) -> Result<AblationResult> {
    let (train_part, held_out) = manifest.split();
    let (held_out, _) = filter_manifest(&held_out, policy)?;
    if held_out.is_empty() {
        return Err(Error::EmptyDataset(
            "no held-out images survive the colour filter".into(),
        ));
    }
    let dataset = Dataset::prepare(&train_part, policy, base.network.image_size)?;

    let mut columns = Vec::new();
    let mut reports = Vec::new();
    let mut checkpoints = Vec::new();
    let mut l1_first_last = Vec::new();
    for mode in ABLATION_MODES {
        let config = TrainConfig {
            loss_mode: mode,
            ..base.clone()
        };
        let dir = out_dir.join(mode.as_str());
        let mut l1 = Vec::new();
        let state = train_observed(&dataset, &config, &dir, |o| l1.push(o.chroma_l1))?;
        let ckpt = dir.join(format!("ckpt_{}.bin", state.global_step));
        let mut colorizer = Colorizer::from_generator(state.generator);
        reports.push(evaluate_manifest(&mut colorizer, &held_out)?);
        columns.push(mode.label().to_owned());
        checkpoints.push(ckpt);
        l1_first_last.push(epoch_means(&l1, dataset.steps_per_epoch(config.batch_size)));
    }
    let table = ComparisonTable::new(columns, reports)?;
    write_atomic(&out_dir.join("ablation.txt"), table.render().as_bytes())?;
    Ok(AblationResult {
        table,
        checkpoints,
        l1_first_last,
    })
}

fn epoch_means(per_step: &[f64], steps_per_epoch: usize) -> (f64, f64) {
    if steps_per_epoch == 0 || per_step.len() < steps_per_epoch {
        return (f64::NAN, f64::NAN);
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    (
        mean(&per_step[..steps_per_epoch]),
        mean(&per_step[per_step.len() - steps_per_epoch..]),
    )
}
