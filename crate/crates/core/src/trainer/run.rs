use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use super::state::{StepOutcome, TrainState};
use crate::dataio::{make_batches, Dataset};
use crate::error::{Error, Result};
use crate::util::write_atomic;

/// Per-step loss log inside the output directory.
pub const LOG_FILE: &str = "train.log";
/// File naming the most recent checkpoint.
pub const CHECKPOINT_POINTER: &str = "latest";

fn checkpoint_name(step: u64) -> String {
    format!("ckpt_{step}.bin")
}

/// Trains from scratch, replacing any previous log in `out_dir`.
pub fn train(dataset: &Dataset, config: &super::TrainConfig, out_dir: &Path) -> Result<TrainState> {
    train_observed(dataset, config, out_dir, |_| {})
}

/// [`train`], calling `on_step` after every step.
pub fn train_observed(
    dataset: &Dataset,
    config: &super::TrainConfig,
    out_dir: &Path,
    on_step: impl FnMut(&StepOutcome),
) -> Result<TrainState> {
    let state = TrainState::new(config, dataset.manifest.num_classes, dataset.manifest.label_mode)?;
    fs::create_dir_all(out_dir)?;
    write_atomic(&out_dir.join(LOG_FILE), b"")?;
    run_from(state, dataset, out_dir, on_step)
}

/// Continues a run from `checkpoint`. Log lines written after that
/// checkpoint are discarded so the log matches an uninterrupted run.
pub fn resume(dataset: &Dataset, checkpoint: &Path, out_dir: &Path) -> Result<TrainState> {
    let state = TrainState::load(checkpoint)?;
    if state.num_classes != dataset.manifest.num_classes || state.label_mode != dataset.manifest.label_mode {
        return Err(Error::Checkpoint(format!(
            "checkpoint was trained with {} {} labels, dataset has {} {}",
            state.num_classes,
            state.label_mode.as_str(),
            dataset.manifest.num_classes,
            dataset.manifest.label_mode.as_str()
        )));
    }
    fs::create_dir_all(out_dir)?;
    let log_path = out_dir.join(LOG_FILE);
    let kept: String = match fs::read_to_string(&log_path) {
        Ok(text) => text
            .lines()
            .filter(|l| {
                l.split_whitespace()
                    .next()
                    .and_then(|s| s.parse::<u64>().ok())
                    .is_some_and(|s| s <= state.global_step)
            })
            .map(|l| format!("{l}\n"))
            .collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(e.into()),
    };
    write_atomic(&log_path, kept.as_bytes())?;
    run_from(state, dataset, out_dir, |_| {})
}

/// Path named by the `latest` pointer in `out_dir`.
pub fn latest_checkpoint(out_dir: &Path) -> Result<PathBuf> {
    let pointer = out_dir.join(CHECKPOINT_POINTER);
    if !pointer.is_file() {
        return Err(Error::NotFound(pointer));
    }
    let name = fs::read_to_string(&pointer)?;
    Ok(out_dir.join(name.trim()))
}

fn save_checkpoint(state: &TrainState, out_dir: &Path) -> Result<PathBuf> {
    let name = checkpoint_name(state.global_step);
    let path = out_dir.join(&name);
    state.save(&path)?;
    write_atomic(&out_dir.join(CHECKPOINT_POINTER), format!("{name}\n").as_bytes())?;
    Ok(path)
}

fn run_from(
    mut state: TrainState,
    dataset: &Dataset,
    out_dir: &Path,
    mut on_step: impl FnMut(&StepOutcome),
) -> Result<TrainState> {
    let cfg = state.config.clone();
    if dataset.image_size != cfg.network.image_size {
        return Err(Error::config(format!(
            "dataset was prepared at {0}x{0}, network expects {1}x{1}",
            dataset.image_size, cfg.network.image_size
        )));
    }
    let mut log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(out_dir.join(LOG_FILE))?;
    while state.epoch < cfg.epochs {
        let batches = make_batches(dataset, cfg.batch_size, cfg.seed, state.epoch)?.skip(state.batch_in_epoch);
        for batch in batches {
            let outcome = state.train_step(&batch?)?;
            writeln!(log, "{}", outcome.report.log_line(state.global_step))?;
            on_step(&outcome);
            if let Some(k) = cfg.checkpoint_every {
                if state.global_step.is_multiple_of(k) {
                    save_checkpoint(&state, out_dir)?;
                }
            }
        }
        state.epoch += 1;
        state.batch_in_epoch = 0;
        if cfg.checkpoint_every.is_none() || state.epoch == cfg.epochs {
            save_checkpoint(&state, out_dir)?;
        }
    }
    log.flush()?;
    Ok(state)
}
