//! Types shared by the acoustic and textual training loops.

use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub early_stop_patience: Option<usize>,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 42,
            early_stop_patience: None,
        }
    }
}

impl TrainHyper {
    pub fn issues(&self) -> Vec<(&'static str, String)> {
        hyper_issues(self.epochs, self.batch_size, self.learning_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextTrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub weight_decay: f64,
    /// Fraction of optimizer steps spent on linear warmup.
    pub warmup_fraction: f64,
}

impl Default for TextTrainHyper {
    fn default() -> Self {
        Self {
            epochs: 3,
            batch_size: 16,
            learning_rate: 2e-5,
            seed: 42,
            weight_decay: 0.01,
            warmup_fraction: 0.1,
        }
    }
}

impl TextTrainHyper {
    pub fn issues(&self) -> Vec<(&'static str, String)> {
        let mut out = hyper_issues(self.epochs, self.batch_size, self.learning_rate);
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            out.push(("warmup_fraction", "must be in [0, 1)".into()));
        }
        if !(self.weight_decay >= 0.0) {
            out.push(("weight_decay", "must be non-negative".into()));
        }
        out
    }
}

fn hyper_issues(epochs: usize, batch_size: usize, lr: f64) -> Vec<(&'static str, String)> {
    let mut out = Vec::new();
    if epochs == 0 {
        out.push(("epochs", "must be at least 1".into()));
    }
    if batch_size == 0 {
        out.push(("batch_size", "must be at least 1".into()));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        out.push(("learning_rate", "must be positive".into()));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// One entry per completed epoch.
    pub epochs: Vec<EpochMetrics>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub stopped_early: bool,
    pub wall_clock_seconds: f64,
    pub artifact_path: Option<PathBuf>,
    pub model_config: serde_json::Value,
    pub hyper: serde_json::Value,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("the {split} split has no {modality} records")]
    EmptySplit { split: &'static str, modality: &'static str },
    #[error("non-finite loss {value} at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize, value: f64 },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("feature extraction failed for {clip_id}: {source}")]
    Features { clip_id: String, source: FeatureError },
    #[error("{0}")]
    Model(String),
    #[error(transparent)]
    AudioModel(#[from] crate::audio_model::AudioModelError),
    #[error(transparent)]
    TextModel(#[from] crate::text::TextModelError),
    #[error("another training run holds the lock on {0}")]
    Locked(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Selects the best epoch: highest validation accuracy, earliest on ties.
pub(crate) fn is_improvement(best: Option<f64>, candidate: f64) -> bool {
    best.is_none_or(|b| candidate > b)
}

/// Exclusive advisory lock on `<dir>/.train.lock`, released on drop.
#[derive(Debug)]
pub struct ArtifactLock {
    _file: File,
    path: PathBuf,
}

impl ArtifactLock {
    pub fn acquire(dir: &Path) -> Result<Self, TrainError> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(".train.lock");
        let file = OpenOptions::new().create(true).truncate(false).write(true).open(&path)?;
        match file.try_lock() {
            Ok(()) => Ok(Self { _file: file, path }),
            Err(std::fs::TryLockError::WouldBlock) => Err(TrainError::Locked(dir.to_path_buf())),
            Err(std::fs::TryLockError::Error(e)) => Err(e.into()),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
