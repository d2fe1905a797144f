use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Instant;

use ndarray::{Array3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::model::{AudioModel, AudioModelError};
use crate::features::{load_wav, FeatureCache, FeatureError, Featurizer, MfccMatrix};
use crate::ingest::{AudioClipRecord, DatasetManifest, Split};
use crate::nn::{softmax_cross_entropy, Adam, Module};
use crate::training::{is_improvement, EpochMetrics, TrainError, TrainHyper, TrainReport};
use crate::EmotionLabel;

const EVAL_BATCH: usize = 64;

/// Supplies MFCC matrices for manifest records. Implementations must be
/// safe to call from several threads.
pub trait FeatureSource: Sync {
    fn config_hash(&self) -> &str;
    fn features(&self, record: &AudioClipRecord) -> Result<MfccMatrix, FeatureError>;
}

/// Decodes each record's WAV file and extracts MFCCs, optionally through an
/// on-disk cache.
#[derive(Debug)]
pub struct ExtractingSource {
    pub featurizer: Featurizer,
    pub cache: Option<FeatureCache>,
    /// Prefix for relative `source_path`s.
    pub root: Option<PathBuf>,
}

impl ExtractingSource {
    pub fn new(featurizer: Featurizer) -> Self {
        Self { featurizer, cache: None, root: None }
    }
}

impl FeatureSource for ExtractingSource {
    fn config_hash(&self) -> &str {
        self.featurizer.config_hash()
    }

    fn features(&self, record: &AudioClipRecord) -> Result<MfccMatrix, FeatureError> {
        let hash = self.featurizer.config_hash();
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&record.clip_id, hash)) {
            return Ok(hit);
        }
        let path = match &self.root {
            Some(root) => root.join(&record.source_path),
            None => record.source_path.clone(),
        };
        let clip = load_wav(&path, self.featurizer.config().target_sample_rate)?;
        let m = self.featurizer.extract(clip)?;
        if let Some(cache) = &self.cache {
            cache.put(&record.clip_id, &m)?;
        }
        Ok(m)
    }
}

/// Features held in memory, keyed by clip id.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedSource {
    pub config_hash: String,
    pub features: HashMap<String, MfccMatrix>,
}

impl FeatureSource for PrecomputedSource {
    fn config_hash(&self) -> &str {
        &self.config_hash
    }

    fn features(&self, record: &AudioClipRecord) -> Result<MfccMatrix, FeatureError> {
        self.features
            .get(&record.clip_id)
            .cloned()
            .ok_or_else(|| FeatureError::Io(std::io::Error::new(std::io::ErrorKind::NotFound, record.clip_id.clone())))
    }
}

fn model_err(e: AudioModelError) -> TrainError {
    TrainError::AudioModel(e)
}

fn load_split(
    source: &dyn FeatureSource,
    records: &[&AudioClipRecord],
) -> Result<(Vec<MfccMatrix>, Vec<usize>), TrainError> {
    let feats = records
        .par_iter()
        .map(|r| {
            source.features(r).map_err(|e| TrainError::Features { clip_id: r.clip_id.clone(), source: e })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((feats, records.iter().map(|r| r.label.index()).collect()))
}

fn gather(x: &Array3<f64>, idx: &[usize]) -> Array3<f64> {
    x.select(Axis(0), idx)
}

fn row_argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Eval-mode accuracy on a normalized input tensor.
fn accuracy(model: &AudioModel, x: &Array3<f64>, y: &[usize]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let mut correct = 0;
    for start in (0..y.len()).step_by(EVAL_BATCH) {
        let end = (start + EVAL_BATCH).min(y.len());
        let idx: Vec<usize> = (start..end).collect();
        let preds = model.predict_tensor(&gather(x, &idx));
        correct += preds.iter().zip(&y[start..end]).filter(|(p, &t)| p.argmax().index() == t).count();
    }
    correct as f64 / y.len() as f64
}

/// Trains on the manifest's train split, selecting the epoch with the best
/// validation accuracy (earliest on ties). The model ends holding the
/// selected parameters.
pub fn train(
    model: &mut AudioModel,
    manifest: &DatasetManifest,
    source: &dyn FeatureSource,
    hyper: &TrainHyper,
) -> Result<TrainReport, TrainError> {
    let issues = hyper.issues();
    if !issues.is_empty() {
        let msg: Vec<String> = issues.into_iter().map(|(k, v)| format!("{k}: {v}")).collect();
        return Err(TrainError::InvalidHyper(msg.join("; ")));
    }
    let train_recs: Vec<&AudioClipRecord> = manifest.audio(Split::Train).collect();
    let val_recs: Vec<&AudioClipRecord> = manifest.audio(Split::Val).collect();
    if train_recs.is_empty() {
        return Err(TrainError::EmptySplit { split: "train", modality: "audio" });
    }
    if val_recs.is_empty() {
        return Err(TrainError::EmptySplit { split: "val", modality: "audio" });
    }
    let started = Instant::now();
    match model.feature_hash() {
        Some(h) if h != source.config_hash() => {
            return Err(model_err(AudioModelError::ArtifactMismatch(format!(
                "model expects FeatureConfig {h}, source produces {}",
                source.config_hash()
            ))))
        }
        _ => model.set_feature_hash(source.config_hash()),
    }
    let (train_feats, y_train) = load_split(source, &train_recs)?;
    let (val_feats, y_val) = load_split(source, &val_recs)?;
    let mut x_train = model.raw_tensor(&train_feats.iter().collect::<Vec<_>>()).map_err(model_err)?;
    model.fit_normalizer(&x_train);
    model.normalize(&mut x_train);
    let x_val = model.input_tensor(&val_feats.iter().collect::<Vec<_>>()).map_err(model_err)?;
    drop((train_feats, val_feats));

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut opt = Adam::new(hyper.learning_rate);
    let mut order: Vec<usize> = (0..y_train.len()).collect();
    let mut epochs = Vec::new();
    let mut best: Option<f64> = None;
    let mut best_epoch = 0;
    let mut best_params = model.named_tensors();
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=hyper.epochs {
        let t0 = Instant::now();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (step, batch) in order.chunks(hyper.batch_size).enumerate() {
            let xb = gather(&x_train, batch);
            let yb: Vec<usize> = batch.iter().map(|&i| y_train[i]).collect();
            model.zero_grad();
            let (logits, cache) = model.forward_train(&xb, &mut rng);
            let (loss, dlogits) = softmax_cross_entropy(logits.view(), &yb);
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, step, value: loss });
            }
            model.backward(&cache, &dlogits);
            opt.step(model);
            model.update_running_stats(&cache);
            loss_sum += loss * batch.len() as f64;
            correct += logits
                .rows()
                .into_iter()
                .zip(&yb)
                .filter(|(row, &t)| row_argmax(row.view()) == t)
                .count();
        }
        let n = y_train.len() as f64;
        let val_accuracy = accuracy(model, &x_val, &y_val);
        let m = EpochMetrics {
            epoch,
            train_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            val_accuracy,
            seconds: t0.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.4} train_acc {:.3} val_acc {:.3}",
            m.train_loss,
            m.train_accuracy,
            m.val_accuracy
        );
        epochs.push(m);
        if is_improvement(best, val_accuracy) {
            best = Some(val_accuracy);
            best_epoch = epoch;
            best_params = model.named_tensors();
            since_best = 0;
        } else {
            since_best += 1;
            if hyper.early_stop_patience.is_some_and(|p| since_best >= p) {
                stopped_early = true;
                break;
            }
        }
    }
    model
        .load_tensors(&best_params.into_iter().collect())
        .map_err(|e| TrainError::Model(e.to_string()))?;
    Ok(TrainReport {
        epochs,
        best_epoch,
        best_val_accuracy: best.unwrap_or(0.0),
        stopped_early,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        artifact_path: None,
        model_config: serde_json::to_value(model.config()).expect("serializable"),
        hyper: serde_json::to_value(hyper).expect("serializable"),
    })
}

/// Full-batch optimization on a fixed set of clips, fitting the input
/// normalizer on that set first. Returns the training-mode loss of every step.
pub fn train_steps(
    model: &mut AudioModel,
    features: &[&MfccMatrix],
    labels: &[EmotionLabel],
    steps: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<Vec<f64>, TrainError> {
    let mut x = model.raw_tensor(features).map_err(model_err)?;
    model.fit_normalizer(&x);
    model.normalize(&mut x);
    let y: Vec<usize> = labels.iter().map(|l| l.index()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = Adam::new(learning_rate);
    let mut losses = Vec::with_capacity(steps);
    for step in 0..steps {
        model.zero_grad();
        let (logits, cache) = model.forward_train(&x, &mut rng);
        let (loss, dlogits) = softmax_cross_entropy(logits.view(), &y);
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch: 0, step, value: loss });
        }
        model.backward(&cache, &dlogits);
        opt.step(model);
        model.update_running_stats(&cache);
        losses.push(loss);
    }
    Ok(losses)
}

/// Inference-mode mean cross-entropy.
pub fn eval_loss(model: &AudioModel, features: &[&MfccMatrix], labels: &[EmotionLabel]) -> Result<f64, AudioModelError> {
    let x = model.input_tensor(features)?;
    let y: Vec<usize> = labels.iter().map(|l| l.index()).collect();
    Ok(softmax_cross_entropy(model.logits(&x).view(), &y).0)
}
