use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::model::{TextModel, TextModelConfig};
use super::registry::ModelRegistry;
use crate::ingest::{DatasetManifest, Split, TextRecord};
use crate::nn::{softmax_cross_entropy, Adam, Module};
use crate::training::{is_improvement, EpochMetrics, TextTrainHyper, TrainError, TrainReport};

const GRAD_CLIP_NORM: f64 = 1.0;

fn encode_split(model: &TextModel, records: &[&TextRecord]) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut ids = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for r in records {
        match model.encode(&r.content) {
            Ok(x) => {
                ids.push(x);
                labels.push(r.label.index());
            }
            Err(_) => log::warn!("skipping {}: empty after normalization", r.text_id),
        }
    }
    (ids, labels)
}

fn accuracy(model: &TextModel, ids: &[Vec<usize>], labels: &[usize]) -> f64 {
    if ids.is_empty() {
        return 0.0;
    }
    let correct: usize = ids
        .par_iter()
        .zip(labels)
        .map(|(x, &y)| usize::from(model.predict_ids(x).argmax().index() == y))
        .sum();
    correct as f64 / ids.len() as f64
}

fn seed_for(base: u64, epoch: usize, step: usize, item: usize) -> u64 {
    base ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (step as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ (item as u64).wrapping_mul(0x1656_67B1_9E37_79F9)
}

/// Resolves the pretrained encoder through `registry`, attaches a fresh
/// head and fine-tunes it. Split checks run before any registry access.
pub fn fine_tune(
    cfg: &TextModelConfig,
    registry: &ModelRegistry,
    manifest: &DatasetManifest,
    hyper: &TextTrainHyper,
) -> Result<(TextModel, TrainReport), TrainError> {
    check_splits(manifest)?;
    let dir = registry.resolve(&cfg.pretrained_id)?;
    let mut model = TextModel::from_pretrained_dir(cfg.clone(), &dir, hyper.seed)?;
    model.network_mut().reset_head(&mut ChaCha8Rng::seed_from_u64(hyper.seed));
    let report = fine_tune_model(&mut model, manifest, hyper)?;
    Ok((model, report))
}

fn check_splits(manifest: &DatasetManifest) -> Result<(), TrainError> {
    if manifest.text(Split::Train).next().is_none() {
        return Err(TrainError::EmptySplit { split: "train", modality: "text" });
    }
    if manifest.text(Split::Val).next().is_none() {
        return Err(TrainError::EmptySplit { split: "val", modality: "text" });
    }
    Ok(())
}

/// End-to-end training with cross-entropy, AdamW, linear warmup/decay and
/// gradient clipping; keeps the best-validation-accuracy epoch (earliest on
/// ties). Results depend only on the inputs and `hyper.seed`.
pub fn fine_tune_model(
    model: &mut TextModel,
    manifest: &DatasetManifest,
    hyper: &TextTrainHyper,
) -> Result<TrainReport, TrainError> {
    let issues = hyper.issues();
    if !issues.is_empty() {
        let msg: Vec<String> = issues.into_iter().map(|(k, v)| format!("{k}: {v}")).collect();
        return Err(TrainError::InvalidHyper(msg.join("; ")));
    }
    check_splits(manifest)?;
    let started = Instant::now();
    let train_recs: Vec<&TextRecord> = manifest.text(Split::Train).collect();
    let val_recs: Vec<&TextRecord> = manifest.text(Split::Val).collect();
    let (x_train, y_train) = encode_split(model, &train_recs);
    let (x_val, y_val) = encode_split(model, &val_recs);
    if x_train.is_empty() {
        return Err(TrainError::EmptySplit { split: "train", modality: "text" });
    }

    let steps_per_epoch = x_train.len().div_ceil(hyper.batch_size);
    let total_steps = steps_per_epoch * hyper.epochs;
    let warmup = (hyper.warmup_fraction * total_steps as f64).floor() as usize;
    let lr_at = |step: usize| {
        if step < warmup {
            hyper.learning_rate * (step + 1) as f64 / warmup as f64
        } else {
            hyper.learning_rate * (total_steps - step) as f64 / (total_steps - warmup) as f64
        }
    };
    let mut opt = Adam::new(hyper.learning_rate);
    opt.weight_decay = hyper.weight_decay;
    opt.clip_norm = Some(GRAD_CLIP_NORM);

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..x_train.len()).collect();
    let mut epochs = Vec::new();
    let mut best: Option<f64> = None;
    let mut best_epoch = 0;
    let mut best_params = model.net.named_tensors();
    let mut global_step = 0;
    for epoch in 1..=hyper.epochs {
        let t0 = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (step, batch) in order.chunks(hyper.batch_size).enumerate() {
            let net = &model.net;
            let outputs: Vec<_> = batch
                .par_iter()
                .enumerate()
                .map(|(i, &idx)| {
                    let mut item_rng = ChaCha8Rng::seed_from_u64(seed_for(hyper.seed, epoch, step, i));
                    net.forward(&x_train[idx], Some(&mut item_rng))
                })
                .collect();
            model.net.zero_grad();
            for ((logits, cache), &idx) in outputs.iter().zip(batch) {
                let (loss, mut dl) = softmax_cross_entropy(logits.view(), &[y_train[idx]]);
                if !loss.is_finite() {
                    return Err(TrainError::NonFiniteLoss { epoch, step, value: loss });
                }
                dl /= batch.len() as f64;
                model.net.backward(cache, dl.view());
                loss_sum += loss;
            }
            opt.lr = lr_at(global_step);
            opt.step(&mut model.net);
            global_step += 1;
        }
        let m = EpochMetrics {
            epoch,
            train_loss: loss_sum / x_train.len() as f64,
            train_accuracy: accuracy(model, &x_train, &y_train),
            val_accuracy: accuracy(model, &x_val, &y_val),
            seconds: t0.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.4} train_acc {:.3} val_acc {:.3}",
            m.train_loss,
            m.train_accuracy,
            m.val_accuracy
        );
        if is_improvement(best, m.val_accuracy) {
            best = Some(m.val_accuracy);
            best_epoch = epoch;
            best_params = model.net.named_tensors();
        }
        epochs.push(m);
    }
    model
        .net
        .load_tensors(&best_params.into_iter().collect())
        .map_err(|e| TrainError::Model(e.to_string()))?;
    Ok(TrainReport {
        epochs,
        best_epoch,
        best_val_accuracy: best.unwrap_or(0.0),
        stopped_early: false,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        artifact_path: None,
        model_config: serde_json::json!({
            "text_model": model.config(),
            "encoder": model.encoder_config(),
        }),
        hyper: serde_json::to_value(hyper).expect("serializable"),
    })
}
