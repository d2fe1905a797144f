use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EvalError, EvalResult};
use crate::features::{augment, load_wav, AudioClip, AugmentKind, AugmentSpec, Featurizer, MfccMatrix};
use crate::fusion::decide;
use crate::ingest::AudioClipRecord;
use crate::taxonomy::{EmotionDistribution, EmotionLabel};

/// SNR grid used when none is given.
pub const DEFAULT_SNR_GRID_DB: [f64; 4] = [30.0, 20.0, 10.0, 0.0];

pub type FeaturePredictor<'a> = dyn Fn(&MfccMatrix) -> Result<EmotionDistribution, EvalError> + Sync + 'a;

#[derive(Debug, Clone, PartialEq)]
pub struct LabelledClip {
    pub id: String,
    pub clip: AudioClip,
    pub label: EmotionLabel,
}

/// Decodes the records at the featurizer's sample rate.
pub fn load_clips(records: &[&AudioClipRecord], featurizer: &Featurizer) -> Result<Vec<LabelledClip>, EvalError> {
    let rate = featurizer.config().target_sample_rate;
    records
        .par_iter()
        .map(|r| {
            let clip = load_wav(&r.source_path, rate).map_err(|e| EvalError::Feature { id: r.clip_id.clone(), source: e })?;
            Ok(LabelledClip { id: r.clip_id.clone(), clip, label: r.label })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessPoint {
    /// `+inf` marks the clean condition; serialized as the string "inf".
    #[serde(with = "snr_repr")]
    pub snr_db: f64,
    pub accuracy: f64,
    pub n_evaluated: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCurve {
    pub base_eval_id: String,
    /// Strictly decreasing SNR; the first point is the clean condition.
    pub points: Vec<RobustnessPoint>,
    /// Zero-power clips, excluded from every point.
    pub skipped_silent: u64,
    pub seed: u64,
}

mod snr_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(serde::Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad snr {t:?}"))),
        }
    }
}

/// Noise seed for one (sweep seed, SNR, clip) triple; stable across
/// platforms and toolchains.
pub fn noise_seed(seed: u64, snr_db: f64, clip_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(snr_db.to_bits().to_le_bytes());
    h.update(clip_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Accuracy on clean clips and on each SNR in `snr_list_db` after seeded
/// additive noise and fresh feature extraction.
pub fn noise_sweep(
    featurizer: &Featurizer,
    predict: &FeaturePredictor<'_>,
    clips: &[LabelledClip],
    snr_list_db: &[f64],
    seed: u64,
    base_eval_id: &str,
) -> Result<RobustnessCurve, EvalError> {
    if let Some(bad) = snr_list_db.iter().find(|s| !s.is_finite()) {
        return Err(EvalError::InvalidArgument(format!("SNR values must be finite, got {bad}")));
    }
    let mut grid: Vec<f64> = snr_list_db.to_vec();
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup();

    let prepared: Vec<(&LabelledClip, AudioClip)> =
        clips.iter().map(|c| (c, featurizer.prepare(c.clip.clone()))).filter(|(_, p)| p.power() > 0.0).collect();
    let skipped_silent = (clips.len() - prepared.len()) as u64;
    if prepared.is_empty() {
        return Err(EvalError::EmptySlice(base_eval_id.to_string()));
    }

    let score = |snr: f64| -> Result<RobustnessPoint, EvalError> {
        let predicted: Vec<(EmotionLabel, EmotionLabel)> = prepared
            .par_iter()
            .map(|(c, clip)| {
                let wrap = |e| EvalError::Feature { id: c.id.clone(), source: e };
                let input = if snr.is_infinite() {
                    clip.clone()
                } else {
                    let spec = AugmentSpec { kind: AugmentKind::AdditiveNoise, param: snr, seed: noise_seed(seed, snr, &c.id) };
                    augment(clip, &spec).map_err(wrap)?
                };
                let features = featurizer.mfcc(&input).map_err(wrap)?;
                Ok((c.label, decide(&predict(&features)?)))
            })
            .collect::<Result<_, EvalError>>()?;
        let r = EvalResult::from_pairs(base_eval_id, predicted)?;
        Ok(RobustnessPoint { snr_db: snr, accuracy: r.overall_accuracy, n_evaluated: r.n_records })
    };

    let mut points = vec![score(f64::INFINITY)?];
    for snr in grid {
        points.push(score(snr)?);
    }
    Ok(RobustnessCurve { base_eval_id: base_eval_id.to_string(), points, skipped_silent, seed })
}
