//! Late fusion of acoustic and textual emotion distributions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{DistributionError, EmotionDistribution, EmotionLabel, N_CLASSES};

/// Entries within this distance of the maximum count as tied.
pub const TIE_EPSILON: f64 = 1e-12;

/// Per-entry floor applied before multiplying distributions.
pub const PRODUCT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionStrategy {
    /// Convex combination `w·audio + (1−w)·text`.
    #[default]
    Linear,
    /// Elementwise product, renormalized.
    Product,
    /// Whichever input has the larger maximum probability.
    MaxConfidence,
}

impl FusionStrategy {
    pub const ALL: [FusionStrategy; 3] = [
        FusionStrategy::Linear,
        FusionStrategy::Product,
        FusionStrategy::MaxConfidence,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub strategy: FusionStrategy,
    pub audio_weight: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            strategy: FusionStrategy::Linear,
            audio_weight: 0.5,
        }
    }
}

impl FusionConfig {
    pub fn issues(&self) -> Vec<(&'static str, String)> {
        if (0.0..=1.0).contains(&self.audio_weight) {
            vec![]
        } else {
            vec![("audio_weight", format!("{} is outside [0, 1]", self.audio_weight))]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Audio,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusedPrediction {
    pub distribution: EmotionDistribution,
    pub label: EmotionLabel,
    pub modalities_used: Vec<Modality>,
    pub strategy: FusionStrategy,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("no modality supplied to fusion")]
    NoModalities,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(#[from] DistributionError),
    #[error("audio_weight {0} is outside [0, 1]")]
    InvalidWeight(f64),
}

pub(crate) fn argmax_lowest_index(p: &[f64; N_CLASSES]) -> EmotionLabel {
    let mut best = 0;
    for i in 1..N_CLASSES {
        if p[i] > p[best] + TIE_EPSILON {
            best = i;
        }
    }
    EmotionLabel::ALL[best]
}

/// Argmax; entries within [`TIE_EPSILON`] of each other resolve to the lower index.
pub fn decide(d: &EmotionDistribution) -> EmotionLabel {
    argmax_lowest_index(d.probs())
}

/// [`decide`] on an unchecked vector, validating it first.
pub fn decide_probs(p: &[f64]) -> Result<EmotionLabel, FusionError> {
    Ok(decide(&EmotionDistribution::from_slice(p)?))
}

pub fn fuse(
    audio: Option<&EmotionDistribution>,
    text: Option<&EmotionDistribution>,
    cfg: &FusionConfig,
) -> Result<FusedPrediction, FusionError> {
    if !(0.0..=1.0).contains(&cfg.audio_weight) {
        return Err(FusionError::InvalidWeight(cfg.audio_weight));
    }
    let (distribution, modalities_used) = match (audio, text) {
        (None, None) => return Err(FusionError::NoModalities),
        (Some(a), None) => (*a, vec![Modality::Audio]),
        (None, Some(t)) => (*t, vec![Modality::Text]),
        (Some(a), Some(t)) => (combine(a, t, cfg)?, vec![Modality::Audio, Modality::Text]),
    };
    Ok(FusedPrediction {
        label: decide(&distribution),
        distribution,
        modalities_used,
        strategy: cfg.strategy,
    })
}

/// [`fuse`] over raw vectors, validating each present input.
pub fn fuse_probs(audio: Option<&[f64]>, text: Option<&[f64]>, cfg: &FusionConfig) -> Result<FusedPrediction, FusionError> {
    let a = audio.map(EmotionDistribution::from_slice).transpose()?;
    let t = text.map(EmotionDistribution::from_slice).transpose()?;
    fuse(a.as_ref(), t.as_ref(), cfg)
}

fn combine(a: &EmotionDistribution, t: &EmotionDistribution, cfg: &FusionConfig) -> Result<EmotionDistribution, FusionError> {
    let (pa, pt) = (a.probs(), t.probs());
    let out = match cfg.strategy {
        FusionStrategy::Linear => {
            let w = cfg.audio_weight;
            let mut p = [0.0; N_CLASSES];
            for i in 0..N_CLASSES {
                p[i] = w * pa[i] + (1.0 - w) * pt[i];
            }
            EmotionDistribution::new(p)?
        }
        FusionStrategy::Product => {
            let mut p = [0.0; N_CLASSES];
            let mut total = 0.0;
            for i in 0..N_CLASSES {
                p[i] = pa[i].max(PRODUCT_FLOOR) * pt[i].max(PRODUCT_FLOOR);
                total += p[i];
            }
            for v in &mut p {
                *v /= total;
            }
            EmotionDistribution::new(p)?
        }
        FusionStrategy::MaxConfidence => {
            if t.max_prob() > a.max_prob() {
                *t
            } else {
                *a
            }
        }
    };
    Ok(out)
}
