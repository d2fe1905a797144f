//! The canonical eight-class emotion taxonomy and the probability vector
//! every classifier in the toolkit emits.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of emotion classes.
pub const N_CLASSES: usize = 8;

/// Tolerance on the sum of a probability vector.
pub const SUM_TOLERANCE: f64 = 1e-6;

/// Most-negative entry accepted in a probability vector.
pub const NEGATIVE_TOLERANCE: f64 = -1e-9;

/// Canonical emotion label. Discriminants are the class indices used by
/// every probability vector, in alphabetical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmotionLabel {
    Angry = 0,
    Calm = 1,
    Disgust = 2,
    Fear = 3,
    Happy = 4,
    Neutral = 5,
    Sad = 6,
    Surprise = 7,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; N_CLASSES] = [
        EmotionLabel::Angry,
        EmotionLabel::Calm,
        EmotionLabel::Disgust,
        EmotionLabel::Fear,
        EmotionLabel::Happy,
        EmotionLabel::Neutral,
        EmotionLabel::Sad,
        EmotionLabel::Surprise,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionLabel::Angry => "angry",
            EmotionLabel::Calm => "calm",
            EmotionLabel::Disgust => "disgust",
            EmotionLabel::Fear => "fear",
            EmotionLabel::Happy => "happy",
            EmotionLabel::Neutral => "neutral",
            EmotionLabel::Sad => "sad",
            EmotionLabel::Surprise => "surprise",
        }
    }

    /// Class names in index order.
    pub fn names() -> Vec<&'static str> {
        Self::ALL.iter().map(|l| l.name()).collect()
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("not a canonical emotion label: {0:?}")]
pub struct UnknownLabel(pub String);

impl FromStr for EmotionLabel {
    type Err = UnknownLabel;

    /// Accepts only the exact canonical names. Synonyms are handled by
    /// [`crate::ingest::normalize_label`].
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name() == s)
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("probability vector has {0} entries, expected {N_CLASSES}")]
    WrongLength(usize),
    #[error("entry {index} is not a valid probability: {value}")]
    BadEntry { index: usize, value: f64 },
    #[error("probabilities sum to {0}, expected 1")]
    BadSum(f64),
}

/// Probability vector over [`EmotionLabel`] indices. Entries are
/// nonnegative and sum to one within [`SUM_TOLERANCE`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct EmotionDistribution {
    probs: [f64; N_CLASSES],
}

impl EmotionDistribution {
    pub fn new(probs: [f64; N_CLASSES]) -> Result<Self, DistributionError> {
        let mut sum = 0.0;
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() || value < NEGATIVE_TOLERANCE {
                return Err(DistributionError::BadEntry { index, value });
            }
            sum += value;
        }
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(DistributionError::BadSum(sum));
        }
        Ok(Self { probs })
    }

    pub fn from_slice(probs: &[f64]) -> Result<Self, DistributionError> {
        let arr: [f64; N_CLASSES] = probs
            .try_into()
            .map_err(|_| DistributionError::WrongLength(probs.len()))?;
        Self::new(arr)
    }

    /// Softmax of raw scores, computed with the max-shift for stability.
    pub fn from_logits(logits: &[f64]) -> Result<Self, DistributionError> {
        if logits.len() != N_CLASSES {
            return Err(DistributionError::WrongLength(logits.len()));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut probs = [0.0; N_CLASSES];
        let mut total = 0.0;
        for (p, &z) in probs.iter_mut().zip(logits) {
            *p = (z - max).exp();
            total += *p;
        }
        for p in &mut probs {
            *p /= total;
        }
        Self::new(probs)
    }

    pub fn one_hot(label: EmotionLabel) -> Self {
        let mut probs = [0.0; N_CLASSES];
        probs[label.index()] = 1.0;
        Self { probs }
    }

    pub fn uniform() -> Self {
        Self {
            probs: [1.0 / N_CLASSES as f64; N_CLASSES],
        }
    }

    pub fn probs(&self) -> &[f64; N_CLASSES] {
        &self.probs
    }

    pub fn get(&self, label: EmotionLabel) -> f64 {
        self.probs[label.index()]
    }

    pub fn max_prob(&self) -> f64 {
        self.probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Argmax with the lowest-index tie break; see [`crate::fusion::decide`].
    pub fn argmax(&self) -> EmotionLabel {
        crate::fusion::argmax_lowest_index(&self.probs)
    }
}

impl<'de> Deserialize<'de> for EmotionDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let probs = Vec::<f64>::deserialize(deserializer)?;
        Self::from_slice(&probs).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_name_bijection() {
        for (i, label) in EmotionLabel::ALL.iter().enumerate() {
            assert_eq!(label.index(), i);
            assert_eq!(EmotionLabel::from_index(i), Some(*label));
            assert_eq!(label.name().parse::<EmotionLabel>().unwrap(), *label);
        }
        assert_eq!(EmotionLabel::from_index(8), None);
        let mut names = EmotionLabel::names();
        let sorted = {
            let mut s = names.clone();
            s.sort();
            s
        };
        assert_eq!(names, sorted);
        names.dedup();
        assert_eq!(names.len(), N_CLASSES);
    }

    #[test]
    fn serializes_as_lowercase_name() {
        assert_eq!(serde_json::to_string(&EmotionLabel::Surprise).unwrap(), "\"surprise\"");
        let l: EmotionLabel = serde_json::from_str("\"fear\"").unwrap();
        assert_eq!(l, EmotionLabel::Fear);
        assert!(serde_json::from_str::<EmotionLabel>("\"fearful\"").is_err());
    }

    #[test]
    fn distribution_validation() {
        assert!(EmotionDistribution::new([0.125; 8]).is_ok());
        assert!(matches!(
            EmotionDistribution::new([0.2; 8]),
            Err(DistributionError::BadSum(_))
        ));
        let mut p = [0.0; 8];
        p[0] = 1.1;
        p[1] = -0.1;
        assert!(matches!(
            EmotionDistribution::new(p),
            Err(DistributionError::BadEntry { index: 1, .. })
        ));
        assert!(matches!(
            EmotionDistribution::from_slice(&[1.0]),
            Err(DistributionError::WrongLength(1))
        ));
    }

    #[test]
    fn softmax_is_on_simplex() {
        let d = EmotionDistribution::from_logits(&[1000.0, -3.0, 0.0, 2.0, 5.0, 1.0, 0.0, -1000.0]).unwrap();
        let sum: f64 = d.probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert_eq!(d.argmax(), EmotionLabel::Angry);
    }
}
