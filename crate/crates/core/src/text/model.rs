use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::encoder::{DistilBertClassifier, EncoderConfig};
use super::normalize_text;
use super::tokenizer::WordPiece;
use crate::nn::{safetensors, softmax_rows, Module};
use crate::{EmotionDistribution, N_CLASSES};

pub const DEFAULT_PRETRAINED_ID: &str = "distilbert-base-uncased";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextModelConfig {
    pub pretrained_id: String,
    pub max_tokens: usize,
    pub n_classes: usize,
}

impl Default for TextModelConfig {
    fn default() -> Self {
        Self { pretrained_id: DEFAULT_PRETRAINED_ID.into(), max_tokens: 128, n_classes: N_CLASSES }
    }
}

impl TextModelConfig {
    pub fn issues(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.pretrained_id.trim().is_empty() {
            out.push(("pretrained_id", "must not be empty".into()));
        }
        if self.max_tokens < 8 {
            out.push(("max_tokens", "must be at least 8".into()));
        }
        if self.n_classes != N_CLASSES {
            out.push(("n_classes", format!("must be {N_CLASSES}")));
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum TextModelError {
    #[error("invalid text model config: {0}")]
    InvalidConfig(String),
    #[error("text is empty after normalization")]
    EmptyText,
    #[error("pretrained model {id:?} unavailable: {reason}")]
    RegistryUnavailable { id: String, reason: String, retryable: bool },
    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),
    #[error("corrupt artifact: {0}")]
    CorruptArtifact(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Tokenizer plus encoder-with-head. Immutable during inference.
#[derive(Debug, Clone)]
pub struct TextModel {
    pub(crate) config: TextModelConfig,
    pub(crate) tokenizer: WordPiece,
    pub(crate) net: DistilBertClassifier,
}

fn check(cfg: &TextModelConfig, enc: &EncoderConfig, tokenizer: &WordPiece) -> Result<(), TextModelError> {
    let mut problems: Vec<String> = cfg.issues().into_iter().map(|(k, v)| format!("{k}: {v}")).collect();
    problems.extend(enc.issues());
    if cfg.max_tokens > enc.max_position_embeddings {
        problems.push(format!(
            "max_tokens {} exceeds the encoder's {} positions",
            cfg.max_tokens, enc.max_position_embeddings
        ));
    }
    if tokenizer.len() > enc.vocab_size {
        problems.push(format!("vocabulary has {} tokens, encoder only {}", tokenizer.len(), enc.vocab_size));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(TextModelError::InvalidConfig(problems.join("; ")))
    }
}

impl TextModel {
    /// Randomly initialized encoder; used when no pretrained weights are
    /// wanted (tests, overfit checks).
    pub fn scratch(cfg: TextModelConfig, encoder: EncoderConfig, tokenizer: WordPiece, seed: u64) -> Result<Self, TextModelError> {
        check(&cfg, &encoder, &tokenizer)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = DistilBertClassifier::init(&encoder, cfg.n_classes, &mut rng);
        Ok(Self { config: cfg, tokenizer, net })
    }

    /// Loads `config.json`, `vocab.txt` and `model.safetensors` from a
    /// checkpoint directory. Encoder tensors may carry a `distilbert.` prefix
    /// or not; a missing or differently sized classification head is
    /// initialized from `seed`.
    pub fn from_pretrained_dir(cfg: TextModelConfig, dir: &Path, seed: u64) -> Result<Self, TextModelError> {
        let corrupt = |m: String| TextModelError::CorruptArtifact(format!("{}: {m}", dir.display()));
        let enc_bytes = std::fs::read(dir.join("config.json")).map_err(|e| corrupt(format!("config.json: {e}")))?;
        let encoder: EncoderConfig = serde_json::from_slice(&enc_bytes).map_err(|e| corrupt(format!("config.json: {e}")))?;
        let tokenizer = WordPiece::from_file(&dir.join("vocab.txt")).map_err(corrupt)?;
        let tensors = safetensors::read(&dir.join("model.safetensors")).map_err(|e| corrupt(e.to_string()))?;
        let mut model = Self::scratch(cfg, encoder, tokenizer, seed)?;
        let mut missing_head = false;
        let mut err = None;
        model.net.visit_mut("", &mut |name, p| {
            if err.is_some() {
                return;
            }
            let found = tensors.get(&name).or_else(|| name.strip_prefix("distilbert.").and_then(|n| tensors.get(n)));
            let is_head = name.starts_with("pre_classifier") || name.starts_with("classifier");
            match found {
                Some(t) if t.dim() == p.value.dim() => p.value.assign(t),
                _ if is_head => missing_head = true,
                Some(t) => err = Some(corrupt(format!("{name} has shape {:?}, expected {:?}", t.shape(), p.shape()))),
                None => err = Some(corrupt(format!("missing tensor {name}"))),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if missing_head {
            log::info!("initializing a fresh classification head over {}", dir.display());
            model.net.reset_head(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        Ok(model)
    }

    pub fn config(&self) -> &TextModelConfig {
        &self.config
    }

    pub fn encoder_config(&self) -> &EncoderConfig {
        &self.net.config
    }

    pub fn tokenizer(&self) -> &WordPiece {
        &self.tokenizer
    }

    pub fn network(&self) -> &DistilBertClassifier {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut DistilBertClassifier {
        &mut self.net
    }

    /// Normalizes and tokenizes; the result fits in `max_tokens`.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>, TextModelError> {
        let normalized = normalize_text(text);
        if normalized.is_empty() {
            return Err(TextModelError::EmptyText);
        }
        Ok(self.tokenizer.encode(&normalized, self.config.max_tokens))
    }

    pub fn logits_ids(&self, ids: &[usize]) -> Array2<f64> {
        self.net.forward(ids, None).0
    }

    pub fn predict_ids(&self, ids: &[usize]) -> EmotionDistribution {
        let p = softmax_rows(self.logits_ids(ids).view());
        EmotionDistribution::from_slice(p.row(0).as_slice().expect("row")).expect("softmax is a distribution")
    }

    pub fn predict_text(&self, text: &str) -> Result<EmotionDistribution, TextModelError> {
        Ok(self.predict_ids(&self.encode(text)?))
    }

    pub(crate) fn tensors(&self) -> BTreeMap<String, Array2<f64>> {
        self.net.named_tensors().into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> TextModel {
        let tok = WordPiece::from_corpus(["i am happy", "i am sad today"], 1);
        let enc = EncoderConfig::tiny(tok.len());
        TextModel::scratch(TextModelConfig { max_tokens: 8, ..Default::default() }, enc, tok, 0).unwrap()
    }

    #[test]
    fn predictions_are_distributions_and_deterministic() {
        let m = model();
        let a = m.predict_text("I am HAPPY").unwrap();
        assert!((a.probs().iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert_eq!(a, m.predict_text("I am HAPPY").unwrap());
    }

    #[test]
    fn long_text_uses_truncated_prefix() {
        let m = model();
        let long = "i am happy ".repeat(50);
        assert_eq!(m.encode(&long).unwrap().len(), 8);
        let prefix = "i am happy i am happy";
        assert_eq!(m.encode(&long).unwrap(), m.encode(prefix).unwrap());
        assert_eq!(m.predict_text(&long).unwrap(), m.predict_text(prefix).unwrap());
    }

    #[test]
    fn empty_text_is_rejected() {
        assert!(matches!(model().predict_text("   \n "), Err(TextModelError::EmptyText)));
    }

    #[test]
    fn config_validation() {
        assert!(TextModelConfig::default().issues().is_empty());
        let bad = TextModelConfig { max_tokens: 4, n_classes: 3, pretrained_id: " ".into() };
        assert_eq!(bad.issues().len(), 3);
    }
}
