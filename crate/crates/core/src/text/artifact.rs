use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::encoder::EncoderConfig;
use super::model::{TextModel, TextModelConfig, TextModelError};
use super::tokenizer::WordPiece;
use crate::artifact::{self, ArtifactIssue};
use crate::nn::Module;

pub const TEXT_ARTIFACT_SCHEMA_VERSION: &str = "1";
const VOCAB_FILE: &str = "vocab.txt";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Metadata {
    schema_version: String,
    kind: String,
    taxonomy: Vec<String>,
    pretrained_id: String,
    max_tokens: usize,
    text_model_config: TextModelConfig,
    encoder_config: EncoderConfig,
    created_at: DateTime<Utc>,
}

impl From<ArtifactIssue> for TextModelError {
    fn from(i: ArtifactIssue) -> Self {
        match i {
            ArtifactIssue::Corrupt(m) => TextModelError::CorruptArtifact(m),
            ArtifactIssue::Mismatch(m) => TextModelError::ArtifactMismatch(m),
        }
    }
}

pub fn save_text_model(model: &TextModel, dir: &Path) -> Result<(), TextModelError> {
    let meta = Metadata {
        schema_version: TEXT_ARTIFACT_SCHEMA_VERSION.into(),
        kind: "text".into(),
        taxonomy: artifact::taxonomy(),
        pretrained_id: model.config.pretrained_id.clone(),
        max_tokens: model.config.max_tokens,
        text_model_config: model.config.clone(),
        encoder_config: model.net.config.clone(),
        created_at: Utc::now(),
    };
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(VOCAB_FILE), model.tokenizer.to_file_contents())?;
    artifact::write(dir, &meta, &model.tensors())?;
    Ok(())
}

pub fn load_text_model(dir: &Path) -> Result<TextModel, TextModelError> {
    let meta: Metadata = artifact::read_metadata(dir)?;
    if meta.schema_version != TEXT_ARTIFACT_SCHEMA_VERSION || meta.kind != "text" {
        return Err(TextModelError::ArtifactMismatch(format!(
            "expected a text artifact with schema_version {TEXT_ARTIFACT_SCHEMA_VERSION:?}, found kind {:?} version {:?}",
            meta.kind, meta.schema_version
        )));
    }
    artifact::check_taxonomy(&meta.taxonomy)?;
    if meta.pretrained_id != meta.text_model_config.pretrained_id || meta.max_tokens != meta.text_model_config.max_tokens {
        return Err(TextModelError::CorruptArtifact("metadata fields disagree with text_model_config".into()));
    }
    let tokenizer =
        WordPiece::from_file(&dir.join(VOCAB_FILE)).map_err(TextModelError::CorruptArtifact)?;
    let mut model = TextModel::scratch(meta.text_model_config, meta.encoder_config, tokenizer, 0)
        .map_err(|e| TextModelError::CorruptArtifact(e.to_string()))?;
    let weights = artifact::read_weights(dir)?;
    model
        .net
        .load_tensors(&weights)
        .map_err(|e| TextModelError::CorruptArtifact(e.to_string()))?;
    Ok(model)
}

