use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::config::{AudioModelConfig, AudioModelKind};
use super::model::{build_model, AudioModel, AudioModelError};
use crate::artifact::{self, ArtifactIssue};
use crate::nn::Module;

pub const ARTIFACT_SCHEMA_VERSION: &str = "1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Metadata {
    schema_version: String,
    kind: AudioModelKind,
    taxonomy: Vec<String>,
    audio_model_config: AudioModelConfig,
    feature_config_hash: Option<String>,
    created_at: DateTime<Utc>,
}

impl From<ArtifactIssue> for AudioModelError {
    fn from(i: ArtifactIssue) -> Self {
        match i {
            ArtifactIssue::Corrupt(m) => AudioModelError::CorruptArtifact(m),
            ArtifactIssue::Mismatch(m) => AudioModelError::ArtifactMismatch(m),
        }
    }
}

pub fn save_model(model: &AudioModel, dir: &Path) -> Result<(), AudioModelError> {
    let meta = Metadata {
        schema_version: ARTIFACT_SCHEMA_VERSION.into(),
        kind: model.config.kind,
        taxonomy: artifact::taxonomy(),
        audio_model_config: model.config.clone(),
        feature_config_hash: model.feature_hash.clone(),
        created_at: Utc::now(),
    };
    artifact::write(dir, &meta, &model.named_tensors().into_iter().collect())?;
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<AudioModel, AudioModelError> {
    let meta: Metadata = artifact::read_metadata(dir)?;
    if meta.schema_version != ARTIFACT_SCHEMA_VERSION {
        return Err(AudioModelError::ArtifactMismatch(format!(
            "schema_version {:?}, expected {ARTIFACT_SCHEMA_VERSION:?}",
            meta.schema_version
        )));
    }
    artifact::check_taxonomy(&meta.taxonomy)?;
    if meta.kind != meta.audio_model_config.kind {
        return Err(AudioModelError::CorruptArtifact("kind disagrees with audio_model_config.kind".into()));
    }
    let mut model = build_model(&meta.audio_model_config, 0)
        .map_err(|e| AudioModelError::CorruptArtifact(format!("stored config is unusable: {e}")))?;
    let weights = artifact::read_weights(dir)?;
    model
        .load_tensors(&weights)
        .map_err(|e| AudioModelError::CorruptArtifact(e.to_string()))?;
    model.feature_hash = meta.feature_config_hash;
    Ok(model)
}
