//! Helpers shared by the model artifact formats: a `metadata.json` next to a
//! `weights.safetensors` blob.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::nn::safetensors;
use crate::EmotionLabel;

pub const METADATA_FILE: &str = "metadata.json";
pub const WEIGHTS_FILE: &str = "weights.safetensors";

pub enum ArtifactIssue {
    Corrupt(String),
    Mismatch(String),
}

pub fn taxonomy() -> Vec<String> {
    EmotionLabel::names().into_iter().map(str::to_string).collect()
}

pub fn check_taxonomy(found: &[String]) -> Result<(), ArtifactIssue> {
    if found != taxonomy().as_slice() {
        return Err(ArtifactIssue::Mismatch(format!(
            "artifact taxonomy {found:?} differs from {:?}",
            taxonomy()
        )));
    }
    Ok(())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(tmp, path)
}

pub fn write<M: Serialize>(dir: &Path, metadata: &M, tensors: &BTreeMap<String, Array2<f64>>) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join(WEIGHTS_FILE), &safetensors::serialize(tensors, &BTreeMap::new()))?;
    let json = serde_json::to_vec_pretty(metadata).map_err(std::io::Error::other)?;
    write_atomic(&dir.join(METADATA_FILE), &json)
}

pub fn read_metadata<M: DeserializeOwned>(dir: &Path) -> Result<M, ArtifactIssue> {
    let path = dir.join(METADATA_FILE);
    let bytes = std::fs::read(&path).map_err(|e| ArtifactIssue::Corrupt(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| ArtifactIssue::Corrupt(format!("invalid {METADATA_FILE}: {e}")))
}

pub fn read_weights(dir: &Path) -> Result<BTreeMap<String, Array2<f64>>, ArtifactIssue> {
    safetensors::read(&dir.join(WEIGHTS_FILE)).map_err(|e| ArtifactIssue::Corrupt(format!("{WEIGHTS_FILE}: {e}")))
}
