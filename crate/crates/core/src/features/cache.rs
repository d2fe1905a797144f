use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{FeatureError, MfccMatrix};

/// On-disk MFCC cache: one JSON file per clip id. A hit requires the stored
/// config hash to equal the requested one.
#[derive(Debug, Clone)]
pub struct FeatureCache {
    dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    clip_id: String,
    config_hash: String,
    frames: usize,
    coeffs: usize,
    values: Vec<f64>,
}

impl FeatureCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, FeatureError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, clip_id: &str) -> PathBuf {
        let safe: String = clip_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
            .collect();
        self.dir.join(format!("{safe}.json"))
    }

    pub fn get(&self, clip_id: &str, config_hash: &str) -> Option<MfccMatrix> {
        let bytes = fs::read(self.path_for(clip_id)).ok()?;
        let entry: Entry = serde_json::from_slice(&bytes).ok()?;
        if entry.clip_id != clip_id || entry.config_hash != config_hash {
            return None;
        }
        let values = Array2::from_shape_vec((entry.frames, entry.coeffs), entry.values).ok()?;
        Some(MfccMatrix {
            values,
            config_hash: entry.config_hash,
        })
    }

    pub fn put(&self, clip_id: &str, m: &MfccMatrix) -> Result<(), FeatureError> {
        let entry = Entry {
            clip_id: clip_id.to_string(),
            config_hash: m.config_hash.clone(),
            frames: m.n_frames(),
            coeffs: m.n_coeffs(),
            values: m.values.iter().copied().collect(),
        };
        let path = self.path_for(clip_id);
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec(&entry).map_err(std::io::Error::from)?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hit_requires_matching_hash() {
        let dir = tempfile::tempdir().unwrap();
        let cache = FeatureCache::new(dir.path()).unwrap();
        let m = MfccMatrix {
            values: Array2::from_shape_fn((3, 2), |(i, j)| i as f64 * 0.1 - j as f64 / 3.0),
            config_hash: "abc".into(),
        };
        cache.put("ravdess/03-01", &m).unwrap();
        assert_eq!(cache.get("ravdess/03-01", "abc"), Some(m));
        assert_eq!(cache.get("ravdess/03-01", "def"), None);
        assert_eq!(cache.get("ravdess/other", "abc"), None);
    }
}
