//! Resolution of pretrained checkpoints into a local cache directory.
//!
//! Layout: `<cache_dir>/<pretrained_id>/{config.json, vocab.txt,
//! model.safetensors}`. Downloads land in `*.partial` files and are renamed
//! into place, so an interrupted fetch never leaves a truncated file under a
//! final name. Fetches of the same id are serialized with a file lock.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::model::TextModelError;

pub const CHECKPOINT_FILES: [&str; 3] = ["config.json", "vocab.txt", "model.safetensors"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistryConfig {
    /// Base URL; files are fetched from `<endpoint>/<id>/resolve/main/<file>`.
    pub endpoint: String,
    pub cache_dir: PathBuf,
    /// Never touch the network; a missing cache entry fails immediately.
    pub offline: bool,
    pub timeout_ms: u64,
}

impl Default for RegistryConfig {
    fn default() -> Self {
        let home = std::env::var_os("HOME").map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
        Self {
            endpoint: "https://huggingface.co".into(),
            cache_dir: home.join(".cache").join("affectfuse").join("models"),
            offline: false,
            timeout_ms: 120_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelRegistry {
    cfg: RegistryConfig,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.split('/').all(|part| !part.is_empty() && part != "." && part != "..")
        && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_./".contains(c))
}

impl ModelRegistry {
    pub fn new(cfg: RegistryConfig) -> Self {
        Self { cfg }
    }

    pub fn config(&self) -> &RegistryConfig {
        &self.cfg
    }

    pub fn local_dir(&self, id: &str) -> PathBuf {
        self.cfg.cache_dir.join(id)
    }

    fn is_complete(dir: &Path) -> bool {
        CHECKPOINT_FILES.iter().all(|f| dir.join(f).is_file())
    }

    /// Returns the directory holding a complete checkpoint for `id`,
    /// downloading missing files unless offline.
    pub fn resolve(&self, id: &str) -> Result<PathBuf, TextModelError> {
        let unavailable = |reason: String, retryable: bool| TextModelError::RegistryUnavailable {
            id: id.to_string(),
            reason,
            retryable,
        };
        if !valid_id(id) {
            return Err(unavailable("invalid model id".into(), false));
        }
        let dir = self.local_dir(id);
        if Self::is_complete(&dir) {
            return Ok(dir);
        }
        if self.cfg.offline {
            return Err(unavailable(format!("offline mode and no complete cache entry in {}", dir.display()), false));
        }
        std::fs::create_dir_all(&dir).map_err(|e| unavailable(format!("cache dir: {e}"), false))?;
        let lock_path = dir.join(".fetch.lock");
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(|e| unavailable(format!("lock file: {e}"), false))?;
        lock.lock().map_err(|e| unavailable(format!("lock: {e}"), true))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(self.cfg.timeout_ms)))
            .build()
            .into();
        for file in CHECKPOINT_FILES {
            let target = dir.join(file);
            if target.is_file() {
                continue;
            }
            let url = format!("{}/{}/resolve/main/{}", self.cfg.endpoint.trim_end_matches('/'), id, file);
            self.fetch(&agent, &url, &target).map_err(|e| unavailable(format!("{url}: {e}"), true))?;
        }
        drop(lock);
        Ok(dir)
    }

    fn fetch(&self, agent: &ureq::Agent, url: &str, target: &Path) -> Result<(), String> {
        let partial = target.with_extension("partial");
        let result = (|| {
            let resp = agent.get(url).call().map_err(|e| e.to_string())?;
            let mut reader = resp.into_body().into_reader();
            let mut out = std::fs::File::create(&partial).map_err(|e| e.to_string())?;
            std::io::copy(&mut reader, &mut out).map_err(|e| e.to_string())?;
            out.flush().map_err(|e| e.to_string())?;
            out.sync_all().map_err(|e| e.to_string())?;
            std::fs::rename(&partial, target).map_err(|e| e.to_string())
        })();
        if result.is_err() {
            let _ = std::fs::remove_file(&partial);
        }
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_validation() {
        assert!(valid_id("distilbert-base-uncased"));
        assert!(valid_id("org/model_v1.2"));
        assert!(!valid_id("../etc"));
        assert!(!valid_id("a//b"));
        assert!(!valid_id(""));
    }

    #[test]
    fn offline_without_cache_fails_fast() {
        let dir = tempfile::tempdir().unwrap();
        let reg = ModelRegistry::new(RegistryConfig { cache_dir: dir.path().into(), offline: true, ..Default::default() });
        let t = std::time::Instant::now();
        let err = reg.resolve("distilbert-base-uncased").unwrap_err();
        assert!(matches!(err, TextModelError::RegistryUnavailable { retryable: false, .. }));
        assert!(t.elapsed() < Duration::from_millis(100));
        assert!(!dir.path().join("distilbert-base-uncased").exists());
    }

    #[test]
    fn complete_cache_needs_no_network() {
        let dir = tempfile::tempdir().unwrap();
        let entry = dir.path().join("m");
        std::fs::create_dir_all(&entry).unwrap();
        for f in CHECKPOINT_FILES {
            std::fs::write(entry.join(f), b"x").unwrap();
        }
        let reg = ModelRegistry::new(RegistryConfig {
            cache_dir: dir.path().into(),
            endpoint: "http://127.0.0.1:9".into(),
            ..Default::default()
        });
        assert_eq!(reg.resolve("m").unwrap(), entry);
    }
}
