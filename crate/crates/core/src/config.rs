//! Application configuration: one JSON file plus `AFFECTFUSE_` environment
//! overrides, validated as a whole.
//!
//! An environment variable `AFFECTFUSE_SECTION__KEY=value` overrides
//! `section.key`; each `__` descends one level and names are lowercased.
//! Only variables containing `__` are treated as overrides. Values are read
//! as JSON when they parse (numbers, booleans, arrays) and as plain strings
//! otherwise; a key whose current value is a string always takes the raw
//! text.

use std::collections::BTreeMap;
use std::fmt;
use std::net::IpAddr;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::audio_model::{AudioModelConfig, InputMode};
use crate::features::FeatureConfig;
use crate::fusion::FusionConfig;
use crate::text::{RegistryConfig, TextModelConfig};
use crate::training::{TextTrainHyper, TrainHyper};
use crate::transcribe::TranscriptionConfig;

pub const ENV_PREFIX: &str = "AFFECTFUSE_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Corpus tag (e.g. "RAVDESS") to dataset root.
    pub corpora: BTreeMap<String, PathBuf>,
    /// Trained models live in `<artifact_dir>/audio` and `<artifact_dir>/text`.
    pub artifact_dir: PathBuf,
    /// MFCC cache.
    pub cache_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            corpora: BTreeMap::new(),
            artifact_dir: "artifacts".into(),
            cache_dir: "cache/features".into(),
            report_dir: "reports".into(),
        }
    }
}

impl PathsConfig {
    pub fn audio_artifact(&self) -> PathBuf {
        self.artifact_dir.join("audio")
    }

    pub fn text_artifact(&self) -> PathBuf {
        self.artifact_dir.join("text")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind_address: String,
    pub port: u16,
    pub max_upload_bytes: usize,
    pub request_timeout_ms: u64,
    /// Requests scored concurrently; further requests wait for a slot.
    pub workers: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind_address: "127.0.0.1".into(),
            port: 8080,
            max_upload_bytes: 10 * 1024 * 1024,
            request_timeout_ms: 10_000,
            workers: std::thread::available_parallelism().map_or(4, |n| n.get()),
        }
    }
}

impl ServiceConfig {
    fn issues(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.bind_address.parse::<IpAddr>().is_err() {
            out.push(("bind_address", format!("{:?} is not an IP address", self.bind_address)));
        }
        if self.max_upload_bytes == 0 {
            out.push(("max_upload_bytes", "must be positive".into()));
        }
        if self.request_timeout_ms == 0 {
            out.push(("request_timeout_ms", "must be positive".into()));
        }
        if self.workers == 0 {
            out.push(("workers", "must be positive".into()));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub paths: PathsConfig,
    pub feature: FeatureConfig,
    pub audio_model: AudioModelConfig,
    pub text_model: TextModelConfig,
    pub fusion: FusionConfig,
    pub transcription: TranscriptionConfig,
    pub service: ServiceConfig,
    pub registry: RegistryConfig,
    pub audio_train: TrainHyper,
    pub text_train: TextTrainHyper,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    /// Dotted key path, e.g. `fusion.audio_weight`.
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config is not valid JSON: {0}")]
    Syntax(String),
    #[error("invalid configuration:\n  {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n  "))]
    ConfigInvalid(Vec<ConfigIssue>),
}

impl ConfigError {
    pub fn issues(&self) -> &[ConfigIssue] {
        match self {
            Self::ConfigInvalid(v) => v,
            _ => &[],
        }
    }
}

/// Paths whose children are free-form map keys rather than fields.
const MAP_PATHS: [&str; 1] = ["paths.corpora"];

impl AppConfig {
    /// Reads `path` (when given) and applies overrides from the process
    /// environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        Self::load_with_env(path, std::env::vars())
    }

    pub fn load_with_env(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.to_path_buf(), source })?,
            None => String::new(),
        };
        Self::from_str_with_env(&text, env)
    }

    /// Parses config text (empty means all defaults) and applies `env`.
    pub fn from_str_with_env(text: &str, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, ConfigError> {
        let user: Value = if text.trim().is_empty() {
            Value::Object(Map::new())
        } else {
            serde_json::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?
        };
        let Value::Object(mut user) = user else {
            return Err(ConfigError::Syntax("top level must be an object".into()));
        };
        let defaults = serde_json::to_value(AppConfig::default()).expect("defaults serialize");
        let mut overrides: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX) && k.contains("__")).collect();
        overrides.sort();
        for (key, raw) in overrides {
            let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(str::to_lowercase).collect();
            set_path(&mut user, &defaults, &path, &raw);
        }

        let mut issues = Vec::new();
        unknown_keys(&Value::Object(user.clone()), &defaults, "", &mut issues);
        let explicit_shape = ["input_frames", "input_coeffs"]
            .map(|k| user.get("audio_model").and_then(|a| a.get(k)).is_some());
        let mut merged = defaults.clone();
        merge(&mut merged, Value::Object(user));

        let mut cfg = AppConfig::default();
        macro_rules! section {
            ($field:ident) => {
                match section::<_>(&merged, stringify!($field)) {
                    Ok(v) => cfg.$field = v,
                    Err(issue) => issues.push(issue),
                }
            };
        }
        section!(paths);
        section!(feature);
        section!(audio_model);
        section!(text_model);
        section!(fusion);
        section!(transcription);
        section!(service);
        section!(registry);
        section!(audio_train);
        section!(text_train);
        if !explicit_shape[0] {
            cfg.audio_model.input_frames = cfg.feature.n_frames();
        }
        if !explicit_shape[1] {
            cfg.audio_model.input_coeffs = cfg.feature.n_mfcc;
        }
        issues.extend(cfg.issues());
        issues.dedup();
        if issues.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::ConfigInvalid(issues))
        }
    }

    /// Semantic problems across all sections.
    pub fn issues(&self) -> Vec<ConfigIssue> {
        let mut out = Vec::new();
        let mut push = |section: &str, list: Vec<(&'static str, String)>| {
            out.extend(list.into_iter().map(|(k, m)| ConfigIssue { path: format!("{section}.{k}"), message: m }));
        };
        push("feature", self.feature.issues());
        push("audio_model", self.audio_model.issues());
        push("text_model", self.text_model.issues());
        push("fusion", self.fusion.issues());
        push("transcription", self.transcription.issues());
        push("service", self.service.issues());
        push("audio_train", self.audio_train.issues());
        push("text_train", self.text_train.issues());
        let mut registry = Vec::new();
        if !(self.registry.endpoint.starts_with("http://") || self.registry.endpoint.starts_with("https://")) {
            registry.push(("endpoint", "must be an http(s) URL".to_string()));
        }
        if self.registry.timeout_ms == 0 {
            registry.push(("timeout_ms", "must be positive".to_string()));
        }
        push("registry", registry);

        let mut cross = Vec::new();
        if self.audio_model.input_mode == InputMode::Sequence && self.audio_model.input_frames != self.feature.n_frames() {
            cross.push(("input_frames", format!("is {} but the feature config yields {} frames", self.audio_model.input_frames, self.feature.n_frames())));
        }
        if self.audio_model.input_coeffs != self.feature.n_mfcc {
            cross.push(("input_coeffs", format!("is {} but feature.n_mfcc is {}", self.audio_model.input_coeffs, self.feature.n_mfcc)));
        }
        if self.audio_model.kind == crate::audio_model::AudioModelKind::Cnn {
            if let Err(stage) = self.audio_model.pooled_lengths() {
                cross.push(("conv_blocks", format!("input is pooled to zero length at block {stage}")));
            }
        }
        push("audio_model", cross);
        out
    }
}

fn section<T: DeserializeOwned>(merged: &Value, name: &str) -> Result<T, ConfigIssue> {
    let value = merged.get(name).cloned().unwrap_or(Value::Null);
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." { name.to_string() } else { format!("{name}.{inner}") };
        ConfigIssue { path, message: e.into_inner().to_string() }
    })
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn unknown_keys(user: &Value, defaults: &Value, prefix: &str, out: &mut Vec<ConfigIssue>) {
    let (Value::Object(u), Value::Object(d)) = (user, defaults) else { return };
    if MAP_PATHS.contains(&prefix) {
        return;
    }
    for (k, v) in u {
        let path = join(prefix, k);
        match d.get(k) {
            Some(dv) => unknown_keys(v, dv, &path, out),
            None => out.push(ConfigIssue { path, message: "unknown key".into() }),
        }
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn set_path(user: &mut Map<String, Value>, defaults: &Value, path: &[String], raw: &str) {
    let mut node = user;
    let mut default = Some(defaults);
    for key in &path[..path.len() - 1] {
        default = default.and_then(|d| d.get(key));
        let entry = node.entry(key.clone()).or_insert_with(|| Value::Object(Map::new()));
        if !entry.is_object() {
            *entry = Value::Object(Map::new());
        }
        node = entry.as_object_mut().expect("object");
    }
    let last = &path[path.len() - 1];
    let current = node.get(last).or_else(|| default.and_then(|d| d.get(last)));
    let value = match current {
        Some(Value::String(_)) => Value::String(raw.to_string()),
        _ => serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string())),
    };
    node.insert(last.clone(), value);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn empty_is_defaults() {
        assert_eq!(AppConfig::from_str_with_env("", env(&[])).unwrap(), AppConfig::default());
        assert_eq!(AppConfig::from_str_with_env("{}", env(&[])).unwrap(), AppConfig::default());
    }

    #[test]
    fn env_overrides_file() {
        let cfg = AppConfig::from_str_with_env(
            r#"{"service": {"port": 8000}, "transcription": {"backend": "mock"}}"#,
            env(&[
                ("AFFECTFUSE_SERVICE__PORT", "9000"),
                ("AFFECTFUSE_TRANSCRIPTION__BACKEND", "none"),
                ("AFFECTFUSE_REGISTRY__OFFLINE", "true"),
                ("AFFECTFUSE_PATHS__CORPORA__RAVDESS", "/data/ravdess"),
                ("AFFECTFUSE_UNRELATED", "ignored"),
                ("OTHER__THING", "ignored"),
            ]),
        )
        .unwrap();
        assert_eq!(cfg.service.port, 9000);
        assert_eq!(cfg.transcription.backend, "none");
        assert!(cfg.registry.offline);
        assert_eq!(cfg.paths.corpora["ravdess"], PathBuf::from("/data/ravdess"));
    }

    #[test]
    fn errors_are_aggregated_with_paths() {
        let err = AppConfig::from_str_with_env(
            r#"{"fusion": {"audio_weight": 1.5}, "service": {"workers": 0}, "feature": {"n_mfcc": 0}}"#,
            env(&[]),
        )
        .unwrap_err();
        let paths: Vec<&str> = err.issues().iter().map(|i| i.path.as_str()).collect();
        assert!(paths.contains(&"fusion.audio_weight"), "{paths:?}");
        assert!(paths.contains(&"service.workers"), "{paths:?}");
        assert!(paths.iter().any(|p| p.starts_with("feature.")), "{paths:?}");
    }

    #[test]
    fn unknown_and_mistyped_keys() {
        let err = AppConfig::from_str_with_env(r#"{"fusion": {"weight": 0.3}, "bogus": 1, "service": {"port": "high"}}"#, env(&[]))
            .unwrap_err();
        let paths: Vec<&str> = err.issues().iter().map(|i| i.path.as_str()).collect();
        assert!(paths.contains(&"fusion.weight"), "{paths:?}");
        assert!(paths.contains(&"bogus"), "{paths:?}");
        assert!(paths.contains(&"service.port"), "{paths:?}");
        let err = AppConfig::from_str_with_env("{}", env(&[("AFFECTFUSE_FUSION__AUDIO_WEIGHT", "lots")])).unwrap_err();
        assert_eq!(err.issues()[0].path, "fusion.audio_weight");
    }

    #[test]
    fn audio_shape_follows_features_unless_explicit() {
        let cfg = AppConfig::from_str_with_env(r#"{"feature": {"clip_seconds": 2.0, "n_mfcc": 20}}"#, env(&[])).unwrap();
        assert_eq!(cfg.audio_model.input_frames, cfg.feature.n_frames());
        assert_eq!(cfg.audio_model.input_coeffs, 20);
        let err = AppConfig::from_str_with_env(r#"{"audio_model": {"input_frames": 130}}"#, env(&[])).unwrap_err();
        assert_eq!(err.issues()[0].path, "audio_model.input_frames");
    }
}
