//! Speech-to-text boundary. Backends are looked up by name in a
//! [`BackendRegistry`]; [`transcribe`] wraps any backend with the shared
//! deadline, retry and latency bookkeeping.

mod http;
mod mock;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::features::AudioClip;

pub use http::{HttpBackend, TOKEN_ENV};
pub use mock::MockBackend;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptionResult {
    pub text: String,
    pub confidence: Option<f64>,
    pub latency_ms: f64,
    pub backend_id: String,
}

/// What a backend returns for one attempt; [`transcribe`] adds timing.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub text: String,
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct TranscriptionRequest<'a> {
    pub clip: &'a AudioClip,
    /// Stable identity of the clip, when known (corpus id or upload name).
    pub clip_id: Option<&'a str>,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum TranscribeError {
    #[error("transcription backend timed out after {timeout_ms} ms")]
    BackendTimeout { timeout_ms: u64 },
    #[error("transcription backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("transcription backend rejected the request: {0}")]
    BackendRejected(String),
    #[error("audio is {seconds:.1} s long; backend limit is {limit:.1} s")]
    AudioTooLong { seconds: f64, limit: f64 },
    #[error("unknown transcription backend {0:?}")]
    UnknownBackend(String),
    #[error("transcription backend {0:?} is already registered")]
    DuplicateBackend(String),
    #[error("invalid transcription config: {0}")]
    InvalidConfig(String),
}

impl TranscribeError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, Self::BackendTimeout { .. } | Self::BackendUnavailable(_))
    }
}

/// Implementations must be safe to call from several threads at once.
pub trait TranscriptionBackend: Send + Sync {
    fn id(&self) -> &str;

    /// Longest clip the backend accepts, if bounded.
    fn max_audio_seconds(&self) -> Option<f64> {
        None
    }

    /// One attempt. `budget` is the time left before the caller gives up.
    fn transcribe_once(&self, request: &TranscriptionRequest<'_>, budget: Duration) -> Result<Transcript, TranscribeError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranscriptionConfig {
    /// Registered backend name; "none" disables transcription.
    pub backend: String,
    /// Deadline for one `transcribe` call including retries.
    pub timeout_ms: u64,
    pub max_retries: u32,
    /// First backoff delay; doubles per retry.
    pub backoff_ms: u64,
    pub max_backoff_ms: u64,
    /// Base URL for the HTTP backend.
    pub endpoint: Option<String>,
    /// Two-column `clip_id<TAB>transcript` table for the mock backend.
    pub fixture: Option<PathBuf>,
    pub max_audio_seconds: f64,
    /// On transcription failure, answer from audio alone and flag the
    /// result as degraded instead of failing the request.
    pub audio_only_fallback: bool,
}

impl Default for TranscriptionConfig {
    fn default() -> Self {
        Self {
            backend: "mock".into(),
            timeout_ms: 30_000,
            max_retries: 2,
            backoff_ms: 250,
            max_backoff_ms: 4_000,
            endpoint: None,
            fixture: None,
            max_audio_seconds: 600.0,
            audio_only_fallback: true,
        }
    }
}

impl TranscriptionConfig {
    pub fn issues(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.backend.trim().is_empty() {
            out.push(("backend", "must not be empty".into()));
        }
        if self.timeout_ms == 0 {
            out.push(("timeout_ms", "must be positive".into()));
        }
        if self.max_backoff_ms < self.backoff_ms {
            out.push(("max_backoff_ms", "must be at least backoff_ms".into()));
        }
        if !(self.max_audio_seconds.is_finite() && self.max_audio_seconds > 0.0) {
            out.push(("max_audio_seconds", "must be positive".into()));
        }
        out
    }

    pub fn is_disabled(&self) -> bool {
        self.backend == "none"
    }

    /// Delay before retry number `retry` (0-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let ms = self.backoff_ms.saturating_mul(1u64 << retry.min(20)).min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }
}

/// A backend plus the retry policy it was configured with.
#[derive(Clone)]
pub struct Transcriber {
    backend: Arc<dyn TranscriptionBackend>,
    config: TranscriptionConfig,
}

impl std::fmt::Debug for Transcriber {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transcriber").field("backend", &self.backend.id()).field("config", &self.config).finish()
    }
}

impl Transcriber {
    pub fn new(backend: Arc<dyn TranscriptionBackend>, config: TranscriptionConfig) -> Self {
        Self { backend, config }
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    pub fn config(&self) -> &TranscriptionConfig {
        &self.config
    }

    pub fn transcribe(&self, clip: &AudioClip, clip_id: Option<&str>) -> Result<TranscriptionResult, TranscribeError> {
        transcribe(&self.backend, clip, clip_id, &self.config)
    }
}

/// Runs `backend` under the deadline `cfg.timeout_ms`. Retryable failures
/// are retried up to `cfg.max_retries` times with exponential backoff while
/// the deadline has not passed.
pub fn transcribe(
    backend: &Arc<dyn TranscriptionBackend>,
    clip: &AudioClip,
    clip_id: Option<&str>,
    cfg: &TranscriptionConfig,
) -> Result<TranscriptionResult, TranscribeError> {
    let limit = backend.max_audio_seconds().map_or(cfg.max_audio_seconds, |b| b.min(cfg.max_audio_seconds));
    let seconds = clip.duration_seconds();
    if seconds > limit {
        return Err(TranscribeError::AudioTooLong { seconds, limit });
    }
    let started = Instant::now();
    let deadline = started + Duration::from_millis(cfg.timeout_ms);
    let mut retry = 0;
    loop {
        let remaining = deadline.saturating_duration_since(Instant::now());
        let outcome = if remaining.is_zero() {
            Err(TranscribeError::BackendTimeout { timeout_ms: cfg.timeout_ms })
        } else {
            attempt(backend, clip, clip_id, remaining, cfg.timeout_ms)
        };
        match outcome {
            Ok(t) => {
                return Ok(TranscriptionResult {
                    text: t.text,
                    confidence: t.confidence.map(|c| c.clamp(0.0, 1.0)),
                    latency_ms: started.elapsed().as_secs_f64() * 1e3,
                    backend_id: backend.id().to_string(),
                })
            }
            Err(e) if e.is_retryable() && retry < cfg.max_retries && Instant::now() < deadline => {
                let pause = cfg.backoff(retry);
                log::warn!("transcription attempt {} failed ({e}); retrying in {pause:?}", retry + 1);
                std::thread::sleep(pause);
                retry += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// One attempt on a worker thread so a stuck backend cannot hold the caller
/// past `budget`; the worker is abandoned on timeout.
fn attempt(
    backend: &Arc<dyn TranscriptionBackend>,
    clip: &AudioClip,
    clip_id: Option<&str>,
    budget: Duration,
    timeout_ms: u64,
) -> Result<Transcript, TranscribeError> {
    let (tx, rx) = mpsc::channel();
    let worker = Arc::clone(backend);
    let clip = clip.clone();
    let clip_id = clip_id.map(str::to_owned);
    std::thread::spawn(move || {
        let request = TranscriptionRequest { clip: &clip, clip_id: clip_id.as_deref() };
        let _ = tx.send(worker.transcribe_once(&request, budget));
    });
    match rx.recv_timeout(budget) {
        Ok(result) => result,
        Err(mpsc::RecvTimeoutError::Timeout) => Err(TranscribeError::BackendTimeout { timeout_ms }),
        Err(mpsc::RecvTimeoutError::Disconnected) => Err(TranscribeError::BackendUnavailable("backend worker panicked".into())),
    }
}

pub type BackendFactory = Box<dyn Fn(&TranscriptionConfig) -> Result<Arc<dyn TranscriptionBackend>, TranscribeError> + Send + Sync>;

/// Named backend constructors.
pub struct BackendRegistry {
    factories: BTreeMap<String, BackendFactory>,
}

impl std::fmt::Debug for BackendRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

impl Default for BackendRegistry {
    /// Registry holding "mock" and "http".
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("mock", Box::new(|cfg| Ok(Arc::new(MockBackend::from_config(cfg)?) as Arc<dyn TranscriptionBackend>)))
            .expect("fresh registry");
        r.register("http", Box::new(|cfg| Ok(Arc::new(HttpBackend::from_config(cfg)?) as Arc<dyn TranscriptionBackend>)))
            .expect("fresh registry");
        r
    }
}

impl BackendRegistry {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    pub fn register(&mut self, id: &str, factory: BackendFactory) -> Result<(), TranscribeError> {
        if self.factories.contains_key(id) {
            return Err(TranscribeError::DuplicateBackend(id.to_string()));
        }
        self.factories.insert(id.to_string(), factory);
        Ok(())
    }

    pub fn ids(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    /// Builds the configured backend; `Ok(None)` when transcription is
    /// disabled. Intended to run at startup so bad names fail early.
    pub fn select(&self, cfg: &TranscriptionConfig) -> Result<Option<Transcriber>, TranscribeError> {
        if cfg.is_disabled() {
            return Ok(None);
        }
        let issues = cfg.issues();
        if !issues.is_empty() {
            let msg: Vec<String> = issues.into_iter().map(|(k, v)| format!("transcription.{k}: {v}")).collect();
            return Err(TranscribeError::InvalidConfig(msg.join("; ")));
        }
        let factory = self.factories.get(&cfg.backend).ok_or_else(|| TranscribeError::UnknownBackend(cfg.backend.clone()))?;
        Ok(Some(Transcriber::new(factory(cfg)?, cfg.clone())))
    }
}
