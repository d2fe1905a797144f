use std::time::Duration;

use serde::Deserialize;

use super::{Transcript, TranscribeError, TranscriptionBackend, TranscriptionConfig, TranscriptionRequest};
use crate::features::{encode_wav, WavEncoding};

/// Bearer token for the HTTP backend is read from this variable per call.
pub const TOKEN_ENV: &str = "TRANSCRIBE_TOKEN";

/// Posts 16-bit PCM WAV to `endpoint` and expects JSON
/// `{"text": "...", "confidence": 0.9}` (confidence optional).
///
/// 408, 429 and 5xx map to the retryable `BackendUnavailable`, 413 to
/// `AudioTooLong`, and other non-success statuses to `BackendRejected`.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    endpoint: String,
    max_audio_seconds: f64,
}

#[derive(Deserialize)]
struct Reply {
    text: String,
    #[serde(default)]
    confidence: Option<f64>,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, max_audio_seconds: f64) -> Self {
        Self { endpoint: endpoint.into(), max_audio_seconds }
    }

    pub fn from_config(cfg: &TranscriptionConfig) -> Result<Self, TranscribeError> {
        let endpoint = cfg
            .endpoint
            .clone()
            .filter(|e| e.starts_with("http://") || e.starts_with("https://"))
            .ok_or_else(|| TranscribeError::InvalidConfig("transcription.endpoint must be an http(s) URL for the http backend".into()))?;
        Ok(Self::new(endpoint, cfg.max_audio_seconds))
    }
}

impl TranscriptionBackend for HttpBackend {
    fn id(&self) -> &str {
        "http"
    }

    fn max_audio_seconds(&self) -> Option<f64> {
        Some(self.max_audio_seconds)
    }

    fn transcribe_once(&self, request: &TranscriptionRequest<'_>, budget: Duration) -> Result<Transcript, TranscribeError> {
        let body = encode_wav(request.clip, WavEncoding::Pcm16).map_err(|e| TranscribeError::BackendRejected(e.to_string()))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(budget))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(&self.endpoint).header("Content-Type", "audio/wav");
        if let Ok(token) = std::env::var(TOKEN_ENV) {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        if let Some(id) = request.clip_id {
            req = req.header("X-Clip-Id", id);
        }
        let mut resp = req.send(&body[..]).map_err(|e| match e {
            ureq::Error::Timeout(_) => TranscribeError::BackendTimeout { timeout_ms: budget.as_millis() as u64 },
            other => TranscribeError::BackendUnavailable(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => {
                let raw = resp
                    .body_mut()
                    .read_to_string()
                    .map_err(|e| TranscribeError::BackendUnavailable(format!("reading reply: {e}")))?;
                let reply: Reply = serde_json::from_str(&raw)
                    .map_err(|e| TranscribeError::BackendUnavailable(format!("malformed reply: {e}")))?;
                Ok(Transcript { text: reply.text, confidence: reply.confidence })
            }
            413 => Err(TranscribeError::AudioTooLong {
                seconds: request.clip.duration_seconds(),
                limit: self.max_audio_seconds,
            }),
            408 | 429 | 500..=599 => Err(TranscribeError::BackendUnavailable(format!("HTTP {status}"))),
            _ => Err(TranscribeError::BackendRejected(format!("HTTP {status}"))),
        }
    }
}
