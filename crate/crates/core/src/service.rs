//! HTTP scoring service over an immutable, shared [`Pipeline`].
//!
//! Endpoints: `POST /v1/predict` (multipart: `audio` WAV part required,
//! optional `transcript` and `clip_id` text parts), `GET /v1/health`,
//! `GET /v1/labels`.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use axum::extract::{DefaultBodyLimit, Multipart, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::config::{AppConfig, ServiceConfig};
use crate::features::{decode_wav, FeatureError};
use crate::fusion::Modality;
use crate::pipeline::{load_pipeline, LoadError, Pipeline, PipelineError, PipelineOutput, PredictRequest};
use crate::taxonomy::EmotionLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub label: String,
    pub probs: BTreeMap<String, f64>,
    pub modalities_used: Vec<Modality>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub transcript: Option<String>,
    pub timing_ms: BTreeMap<String, f64>,
    pub model_versions: BTreeMap<String, String>,
    /// Transcription failed and the answer is audio-only.
    pub degraded: bool,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl PredictResponse {
    pub fn from_output(out: &PipelineOutput, model_versions: &BTreeMap<String, String>) -> Self {
        Self {
            label: out.fused.label.name().to_string(),
            probs: EmotionLabel::ALL.iter().map(|l| (l.name().to_string(), out.fused.distribution.get(*l))).collect(),
            modalities_used: out.fused.modalities_used.clone(),
            transcript: out.transcript.clone(),
            timing_ms: out.timings.as_map(),
            model_versions: model_versions.clone(),
            degraded: out.degraded,
            notes: out.notes.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error_id: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { code: code.into(), message: message.into(), error_id: None } }
    }

    /// 500 with an opaque id; the detail goes to the log only.
    fn internal(detail: impl std::fmt::Display) -> Self {
        let id = uuid::Uuid::new_v4().to_string();
        log::error!("internal error {id}: {detail}");
        let mut e = Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "internal error");
        e.body.error_id = Some(id);
        e
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.body }))).into_response()
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::ClipTooShort { .. } => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "clip_too_short", e.to_string()),
            PipelineError::Feature(FeatureError::InvalidClip(_)) => Self::new(StatusCode::BAD_REQUEST, "invalid_audio", e.to_string()),
            PipelineError::NoInput | PipelineError::NoModalities(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "no_modalities", e.to_string()),
            PipelineError::Transcription(_) => Self::new(StatusCode::SERVICE_UNAVAILABLE, "transcription_unavailable", e.to_string()),
            other => Self::internal(other),
        }
    }
}

/// Shared service state. The pipeline is installed once and never
/// mutated afterwards.
pub struct ServiceState {
    config: ServiceConfig,
    pipeline: OnceLock<Arc<Pipeline>>,
    slots: Semaphore,
}

impl ServiceState {
    pub fn new(config: ServiceConfig) -> Arc<Self> {
        let slots = Semaphore::new(config.workers.max(1));
        Arc::new(Self { config, pipeline: OnceLock::new(), slots })
    }

    /// Makes the models available; later calls are ignored.
    pub fn install(&self, pipeline: Pipeline) {
        let _ = self.pipeline.set(Arc::new(pipeline));
    }

    pub fn is_ready(&self) -> bool {
        self.pipeline.get().is_some()
    }
}

pub fn router(state: Arc<ServiceState>) -> Router {
    let limit = state.config.max_upload_bytes;
    Router::new()
        .route("/v1/predict", post(predict))
        .route("/v1/health", get(health))
        .route("/v1/labels", get(labels))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

async fn health(State(state): State<Arc<ServiceState>>) -> Response {
    match state.pipeline.get() {
        Some(p) => (StatusCode::OK, Json(serde_json::json!({ "status": "ok", "model_versions": p.model_versions() }))).into_response(),
        None => (StatusCode::SERVICE_UNAVAILABLE, Json(serde_json::json!({ "status": "loading" }))).into_response(),
    }
}

async fn labels() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "labels": EmotionLabel::names() }))
}

async fn predict(State(state): State<Arc<ServiceState>>, multipart: Multipart) -> Result<Json<PredictResponse>, ApiError> {
    let budget = Duration::from_millis(state.config.request_timeout_ms);
    match tokio::time::timeout(budget, predict_inner(state.clone(), multipart)).await {
        Ok(r) => r,
        Err(_) => Err(ApiError::new(
            StatusCode::GATEWAY_TIMEOUT,
            "timeout",
            format!("request exceeded {} ms", state.config.request_timeout_ms),
        )),
    }
}

fn multipart_error(e: axum::extract::multipart::MultipartError) -> ApiError {
    let status = e.status();
    if status == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::new(status, "too_large", e.body_text())
    } else {
        ApiError::new(StatusCode::BAD_REQUEST, "malformed_upload", e.body_text())
    }
}

async fn predict_inner(state: Arc<ServiceState>, mut multipart: Multipart) -> Result<Json<PredictResponse>, ApiError> {
    let pipeline = state
        .pipeline
        .get()
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "loading", "models are not loaded yet"))?;
    let mut audio = None;
    let mut transcript = None;
    let mut clip_id = None;
    while let Some(field) = multipart.next_field().await.map_err(multipart_error)? {
        match field.name().unwrap_or_default() {
            "audio" => audio = Some(field.bytes().await.map_err(multipart_error)?),
            "transcript" => transcript = Some(field.text().await.map_err(multipart_error)?),
            "clip_id" => clip_id = Some(field.text().await.map_err(multipart_error)?),
            other => {
                return Err(ApiError::new(StatusCode::BAD_REQUEST, "malformed_upload", format!("unexpected part {other:?}")));
            }
        }
    }
    let audio = audio.ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "malformed_upload", "missing \"audio\" part"))?;
    let clip = decode_wav(&audio).map_err(|e| match e {
        FeatureError::UnsupportedEncoding(_) => ApiError::new(StatusCode::BAD_REQUEST, "unsupported_encoding", e.to_string()),
        other => ApiError::new(StatusCode::BAD_REQUEST, "malformed_upload", other.to_string()),
    })?;

    let _permit = state.slots.acquire().await.map_err(ApiError::internal)?;
    let request = PredictRequest { clip: Some(clip), clip_id, transcript };
    let worker = pipeline.clone();
    let out = tokio::task::spawn_blocking(move || worker.predict(request)).await.map_err(ApiError::internal)??;
    Ok(Json(PredictResponse::from_output(&out, pipeline.model_versions())))
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("invalid transcription setup: {0}")]
    Transcription(#[from] crate::transcribe::TranscribeError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Binds, then loads models in the background; `/v1/health` reports 503
/// until loading finishes. A load failure stops the server with an error.
pub async fn serve(config: AppConfig) -> Result<(), ServeError> {
    crate::transcribe::BackendRegistry::default().select(&config.transcription)?;
    let addr = format!("{}:{}", config.service.bind_address, config.service.port);
    let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|source| ServeError::Bind { addr: addr.clone(), source })?;
    log::info!("listening on {}", listener.local_addr()?);
    let state = ServiceState::new(config.service.clone());
    let loader_state = state.clone();
    let (failed_tx, failed_rx) = tokio::sync::oneshot::channel();
    tokio::task::spawn_blocking(move || match load_pipeline(&config) {
        Ok(p) => {
            log::info!("models loaded: {:?}", p.model_versions());
            loader_state.install(p);
        }
        Err(e) => {
            let _ = failed_tx.send(e);
        }
    });
    let server = axum::serve(listener, router(state)).with_graceful_shutdown(async {
        let _ = tokio::signal::ctrl_c().await;
    });
    tokio::select! {
        r = server => Ok(r?),
        Ok(e) = failed_rx => Err(e.into()),
    }
}
