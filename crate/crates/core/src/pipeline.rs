//! Inference composition: features, audio model, transcription, text model
//! and fusion, with per-stage wall-clock timings. A `Pipeline` is immutable
//! once built and can be shared across threads.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::audio_model::{AudioModel, AudioModelError};
use crate::features::{AudioClip, FeatureError, Featurizer};
use crate::fusion::{fuse, FusedPrediction, FusionConfig, FusionError};
use crate::taxonomy::EmotionDistribution;
use crate::text::{TextModel, TextModelError};
use crate::transcribe::{TranscribeError, Transcriber, TranscriptionResult};

pub const STAGES: [&str; 6] = ["feature_extraction", "audio_predict", "transcription", "text_predict", "fuse", "end_to_end"];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("request has neither audio nor text")]
    NoInput,
    #[error("clip has {samples} samples, fewer than one analysis frame of {frame_length}")]
    ClipTooShort { samples: usize, frame_length: usize },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    AudioModel(#[from] AudioModelError),
    #[error(transparent)]
    TextModel(#[from] TextModelError),
    #[error("transcription failed: {0}")]
    Transcription(#[from] TranscribeError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("no modality could be scored: {0}")]
    NoModalities(String),
}

#[derive(Debug, Clone, Default)]
pub struct PredictRequest {
    pub clip: Option<AudioClip>,
    pub clip_id: Option<String>,
    /// Explicit transcript; when present, transcription is skipped.
    pub transcript: Option<String>,
}

impl PredictRequest {
    pub fn audio(clip: AudioClip) -> Self {
        Self { clip: Some(clip), ..Default::default() }
    }

    pub fn text(text: impl Into<String>) -> Self {
        Self { transcript: Some(text.into()), ..Default::default() }
    }
}

/// Milliseconds per stage; stages that did not run are 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub feature_extraction: f64,
    pub audio_predict: f64,
    pub transcription: f64,
    pub text_predict: f64,
    pub fuse: f64,
    pub end_to_end: f64,
}

impl StageTimings {
    /// Values in [`STAGES`] order.
    pub fn values(&self) -> [f64; 6] {
        [self.feature_extraction, self.audio_predict, self.transcription, self.text_predict, self.fuse, self.end_to_end]
    }

    pub fn stage_sum(&self) -> f64 {
        self.values()[..5].iter().sum()
    }

    pub fn as_map(&self) -> BTreeMap<String, f64> {
        STAGES.iter().zip(self.values()).map(|(k, v)| (k.to_string(), v)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub fused: FusedPrediction,
    pub audio: Option<EmotionDistribution>,
    pub text: Option<EmotionDistribution>,
    /// Transcript that fed the text model, explicit or transcribed.
    pub transcript: Option<String>,
    pub transcription: Option<TranscriptionResult>,
    /// True when transcription failed and the answer is audio-only.
    pub degraded: bool,
    pub notes: Vec<String>,
    pub timings: StageTimings,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

pub struct Pipeline {
    featurizer: Featurizer,
    audio: Option<AudioModel>,
    text: Option<TextModel>,
    transcriber: Option<Transcriber>,
    fusion: FusionConfig,
    model_versions: BTreeMap<String, String>,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("fusion", &self.fusion)
            .field("transcriber", &self.transcriber)
            .field("model_versions", &self.model_versions)
            .finish_non_exhaustive()
    }
}

impl Pipeline {
    pub fn new(featurizer: Featurizer, fusion: FusionConfig) -> Self {
        Self { featurizer, audio: None, text: None, transcriber: None, fusion, model_versions: BTreeMap::new() }
    }

    pub fn with_audio(mut self, model: AudioModel, version: impl Into<String>) -> Self {
        self.model_versions.insert("audio".into(), version.into());
        self.audio = Some(model);
        self
    }

    pub fn with_text(mut self, model: TextModel, version: impl Into<String>) -> Self {
        self.model_versions.insert("text".into(), version.into());
        self.text = Some(model);
        self
    }

    pub fn with_transcriber(mut self, transcriber: Transcriber) -> Self {
        self.model_versions.insert("transcription".into(), transcriber.backend_id().to_string());
        self.transcriber = Some(transcriber);
        self
    }

    pub fn featurizer(&self) -> &Featurizer {
        &self.featurizer
    }

    pub fn audio_model(&self) -> Option<&AudioModel> {
        self.audio.as_ref()
    }

    pub fn text_model(&self) -> Option<&TextModel> {
        self.text.as_ref()
    }

    pub fn transcriber(&self) -> Option<&Transcriber> {
        self.transcriber.as_ref()
    }

    pub fn fusion_config(&self) -> &FusionConfig {
        &self.fusion
    }

    pub fn model_versions(&self) -> &BTreeMap<String, String> {
        &self.model_versions
    }

    /// Acoustic distribution for a clip at any sample rate.
    pub fn predict_audio(&self, model: &AudioModel, clip: AudioClip) -> Result<(EmotionDistribution, f64, f64), PipelineError> {
        let t = Instant::now();
        let clip = clip.resampled(self.featurizer.config().target_sample_rate);
        let frame_length = self.featurizer.config().frame_length;
        if clip.len() < frame_length {
            return Err(PipelineError::ClipTooShort { samples: clip.len(), frame_length });
        }
        let features = self.featurizer.mfcc(&self.featurizer.prepare(clip))?;
        let feature_ms = ms_since(t);
        let t = Instant::now();
        let dist = model.predict(&features)?;
        Ok((dist, feature_ms, ms_since(t)))
    }

    pub fn predict(&self, request: PredictRequest) -> Result<PipelineOutput, PipelineError> {
        let started = Instant::now();
        let PredictRequest { clip, clip_id, transcript } = request;
        if clip.is_none() && transcript.is_none() {
            return Err(PipelineError::NoInput);
        }
        let mut timings = StageTimings::default();
        let mut notes = Vec::new();

        let mut transcription = None;
        let mut degraded = false;
        let transcript = match (transcript, &clip, &self.text, &self.transcriber) {
            (Some(t), _, _, _) => Some(t),
            (None, Some(c), Some(_), Some(tr)) => {
                let t = Instant::now();
                let outcome = tr.transcribe(c, clip_id.as_deref());
                timings.transcription = ms_since(t);
                match outcome {
                    Ok(r) => {
                        let text = r.text.clone();
                        transcription = Some(r);
                        Some(text)
                    }
                    Err(e) if tr.config().audio_only_fallback && self.audio.is_some() => {
                        log::warn!("transcription failed, answering audio-only: {e}");
                        notes.push(format!("transcription failed ({e}); audio-only fallback"));
                        degraded = true;
                        None
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            _ => None,
        };

        let audio = match (clip, &self.audio) {
            (Some(c), Some(model)) => {
                let (d, feature_ms, predict_ms) = self.predict_audio(model, c)?;
                timings.feature_extraction = feature_ms;
                timings.audio_predict = predict_ms;
                Some(d)
            }
            (Some(_), None) => {
                notes.push("no audio model loaded; audio ignored".into());
                None
            }
            (None, _) => None,
        };

        let text = match (&transcript, &self.text) {
            (Some(t), Some(model)) => {
                let start = Instant::now();
                let out = model.predict_text(t);
                timings.text_predict = ms_since(start);
                match out {
                    Ok(d) => Some(d),
                    Err(TextModelError::EmptyText) => {
                        notes.push("transcript is empty; text modality missing".into());
                        None
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            (Some(_), None) => {
                notes.push("no text model loaded; transcript ignored".into());
                None
            }
            (None, _) => None,
        };

        if audio.is_none() && text.is_none() {
            return Err(PipelineError::NoModalities(if notes.is_empty() { "no usable input".into() } else { notes.join("; ") }));
        }
        let t = Instant::now();
        let fused = fuse(audio.as_ref(), text.as_ref(), &self.fusion)?;
        timings.fuse = ms_since(t);
        timings.end_to_end = ms_since(started);
        Ok(PipelineOutput { fused, audio, text, transcript, transcription, degraded, notes, timings })
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("audio artifact: {0}")]
    Audio(#[from] AudioModelError),
    #[error("text artifact: {0}")]
    Text(#[from] TextModelError),
    #[error(transparent)]
    Transcription(#[from] TranscribeError),
    #[error("audio artifact expects features {expected} but the config yields {found}")]
    FeatureMismatch { expected: String, found: String },
    #[error("no model artifacts found under {0}")]
    NoModels(std::path::PathBuf),
}

/// `<kind>@<created_at>` from an artifact's metadata, or "unknown".
pub fn artifact_version(dir: &std::path::Path) -> String {
    let meta = std::fs::read(dir.join("metadata.json")).ok().and_then(|b| serde_json::from_slice::<serde_json::Value>(&b).ok());
    match meta {
        Some(m) => format!(
            "{}@{}",
            m.get("kind").and_then(|v| v.as_str()).unwrap_or("model"),
            m.get("created_at").and_then(|v| v.as_str()).unwrap_or("unknown")
        ),
        None => "unknown".into(),
    }
}

/// Builds the inference pipeline from the configured artifact directory.
/// Either model may be absent, but not both. Transcription is only wired
/// when a text model is present.
pub fn load_pipeline(cfg: &crate::config::AppConfig) -> Result<Pipeline, LoadError> {
    let featurizer = Featurizer::new(cfg.feature.clone())?;
    let transcriber = crate::transcribe::BackendRegistry::default().select(&cfg.transcription)?;
    let audio_dir = cfg.paths.audio_artifact();
    let text_dir = cfg.paths.text_artifact();
    let has_audio = audio_dir.join("metadata.json").exists();
    let has_text = text_dir.join("metadata.json").exists();
    if !has_audio && !has_text {
        return Err(LoadError::NoModels(cfg.paths.artifact_dir.clone()));
    }
    let hash = featurizer.config_hash().to_string();
    let mut pipeline = Pipeline::new(featurizer, cfg.fusion);
    if has_audio {
        let model = crate::audio_model::load_model(&audio_dir)?;
        if let Some(expected) = model.feature_hash() {
            if expected != hash {
                return Err(LoadError::FeatureMismatch { expected: expected.to_string(), found: hash });
            }
        }
        pipeline = pipeline.with_audio(model, artifact_version(&audio_dir));
    }
    if has_text {
        let model = crate::text::load_text_model(&text_dir)?;
        pipeline = pipeline.with_text(model, artifact_version(&text_dir));
        if let Some(t) = transcriber {
            pipeline = pipeline.with_transcriber(t);
        }
    }
    Ok(pipeline)
}
