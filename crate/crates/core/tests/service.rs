mod common;

use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::Duration;

use affectfuse::config::ServiceConfig;
use affectfuse::features::AudioClip;
use affectfuse::fusion::Modality;
use affectfuse::service::{router, PredictResponse, ServiceState};
use affectfuse::transcribe::{
    MockBackend, Transcriber, TranscribeError, Transcript, TranscriptionBackend, TranscriptionConfig, TranscriptionRequest,
};
use affectfuse::EmotionLabel;
use axum::body::Body;
use axum::http::{Request, StatusCode};
use tower::ServiceExt;

struct Counting {
    calls: AtomicU32,
    fail: bool,
}

impl TranscriptionBackend for Counting {
    fn id(&self) -> &str {
        "counting"
    }
    fn transcribe_once(&self, _: &TranscriptionRequest<'_>, _: Duration) -> Result<Transcript, TranscribeError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.fail {
            Err(TranscribeError::BackendUnavailable("down".into()))
        } else {
            Ok(Transcript { text: "so furious today".into(), confidence: Some(0.8) })
        }
    }
}

fn service_cfg() -> ServiceConfig {
    ServiceConfig { max_upload_bytes: 400_000, workers: 2, ..Default::default() }
}

fn transcription_cfg(fallback: bool) -> TranscriptionConfig {
    TranscriptionConfig { max_retries: 0, audio_only_fallback: fallback, ..Default::default() }
}

fn ready_state(backend: Arc<dyn TranscriptionBackend>, fallback: bool) -> Arc<ServiceState> {
    let state = ServiceState::new(service_cfg());
    state.install(common::small_pipeline(Some(Transcriber::new(backend, transcription_cfg(fallback)))));
    state
}

fn predict_request(parts: &[(&str, Option<&str>, &[u8])]) -> Request<Body> {
    Request::post("/v1/predict")
        .header("content-type", format!("multipart/form-data; boundary={}", common::BOUNDARY))
        .body(Body::from(common::multipart_body(parts)))
        .unwrap()
}

async fn send(state: &Arc<ServiceState>, req: Request<Body>) -> (StatusCode, serde_json::Value) {
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap_or(serde_json::Value::Null))
}

fn three_second_wav() -> Vec<u8> {
    common::wav_bytes(&common::synthetic_clip(EmotionLabel::Angry, 1))
}

#[tokio::test]
async fn health_lifecycle_and_labels() {
    let state = ServiceState::new(service_cfg());
    let (status, body) = send(&state, Request::get("/v1/health").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["status"], "loading");
    let wav = three_second_wav();
    let (status, _) = send(&state, predict_request(&[("audio", Some("a.wav"), &wav)])).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);

    state.install(common::small_pipeline(None));
    let (status, body) = send(&state, Request::get("/v1/health").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["model_versions"]["audio"], "cnn-test");

    let (status, body) = send(&state, Request::get("/v1/labels").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    let names: Vec<&str> = body["labels"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(names, EmotionLabel::names());
}

#[tokio::test]
async fn explicit_transcript_bypasses_transcription() {
    let backend = Arc::new(Counting { calls: AtomicU32::new(0), fail: false });
    let state = ready_state(backend.clone(), true);
    let wav = three_second_wav();
    let (status, body) = send(&state, predict_request(&[("audio", Some("a.wav"), &wav), ("transcript", None, b"i want a refund")])).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let resp: PredictResponse = serde_json::from_value(body).unwrap();
    assert_eq!(resp.modalities_used, vec![Modality::Audio, Modality::Text]);
    assert_eq!(resp.transcript.as_deref(), Some("i want a refund"));
    assert_eq!(backend.calls.load(Ordering::SeqCst), 0);
}

#[tokio::test]
async fn mock_transcription_path() {
    let mock = MockBackend::parse("call-17\tso furious today\n").unwrap();
    let state = ready_state(Arc::new(mock), true);
    let wav = three_second_wav();
    let (status, body) = send(&state, predict_request(&[("audio", Some("a.wav"), &wav), ("clip_id", None, b"call-17")])).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let resp: PredictResponse = serde_json::from_value(body).unwrap();
    assert!((resp.probs.values().sum::<f64>() - 1.0).abs() <= 1e-6);
    assert_eq!(resp.probs.len(), 8);
    let best = resp.probs.iter().fold(("", -1.0), |acc, (k, &v)| if v > acc.1 { (k.as_str(), v) } else { acc });
    assert_eq!(resp.label, best.0);
    assert_eq!(resp.modalities_used, vec![Modality::Audio, Modality::Text]);
    assert_eq!(resp.transcript.as_deref(), Some("so furious today"));
    assert!(resp.timing_ms["end_to_end"] > 0.0);

    let (status, body) = send(&state, predict_request(&[("audio", Some("a.wav"), &wav), ("clip_id", None, b"unknown")])).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["modalities_used"], serde_json::json!(["audio"]));
    assert!(!body["degraded"].as_bool().unwrap());
}

#[tokio::test]
async fn transcription_failure_fallback() {
    let backend = Arc::new(Counting { calls: AtomicU32::new(0), fail: true });
    let wav = three_second_wav();
    let (status, body) = send(&ready_state(backend.clone(), true), predict_request(&[("audio", Some("a.wav"), &wav)])).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["degraded"], true);
    assert_eq!(body["modalities_used"], serde_json::json!(["audio"]));
    let (status, body) = send(&ready_state(backend, false), predict_request(&[("audio", Some("a.wav"), &wav)])).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["error"]["code"], "transcription_unavailable");
}

#[tokio::test]
async fn error_statuses() {
    let state = ready_state(Arc::new(MockBackend::default()), true);
    let (status, body) = send(&state, predict_request(&[("audio", Some("a.wav"), b"not a wav file")])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    let (status, _) = send(&state, predict_request(&[("transcript", None, b"hello")])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let short = common::wav_bytes(&AudioClip::new(vec![0.1; 500], 22050).unwrap());
    let (status, body) = send(&state, predict_request(&[("audio", Some("a.wav"), &short)])).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
    assert_eq!(body["error"]["code"], "clip_too_short");

    let big = common::wav_bytes(&common::random_clip(1, 10.0));
    let (status, _) = send(&state, predict_request(&[("audio", Some("a.wav"), &big)])).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);

    let spec = hound::WavSpec { channels: 1, sample_rate: 8000, bits_per_sample: 32, sample_format: hound::SampleFormat::Int };
    let mut cursor = std::io::Cursor::new(Vec::new());
    {
        let mut w = hound::WavWriter::new(&mut cursor, spec).unwrap();
        for _ in 0..100 {
            w.write_sample(0i32).unwrap();
        }
        w.finalize().unwrap();
    }
    let mut alaw = cursor.into_inner();
    alaw[20] = 6;
    let (status, _) = send(&state, predict_request(&[("audio", Some("a.wav"), &alaw)])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn concurrent_requests_agree() {
    let state = ready_state(Arc::new(MockBackend::default()), true);
    let wav = Arc::new(three_second_wav());
    let mut handles = Vec::new();
    for _ in 0..6 {
        let (state, wav) = (state.clone(), wav.clone());
        handles.push(tokio::spawn(async move { send(&state, predict_request(&[("audio", Some("a.wav"), &wav)])).await.1["probs"].clone() }));
    }
    let mut outs = Vec::new();
    for h in handles {
        outs.push(h.await.unwrap());
    }
    assert!(outs.windows(2).all(|w| w[0] == w[1]));
}
