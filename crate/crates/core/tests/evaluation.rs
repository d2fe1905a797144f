mod common;

use std::path::PathBuf;

use affectfuse::audio_model::{build_model, AudioModelConfig};
use affectfuse::eval::{
    emit_report, evaluate, latency_benchmark, noise_sweep, per_corpus_breakdown, EvalError, EvalResult, LabelledClip,
    RecordPredictor, ReportInput, DEFAULT_SNR_GRID_DB,
};
use affectfuse::features::{AudioClip, FeatureConfig, Featurizer};
use affectfuse::ingest::{AudioClipRecord, Corpus, Record, Split};
use affectfuse::pipeline::{Pipeline, PredictRequest};
use affectfuse::transcribe::{MockBackend, Transcriber, TranscriptionConfig};
use affectfuse::{EmotionDistribution, EmotionLabel, N_CLASSES};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn audio_record(i: usize, label: EmotionLabel, corpus: Corpus, split: Split) -> Record {
    Record::Audio(AudioClipRecord {
        clip_id: format!("{}/{i}", corpus.tag()),
        source_path: PathBuf::from(format!("/nonexistent/{i}.wav")),
        corpus,
        label,
        speaker_id: format!("s{}", i % 3),
        split,
    })
}

fn balanced(per_class: usize, corpus: Corpus) -> Vec<Record> {
    (0..per_class * N_CLASSES).map(|i| audio_record(i, EmotionLabel::ALL[i % N_CLASSES], corpus, Split::Test)).collect()
}

fn oracle() -> Box<RecordPredictor<'static>> {
    Box::new(|r: &Record| Ok(EmotionDistribution::one_hot(r.label())))
}

fn constant(label: EmotionLabel) -> Box<RecordPredictor<'static>> {
    Box::new(move |_: &Record| Ok(EmotionDistribution::one_hot(label)))
}

#[test]
fn oracle_and_constant_predictors() {
    let recs = balanced(5, Corpus::Ravdess);
    let refs: Vec<&Record> = recs.iter().collect();
    let r = evaluate(&*oracle(), "s", &refs).unwrap();
    assert_eq!(r.overall_accuracy, 1.0);
    for i in 0..N_CLASSES {
        for j in 0..N_CLASSES {
            assert_eq!(r.confusion[i][j], if i == j { 5 } else { 0 });
        }
    }
    let r = evaluate(&*constant(EmotionLabel::Happy), "s", &refs).unwrap();
    assert_eq!(r.overall_accuracy, 0.125);
    assert!(evaluate(&*oracle(), "empty", &[]).is_err());
}

/// A predictor that is right on roughly `skill` of the records, keyed by id.
fn noisy(skill: f64, seed: u64) -> Box<RecordPredictor<'static>> {
    Box::new(move |r: &Record| {
        let h = affectfuse::eval::noise_seed(seed, 0.0, r.id());
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        let label = if rng.random::<f64>() < skill { r.label() } else { EmotionLabel::ALL[rng.random_range(0..N_CLASSES)] };
        Ok(EmotionDistribution::one_hot(label))
    })
}

#[test]
fn identities_hold_on_randomized_fixtures() {
    for trial in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let n = rng.random_range(1..60);
        let recs: Vec<Record> = (0..n)
            .map(|i| {
                let corpus = [Corpus::Ravdess, Corpus::Savee, Corpus::CremaD][rng.random_range(0..3)];
                audio_record(i, EmotionLabel::ALL[rng.random_range(0..N_CLASSES)], corpus, Split::Test)
            })
            .collect();
        let refs: Vec<&Record> = recs.iter().collect();
        let predict = noisy(rng.random(), trial);
        let r = evaluate(&*predict, "t", &refs).unwrap();
        let trace: u64 = (0..N_CLASSES).map(|i| r.confusion[i][i]).sum();
        let total: u64 = r.confusion.iter().flatten().sum();
        assert_eq!(r.overall_accuracy, trace as f64 / total as f64);
        for k in 0..N_CLASSES {
            assert_eq!(r.confusion[k].iter().sum::<u64>(), r.per_class[k].support);
        }
        let mut shuffled = refs.clone();
        shuffled.reverse();
        assert_eq!(evaluate(&*predict, "t", &shuffled).unwrap(), r);

        let manifest = common::manifest_of(recs.clone());
        let b = per_corpus_breakdown(&*predict, &manifest, Split::Test, "x").unwrap();
        let weighted: f64 = b.per_corpus.iter().map(|c| c.n_records as f64 / b.pooled.n_records as f64 * c.overall_accuracy).sum();
        assert!((weighted - b.pooled.overall_accuracy).abs() <= 1e-12, "trial {trial}");
        assert_eq!(b.pooled.confusion, r.confusion);
    }
}

#[test]
fn breakdown_single_corpus_and_missing_corpus() {
    let recs = balanced(3, Corpus::Savee);
    let manifest = common::manifest_of(recs.clone());
    let predict = noisy(0.5, 1);
    let b = per_corpus_breakdown(&*predict, &manifest, Split::Test, "audio").unwrap();
    assert_eq!(b.per_corpus.len(), 1);
    let only = &b.per_corpus[0];
    assert_eq!(only.slice_id, "audio/SAVEE");
    assert_eq!((only.confusion, only.overall_accuracy), (b.pooled.confusion, b.pooled.overall_accuracy));

    let mut with_train_only = recs;
    with_train_only.push(audio_record(99, EmotionLabel::Sad, Corpus::Tess, Split::Train));
    let b = per_corpus_breakdown(&*predict, &common::manifest_of(with_train_only), Split::Test, "audio").unwrap();
    assert_eq!(b.per_corpus.len(), 1);
    assert_eq!(b.notes, vec!["audio/TESS: no test records; skipped".to_string()]);
}

fn sweep_clips() -> Vec<LabelledClip> {
    let mut clips: Vec<LabelledClip> = EmotionLabel::ALL
        .iter()
        .flat_map(|&l| (0..2).map(move |s| LabelledClip { id: format!("{l}-{s}"), clip: common::synthetic_clip(l, s), label: l }))
        .collect();
    clips.push(LabelledClip { id: "silent".into(), clip: AudioClip::silence(3.0, common::SR), label: EmotionLabel::Calm });
    clips
}

#[test]
fn noise_sweep_contract() {
    let fz = Featurizer::new(FeatureConfig::default()).unwrap();
    let clips = sweep_clips();
    let flat = |_: &affectfuse::features::MfccMatrix| Ok(EmotionDistribution::one_hot(EmotionLabel::Fear));
    let curve = noise_sweep(&fz, &flat, &clips, &DEFAULT_SNR_GRID_DB, 7, "const").unwrap();
    assert_eq!(curve.skipped_silent, 1);
    let snrs: Vec<f64> = curve.points.iter().map(|p| p.snr_db).collect();
    assert_eq!(snrs, vec![f64::INFINITY, 30.0, 20.0, 10.0, 0.0]);
    assert!(curve.points.iter().all(|p| p.accuracy == 0.125 && p.n_evaluated == 16));

    let only_clean = noise_sweep(&fz, &flat, &clips, &[], 7, "const").unwrap();
    assert_eq!(only_clean.points.len(), 1);
    assert!(only_clean.points[0].snr_db.is_infinite());

    let unsorted = noise_sweep(&fz, &flat, &clips, &[0.0, 20.0, 20.0, 10.0], 7, "const").unwrap();
    assert!(unsorted.points.windows(2).all(|w| w[0].snr_db > w[1].snr_db));
    assert!(matches!(noise_sweep(&fz, &flat, &clips, &[f64::NAN], 7, "x"), Err(EvalError::InvalidArgument(_))));

    let json = serde_json::to_string(&curve).unwrap();
    assert!(json.contains("\"inf\""));
    assert_eq!(serde_json::from_str::<affectfuse::eval::RobustnessCurve>(&json).unwrap(), curve);
}

#[test]
fn noise_sweep_is_bit_reproducible() {
    let fz = Featurizer::new(FeatureConfig::default()).unwrap();
    let clips = sweep_clips();
    let model = build_model(&AudioModelConfig::default().with_features(fz.config()), 3).unwrap();
    let predict = |m: &affectfuse::features::MfccMatrix| model.predict(m).map_err(|e| EvalError::Predict { id: String::new(), message: e.to_string() });
    let a = noise_sweep(&fz, &predict, &clips, &[10.0, 0.0], 11, "cnn").unwrap();
    let b = noise_sweep(&fz, &predict, &clips, &[10.0, 0.0], 11, "cnn").unwrap();
    assert_eq!(a, b);
    for (p, q) in a.points.iter().zip(&b.points) {
        assert_eq!(p.accuracy.to_bits(), q.accuracy.to_bits());
    }
}

fn bench_pipeline() -> Pipeline {
    let mock = MockBackend::parse("c0\tso furious today\n").unwrap();
    common::small_pipeline(Some(Transcriber::new(std::sync::Arc::new(mock), TranscriptionConfig::default())))
}

#[test]
fn latency_benchmark_contract() {
    let pipeline = bench_pipeline();
    let inputs = vec![PredictRequest { clip: Some(common::synthetic_clip(EmotionLabel::Angry, 0)), clip_id: Some("c0".into()), transcript: None }];
    assert!(matches!(latency_benchmark(&pipeline, &inputs, 0, 9), Err(EvalError::InvalidArgument(_))));
    let report = latency_benchmark(&pipeline, &inputs, 2, 10).unwrap();
    assert_eq!(report.n_samples, 10);
    assert_eq!(report.stages.len(), 6);
    for (stage, s) in &report.stages {
        assert!(s.p50_ms <= s.p95_ms && s.p95_ms <= s.max_ms, "{stage}");
    }
    assert!(report.stages["transcription"].max_ms > 0.0);
    assert!(report.mean_stage_coverage >= 0.9, "coverage {}", report.mean_stage_coverage);
}

fn sample_results() -> Vec<EvalResult> {
    let recs = balanced(2, Corpus::CremaD);
    let refs: Vec<&Record> = recs.iter().collect();
    vec![
        evaluate(&*noisy(0.9, 2), "crema-d/fused", &refs).unwrap(),
        evaluate(&*noisy(0.4, 3), "crema-d/audio", &refs).unwrap(),
    ]
}

#[test]
fn report_files_are_deterministic() {
    let fz = Featurizer::new(FeatureConfig::default()).unwrap();
    let flat = |_: &affectfuse::features::MfccMatrix| Ok(EmotionDistribution::one_hot(EmotionLabel::Fear));
    let curve = noise_sweep(&fz, &flat, &sweep_clips()[..4], &[0.0], 1, "crema-d/audio").unwrap();
    let input = ReportInput { results: sample_results(), curves: vec![curve], latency: None };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let files_a = emit_report(&input, a.path()).unwrap();
    emit_report(&input, b.path()).unwrap();
    let names: Vec<String> = files_a.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(
        names,
        [
            "metrics.csv",
            "confusion_crema-d_fused.csv",
            "confusion_crema-d_fused.png",
            "confusion_crema-d_audio.csv",
            "confusion_crema-d_audio.png",
            "robustness_crema-d_audio.png",
            "summary.md"
        ]
    );
    for name in names.iter().filter(|n| !n.ends_with(".png")) {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let summary = std::fs::read_to_string(a.path().join("summary.md")).unwrap();
    assert!(summary.contains("Fused vs single modality"));
    assert!(image::open(a.path().join("confusion_crema-d_fused.png")).is_ok());
}

#[test]
fn report_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&ReportInput::default(), dir.path()).unwrap();
    assert_eq!(files, vec![dir.path().join("summary.md")]);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let err = emit_report(&ReportInput { results: sample_results(), ..Default::default() }, &blocker.join("sub")).unwrap_err();
    assert!(matches!(err, EvalError::Io(_)));
}

proptest! {
    #[test]
    fn accuracy_identity_is_exact(pairs in proptest::collection::vec((0..N_CLASSES, 0..N_CLASSES), 1..200)) {
        let r = EvalResult::from_pairs("p", pairs.iter().map(|&(t, p)| (EmotionLabel::ALL[t], EmotionLabel::ALL[p]))).unwrap();
        let correct = pairs.iter().filter(|(t, p)| t == p).count();
        prop_assert_eq!(r.overall_accuracy, correct as f64 / pairs.len() as f64);
        prop_assert_eq!(r.n_correct() as usize, correct);
    }
}
