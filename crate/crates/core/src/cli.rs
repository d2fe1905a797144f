//! Command-line front end. Every subcommand composes library operations;
//! exit codes are 0 on success, 1 on a domain error and 2 on a usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::audio_model::{build_model, save_model, AudioModelKind, ExtractingSource, FeatureSource};
use crate::config::AppConfig;
use crate::eval::{
    emit_report, latency_benchmark, load_clips, per_corpus_breakdown, noise_sweep, EvalError, ReportInput,
    DEFAULT_SNR_GRID_DB,
};
use crate::features::{load_wav, FeatureCache, Featurizer};
use crate::ingest::{
    build_manifest, load_manifest, load_text_dataset, save_manifest, scan_corpus, Corpus, Record, Split, SplitFractions,
    SplitMode, TextSchema,
};
use crate::pipeline::{load_pipeline, PredictRequest};
use crate::service::PredictResponse;
use crate::text::{fine_tune, save_text_model, ModelRegistry};
use crate::training::{ArtifactLock, TrainReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "affectfuse", version, about = "Hybrid speech and text emotion recognition")]
pub struct Cli {
    /// JSON configuration file; AFFECTFUSE_SECTION__KEY variables override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan corpora and tweet tables into a split manifest.
    Ingest(IngestArgs),
    /// Extract MFCCs for every audio record into the feature cache.
    Featurize(ManifestArgs),
    /// Train the acoustic classifier.
    TrainAudio(TrainAudioArgs),
    /// Fine-tune the text classifier from the pretrained encoder.
    TrainText(TrainTextArgs),
    /// Score saved models on a manifest split and write a report.
    Evaluate(EvaluateArgs),
    /// Accuracy of the acoustic model under additive noise.
    NoiseSweep(NoiseSweepArgs),
    /// Per-stage latency of the loaded pipeline.
    Bench(BenchArgs),
    /// Fused prediction for one clip and/or transcript.
    Predict(PredictArgs),
    /// Run the HTTP service.
    Serve,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Corpus tag (ravdess, tess, savee, crema_d, emo_db, custom); repeatable.
    #[arg(long = "corpus")]
    pub corpora: Vec<Corpus>,
    /// Root for a single --corpus; otherwise roots come from paths.corpora.
    #[arg(long)]
    pub root: Option<PathBuf>,
    /// Delimited tweet table with `text` and `label` columns.
    #[arg(long)]
    pub text_csv: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Train/val/test fractions.
    #[arg(long, num_args = 3, value_names = ["TRAIN", "VAL", "TEST"])]
    pub fractions: Option<Vec<f64>>,
    /// Keep each speaker within one split.
    #[arg(long)]
    pub speaker_disjoint: bool,
}

#[derive(Debug, Args)]
pub struct ManifestArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainAudioArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Overrides audio_model.kind.
    #[arg(long)]
    pub kind: Option<AudioModelKind>,
    /// Overrides audio_train.epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Artifact directory; defaults to `<paths.artifact_dir>/audio`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainTextArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Report directory; defaults to paths.report_dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NoiseSweepArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// SNR grid in dB, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub snr: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub audio: PathBuf,
    #[arg(long)]
    pub transcript: Option<String>,
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub warmup: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub audio: Option<PathBuf>,
    /// Skips transcription and feeds this text to the text model.
    #[arg(long)]
    pub transcript: Option<String>,
    /// Identifier passed to the transcription backend; defaults to the file stem.
    #[arg(long)]
    pub clip_id: Option<String>,
}

/// Domain failure carrying the message printed to stderr.
#[derive(Debug)]
pub struct CliError(pub String);

impl<E: std::fmt::Display> From<E> for CliError {
    fn from(e: E) -> Self {
        Self(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(CliError(msg)) => {
            eprintln!("error: {msg}");
            EXIT_DOMAIN
        }
    }
}

pub fn execute(cli: Cli) -> CliResult {
    let cfg = AppConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(a) => ingest(&cfg, a),
        Command::Featurize(a) => featurize(&cfg, a),
        Command::TrainAudio(a) => train_audio(cfg, a),
        Command::TrainText(a) => train_text(cfg, a),
        Command::Evaluate(a) => evaluate(&cfg, a),
        Command::NoiseSweep(a) => sweep(&cfg, a),
        Command::Bench(a) => bench(&cfg, a),
        Command::Predict(a) => predict(&cfg, a),
        Command::Serve => serve(cfg),
    }
}

/// Root configured for `corpus`, matching keys case-insensitively.
fn corpus_root(cfg: &AppConfig, corpus: Corpus) -> Option<PathBuf> {
    cfg.paths.corpora.iter().find(|(k, _)| Corpus::from_str(k).ok() == Some(corpus)).map(|(_, v)| v.clone())
}

fn ingest(cfg: &AppConfig, a: IngestArgs) -> CliResult {
    if a.corpora.is_empty() && a.text_csv.is_none() {
        return Err(CliError("nothing to ingest: pass --corpus and/or --text-csv".into()));
    }
    if a.root.is_some() && a.corpora.len() != 1 {
        return Err(CliError("--root applies to exactly one --corpus".into()));
    }
    let mut records = Vec::new();
    for &corpus in &a.corpora {
        let root = a
            .root
            .clone()
            .or_else(|| corpus_root(cfg, corpus))
            .ok_or_else(|| CliError(format!("no root for {}: pass --root or set paths.corpora", corpus.tag())))?;
        let scan = scan_corpus(corpus, &root)?;
        for e in &scan.rejected {
            log::warn!("{e}");
        }
        eprintln!("{}: {} clips, {} rejected", corpus.tag(), scan.records.len(), scan.rejected.len());
        records.extend(scan.records.into_iter().map(Record::Audio));
    }
    if let Some(path) = &a.text_csv {
        let ds = load_text_dataset(path, &TextSchema::default())?;
        eprintln!("{}: {} rows, {} skipped", path.display(), ds.records.len(), ds.skipped.len());
        records.extend(ds.records.into_iter().map(Record::Text));
    }
    let fractions = match a.fractions.as_deref() {
        Some(&[t, v, s]) => SplitFractions::new(t, v, s)?,
        _ => SplitFractions::default(),
    };
    let mode = if a.speaker_disjoint { SplitMode::SpeakerDisjoint } else { SplitMode::Record };
    let built = build_manifest(records, fractions, a.seed, mode)?;
    for w in &built.warnings {
        log::warn!("{w:?}");
    }
    save_manifest(&built.manifest, &a.out)?;
    eprintln!("wrote {} records to {}", built.manifest.records.len(), a.out.display());
    Ok(())
}

fn extracting_source(cfg: &AppConfig) -> Result<ExtractingSource, CliError> {
    let mut source = ExtractingSource::new(Featurizer::new(cfg.feature.clone())?);
    source.cache = Some(FeatureCache::new(&cfg.paths.cache_dir)?);
    Ok(source)
}

fn featurize(cfg: &AppConfig, a: ManifestArgs) -> CliResult {
    use rayon::prelude::*;
    let manifest = load_manifest(&a.manifest)?;
    let source = extracting_source(cfg)?;
    let clips: Vec<_> = manifest.records.iter().filter_map(Record::as_audio).collect();
    let failures: Vec<String> = clips
        .par_iter()
        .filter_map(|r| source.features(r).err().map(|e| format!("{}: {e}", r.clip_id)))
        .collect();
    for f in &failures {
        eprintln!("{f}");
    }
    eprintln!("featurized {} of {} clips into {}", clips.len() - failures.len(), clips.len(), cfg.paths.cache_dir.display());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError(format!("{} clips failed", failures.len())))
    }
}

fn write_report(dir: &Path, report: &mut TrainReport) -> CliResult {
    report.artifact_path = Some(dir.to_path_buf());
    std::fs::write(dir.join("train_report.json"), serde_json::to_vec_pretty(report)?)?;
    println!("{}", serde_json::json!({"artifact": dir, "best_epoch": report.best_epoch, "best_val_accuracy": report.best_val_accuracy}));
    Ok(())
}

fn train_audio(mut cfg: AppConfig, a: TrainAudioArgs) -> CliResult {
    if let Some(kind) = a.kind {
        cfg.audio_model.kind = kind;
    }
    if let Some(epochs) = a.epochs {
        cfg.audio_train.epochs = epochs;
    }
    let out = a.out.unwrap_or_else(|| cfg.paths.audio_artifact());
    let _lock = ArtifactLock::acquire(&out)?;
    let manifest = load_manifest(&a.manifest)?;
    let source = extracting_source(&cfg)?;
    let mut model = build_model(&cfg.audio_model, cfg.audio_train.seed)?;
    model.set_feature_hash(source.config_hash());
    let mut report = crate::audio_model::train(&mut model, &manifest, &source, &cfg.audio_train)?;
    save_model(&model, &out)?;
    write_report(&out, &mut report)
}

fn train_text(mut cfg: AppConfig, a: TrainTextArgs) -> CliResult {
    if let Some(epochs) = a.epochs {
        cfg.text_train.epochs = epochs;
    }
    let out = a.out.unwrap_or_else(|| cfg.paths.text_artifact());
    let _lock = ArtifactLock::acquire(&out)?;
    let manifest = load_manifest(&a.manifest)?;
    let registry = ModelRegistry::new(cfg.registry.clone());
    let (model, mut report) = fine_tune(&cfg.text_model, &registry, &manifest, &cfg.text_train)?;
    save_text_model(&model, &out)?;
    write_report(&out, &mut report)
}

fn evaluate(cfg: &AppConfig, a: EvaluateArgs) -> CliResult {
    let manifest = load_manifest(&a.manifest)?;
    let pipeline = load_pipeline(cfg)?;
    let source = extracting_source(cfg)?;
    let mut input = ReportInput::default();
    if let Some(model) = pipeline.audio_model() {
        let audio_only = filtered(&manifest, |r| matches!(r, Record::Audio(_)));
        if audio_only.records.iter().any(|r| r.split() == a.split) {
            let predict = |r: &Record| {
                let rec = r.as_audio().expect("audio-only manifest");
                let m = source.features(rec).map_err(|e| EvalError::Feature { id: rec.clip_id.clone(), source: e })?;
                model.predict(&m).map_err(|e| EvalError::Predict { id: rec.clip_id.clone(), message: e.to_string() })
            };
            push_breakdown(&mut input, per_corpus_breakdown(&predict, &audio_only, a.split, "audio")?);
        }
    }
    if let Some(model) = pipeline.text_model() {
        let text_only = filtered(&manifest, |r| matches!(r, Record::Text(_)));
        if text_only.records.iter().any(|r| r.split() == a.split) {
            let predict = |r: &Record| {
                let rec = r.as_text().expect("text-only manifest");
                model.predict_text(&rec.content).map_err(|e| EvalError::Predict { id: rec.text_id.clone(), message: e.to_string() })
            };
            push_breakdown(&mut input, per_corpus_breakdown(&predict, &text_only, a.split, "text")?);
        }
    }
    if input.results.is_empty() {
        return Err(CliError(format!("no {} records for the loaded models", a.split.name())));
    }
    let out = a.out.unwrap_or_else(|| cfg.paths.report_dir.clone());
    emit_report(&input, &out)?;
    for r in &input.results {
        println!("{}", serde_json::json!({"slice": r.slice_id, "accuracy": r.overall_accuracy, "n": r.n_records}));
    }
    Ok(())
}

fn filtered(m: &crate::ingest::DatasetManifest, keep: impl Fn(&Record) -> bool) -> crate::ingest::DatasetManifest {
    crate::ingest::DatasetManifest { records: m.records.iter().filter(|r| keep(r)).cloned().collect(), ..m.clone() }
}

fn push_breakdown(input: &mut ReportInput, b: crate::eval::Breakdown) {
    for n in &b.notes {
        eprintln!("{n}");
    }
    input.results.extend(b.per_corpus);
    input.results.push(b.pooled);
}

fn sweep(cfg: &AppConfig, a: NoiseSweepArgs) -> CliResult {
    let manifest = load_manifest(&a.manifest)?;
    let pipeline = load_pipeline(cfg)?;
    let model = pipeline.audio_model().ok_or_else(|| CliError("noise-sweep needs an audio model".into()))?;
    let records: Vec<_> = manifest.audio(a.split).collect();
    let clips = load_clips(&records, pipeline.featurizer())?;
    let predict = |m: &crate::features::MfccMatrix| {
        model.predict(m).map_err(|e| EvalError::Predict { id: "sweep".into(), message: e.to_string() })
    };
    let grid = a.snr.unwrap_or_else(|| DEFAULT_SNR_GRID_DB.to_vec());
    let curve = noise_sweep(pipeline.featurizer(), &predict, &clips, &grid, a.seed, &format!("audio/{}", a.split.name()))?;
    let out = a.out.unwrap_or_else(|| cfg.paths.report_dir.clone());
    let input = ReportInput { curves: vec![curve.clone()], ..Default::default() };
    emit_report(&input, &out)?;
    std::fs::write(out.join("robustness.json"), serde_json::to_vec_pretty(&curve)?)?;
    println!("{}", serde_json::to_string(&curve)?);
    Ok(())
}

fn read_clip(cfg: &AppConfig, path: &Path) -> Result<crate::features::AudioClip, CliError> {
    Ok(load_wav(path, cfg.feature.target_sample_rate)?)
}

fn bench(cfg: &AppConfig, a: BenchArgs) -> CliResult {
    let pipeline = load_pipeline(cfg)?;
    let clip = read_clip(cfg, &a.audio)?;
    let request = PredictRequest { clip: Some(clip), clip_id: stem(&a.audio), transcript: a.transcript };
    let report = latency_benchmark(&pipeline, &[request], a.warmup, a.n)?;
    if let Some(out) = &a.out {
        emit_report(&ReportInput { latency: Some(report.clone()), ..Default::default() }, out)?;
    }
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn stem(path: &Path) -> Option<String> {
    path.file_stem().map(|s| s.to_string_lossy().into_owned())
}

fn predict(cfg: &AppConfig, a: PredictArgs) -> CliResult {
    if a.audio.is_none() && a.transcript.is_none() {
        return Err(CliError("predict needs --audio and/or --transcript".into()));
    }
    let pipeline = load_pipeline(cfg)?;
    let clip = a.audio.as_deref().map(|p| read_clip(cfg, p)).transpose()?;
    let clip_id = a.clip_id.or_else(|| a.audio.as_deref().and_then(stem));
    let out = pipeline.predict(PredictRequest { clip, clip_id, transcript: a.transcript })?;
    let response = PredictResponse::from_output(&out, pipeline.model_versions());
    println!("{}", serde_json::to_string(&response)?);
    Ok(())
}

fn serve(cfg: AppConfig) -> CliResult {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    Ok(runtime.block_on(crate::service::serve(cfg))?)
}
