#![allow(dead_code)]

use affectfuse::features::{AudioClip, FeatureConfig, Featurizer, MfccMatrix};
use affectfuse::{EmotionLabel, N_CLASSES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SR: u32 = 22050;

/// Seeded 3-s clip whose spectrum depends on the class: a harmonic tone
/// with a class-specific fundamental, vibrato rate and noise level.
pub fn synthetic_clip(label: EmotionLabel, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(7919).wrapping_add(label.index() as u64));
    let k = label.index() as f64;
    let f0 = 110.0 * 2f64.powf(k / 4.0) * rng.random_range(0.97..1.03);
    let vibrato = 2.0 + k;
    let noise = 0.01 + 0.02 * (k % 3.0);
    let n = 3 * SR as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / SR as f64;
            let env = (std::f64::consts::PI * t / 3.0).sin();
            let f = f0 * (1.0 + 0.01 * (2.0 * std::f64::consts::PI * vibrato * t).sin());
            let tone: f64 = (1..=4).map(|h| (2.0 * std::f64::consts::PI * f * h as f64 * t).sin() / h as f64).sum();
            0.25 * env * tone + noise * rng.random_range(-1.0..1.0)
        })
        .collect();
    AudioClip::new(samples, SR).unwrap()
}

pub fn random_clip(seed: u64, seconds: f64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (seconds * SR as f64) as usize;
    AudioClip::new((0..n).map(|_| rng.random_range(-0.5..0.5)).collect(), SR).unwrap()
}

/// `per_class` clips for every label, with labels cycling.
pub fn labelled_features(per_class: usize, seed: u64) -> (Vec<MfccMatrix>, Vec<EmotionLabel>) {
    let fz = Featurizer::new(FeatureConfig::default()).unwrap();
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    for r in 0..per_class {
        for k in 0..N_CLASSES {
            let label = EmotionLabel::from_index(k).unwrap();
            feats.push(fz.mfcc(&synthetic_clip(label, seed + r as u64)).unwrap());
            labels.push(label);
        }
    }
    (feats, labels)
}

use affectfuse::audio_model::PrecomputedSource;
use affectfuse::ingest::{AudioClipRecord, Corpus, DatasetManifest, Record, Split, SplitFractions, SplitMode};

/// Manifest plus in-memory features: `per_class` train clips and
/// `val_per_class` val clips for every label.
pub fn synthetic_manifest(per_class: usize, val_per_class: usize, seed: u64) -> (DatasetManifest, PrecomputedSource) {
    let fz = Featurizer::new(FeatureConfig::default()).unwrap();
    let mut source = PrecomputedSource { config_hash: fz.config_hash().to_string(), ..Default::default() };
    let mut records = Vec::new();
    for r in 0..per_class + val_per_class {
        let split = if r < per_class { Split::Train } else { Split::Val };
        for label in EmotionLabel::ALL {
            let clip_id = format!("custom/{}_{r}", label.name());
            source.features.insert(clip_id.clone(), fz.mfcc(&synthetic_clip(label, seed + r as u64)).unwrap());
            records.push(Record::Audio(AudioClipRecord {
                clip_id: clip_id.clone(),
                source_path: format!("{clip_id}.wav").into(),
                corpus: Corpus::Custom,
                label,
                speaker_id: format!("s{}", r % 3),
                split,
            }));
        }
    }
    let manifest = DatasetManifest {
        records,
        split_seed: seed,
        split_fractions: SplitFractions::default(),
        split_mode: SplitMode::Record,
        created_at: chrono::Utc::now(),
        corpus_versions: Default::default(),
    };
    (manifest, source)
}

use affectfuse::ingest::TextRecord;

const CUES: [&[&str]; N_CLASSES] = [
    &["furious", "outraged", "livid"],
    &["relaxed", "peaceful", "serene"],
    &["gross", "disgusting", "revolting"],
    &["scared", "terrified", "afraid"],
    &["delighted", "thrilled", "joyful"],
    &["okay", "fine", "ordinary"],
    &["heartbroken", "miserable", "gloomy"],
    &["shocked", "unexpected", "astonished"],
];
const FILLER: [&str; 10] = ["today", "the", "phone", "meeting", "really", "again", "my", "call", "so", "this"];

/// Short sentence containing a cue word for the label.
pub fn synthetic_text(label: EmotionLabel, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(label.index() as u64));
    let cue = CUES[label.index()][rng.random_range(0..3)];
    let mut words: Vec<&str> = (0..rng.random_range(2..6)).map(|_| FILLER[rng.random_range(0..FILLER.len())]).collect();
    let at = rng.random_range(0..=words.len());
    words.insert(at, cue);
    words.join(" ")
}

pub fn synthetic_text_manifest(train_per_class: usize, val_per_class: usize, seed: u64) -> DatasetManifest {
    let mut records = Vec::new();
    for r in 0..train_per_class + val_per_class {
        let split = if r < train_per_class { Split::Train } else { Split::Val };
        for label in EmotionLabel::ALL {
            records.push(Record::Text(TextRecord {
                text_id: format!("t{r}_{}", label.name()),
                content: synthetic_text(label, seed * 1000 + r as u64),
                label,
                split,
            }));
        }
    }
    DatasetManifest {
        records,
        split_seed: seed,
        split_fractions: SplitFractions::default(),
        split_mode: SplitMode::Record,
        created_at: chrono::Utc::now(),
        corpus_versions: Default::default(),
    }
}

/// Minimal HTTP/1.1 file server over `dir`; paths listed in `fail` answer
/// 500. Returns the base URL.
pub fn serve_dir(dir: std::path::PathBuf, fail: Vec<String>) -> String {
    use std::io::{BufRead, BufReader, Write};
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let dir = dir.clone();
            let fail = fail.clone();
            std::thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                loop {
                    let mut h = String::new();
                    if reader.read_line(&mut h).unwrap() == 0 || h == "\r\n" {
                        break;
                    }
                }
                let path = line.split_whitespace().nth(1).unwrap_or("/").to_string();
                let file = path.rsplit('/').next().unwrap_or("");
                let (status, body) = if fail.iter().any(|f| f == file) {
                    ("500 Internal Server Error", b"boom".to_vec())
                } else {
                    match std::fs::read(dir.join(file)) {
                        Ok(b) => ("200 OK", b),
                        Err(_) => ("404 Not Found", b"missing".to_vec()),
                    }
                };
                let head = format!("HTTP/1.1 {status}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n", body.len());
                let _ = stream.write_all(head.as_bytes());
                let _ = stream.write_all(&body);
            });
        }
    });
    format!("http://{addr}")
}

pub fn fixture_dir(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn manifest_of(records: Vec<Record>) -> DatasetManifest {
    DatasetManifest {
        records,
        split_seed: 0,
        split_fractions: SplitFractions::default(),
        split_mode: SplitMode::Record,
        created_at: chrono::Utc::now(),
        corpus_versions: Default::default(),
    }
}

/// Untrained default CNN plus a tiny scratch text model, with an optional
/// transcriber. Enough to exercise every pipeline stage.
pub fn small_pipeline(transcriber: Option<affectfuse::transcribe::Transcriber>) -> affectfuse::pipeline::Pipeline {
    use affectfuse::audio_model::{build_model, AudioModelConfig};
    use affectfuse::text::{EncoderConfig, TextModel, WordPiece};
    let fz = Featurizer::new(FeatureConfig::default()).unwrap();
    let mut audio = build_model(&AudioModelConfig::default().with_features(fz.config()), 0).unwrap();
    audio.set_feature_hash(fz.config_hash());
    let manifest = synthetic_text_manifest(1, 1, 0);
    let texts: Vec<&str> = manifest.records.iter().filter_map(|r| r.as_text()).map(|t| t.content.as_str()).collect();
    let tok = WordPiece::from_corpus(texts, 1);
    let text = TextModel::scratch(Default::default(), EncoderConfig::tiny(tok.len()), tok, 0).unwrap();
    let p = affectfuse::pipeline::Pipeline::new(fz, affectfuse::fusion::FusionConfig::default())
        .with_audio(audio, "cnn-test")
        .with_text(text, "text-test");
    match transcriber {
        Some(t) => p.with_transcriber(t),
        None => p,
    }
}

pub const BOUNDARY: &str = "affectfuse-test-boundary";

/// `multipart/form-data` body; parts with a file name are sent as WAV.
pub fn multipart_body(parts: &[(&str, Option<&str>, &[u8])]) -> Vec<u8> {
    let mut body = Vec::new();
    for (name, file, data) in parts {
        body.extend_from_slice(format!("--{BOUNDARY}\r\n").as_bytes());
        match file {
            Some(f) => body.extend_from_slice(
                format!("Content-Disposition: form-data; name=\"{name}\"; filename=\"{f}\"\r\nContent-Type: audio/wav\r\n\r\n").as_bytes(),
            ),
            None => body.extend_from_slice(format!("Content-Disposition: form-data; name=\"{name}\"\r\n\r\n").as_bytes()),
        }
        body.extend_from_slice(data);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    body
}

pub fn wav_bytes(clip: &AudioClip) -> Vec<u8> {
    affectfuse::features::encode_wav(clip, affectfuse::features::WavEncoding::Pcm16).unwrap()
}
