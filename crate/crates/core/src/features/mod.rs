//! Waveform handling and MFCC feature extraction.
//!
//! Pipeline: decode → mono mixdown → resample → pad/crop to a fixed
//! duration → framed Hann-windowed STFT → mel filterbank → natural log →
//! orthonormal DCT-II, truncated to `n_mfcc` coefficients per frame.

mod augment;
mod cache;
mod dct;
mod mel;
mod resample;
mod stft;
mod wav;

pub use augment::{augment, AugmentKind, AugmentSpec};
pub use cache::FeatureCache;
pub use dct::dct_matrix;
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz};
pub use resample::resample;
pub use stft::{hann_window, stft_magnitude};
pub use wav::{decode_wav, encode_wav, load_wav, load_wav_native, write_wav, WavEncoding};

use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("unsupported audio encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("corrupt audio file: {0}")]
    CorruptFile(String),
    #[error("clip has {samples} samples, fewer than one frame of {frame_length}")]
    ClipTooShort { samples: usize, frame_length: usize },
    #[error("invalid band: fmin {fmin} Hz must be below fmax {fmax} Hz")]
    InvalidBand { fmin: f64, fmax: f64 },
    #[error("mel filter {0} covers no FFT bin; use fewer mels or a larger n_fft")]
    EmptyFilter(usize),
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
    #[error("invalid clip: {0}")]
    InvalidClip(String),
    #[error("clip sampled at {actual} Hz, features expect {expected} Hz")]
    SampleRateMismatch { expected: u32, actual: u32 },
    #[error("feature matrix has no frames")]
    EmptyMatrix,
    #[error("clip has zero power; additive noise at a fixed SNR is undefined")]
    SilentClip,
    #[error("invalid augmentation: {0}")]
    InvalidAugment(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mono waveform. Samples are finite; decoded audio lies in [-1, 1] but
/// augmented clips may exceed it (no clipping is applied).
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, FeatureError> {
        if sample_rate == 0 {
            return Err(FeatureError::InvalidClip("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(FeatureError::InvalidClip(format!("non-finite sample at {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn silence(seconds: f64, sample_rate: u32) -> Self {
        let n = (seconds * f64::from(sample_rate)).round() as usize;
        Self {
            samples: vec![0.0; n],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64
    }

    /// Resamples to `target` Hz; a no-op when the rate already matches.
    pub fn resampled(self, target: u32) -> Self {
        if self.sample_rate == target {
            return self;
        }
        let ratio = f64::from(target) / f64::from(self.sample_rate);
        Self {
            samples: resample(&self.samples, ratio),
            sample_rate: target,
        }
    }
}

/// Number of samples a clip of `seconds` has at `sample_rate`.
pub fn samples_for(seconds: f64, sample_rate: u32) -> usize {
    (seconds * f64::from(sample_rate)).round() as usize
}

/// Fixes the clip length to `clip_seconds`: short clips are zero-padded at
/// the end, long clips are center-cropped (start offset `(len - target) / 2`).
pub fn pad_or_truncate(clip: &AudioClip, clip_seconds: f64) -> AudioClip {
    let target = samples_for(clip_seconds, clip.sample_rate);
    let n = clip.samples.len();
    let samples = if n >= target {
        let start = (n - target) / 2;
        clip.samples[start..start + target].to_vec()
    } else {
        let mut s = clip.samples.clone();
        s.resize(target, 0.0);
        s
    };
    AudioClip {
        samples,
        sample_rate: clip.sample_rate,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub target_sample_rate: u32,
    pub clip_seconds: f64,
    pub frame_length: usize,
    pub hop_length: usize,
    pub n_fft: usize,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            target_sample_rate: 22050,
            clip_seconds: 3.0,
            frame_length: 2048,
            hop_length: 512,
            n_fft: 2048,
            n_mels: 128,
            n_mfcc: 40,
            fmin: 0.0,
            fmax: 11025.0,
            log_floor: 1e-10,
        }
    }
}

impl FeatureConfig {
    /// Every violated invariant as `(field, message)`.
    pub fn issues(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.target_sample_rate == 0 {
            out.push(("target_sample_rate", "must be positive".to_string()));
        }
        if !(self.clip_seconds.is_finite() && self.clip_seconds > 0.0) {
            out.push(("clip_seconds", "must be positive".to_string()));
        }
        if self.hop_length == 0 {
            out.push(("hop_length", "must be positive".to_string()));
        }
        if self.frame_length == 0 {
            out.push(("frame_length", "must be positive".to_string()));
        }
        if self.frame_length > self.n_fft {
            out.push(("frame_length", format!("must not exceed n_fft ({})", self.n_fft)));
        }
        if self.n_fft < 2 || self.n_fft % 2 != 0 {
            out.push(("n_fft", "must be an even number ≥ 2".to_string()));
        }
        if self.n_mels == 0 {
            out.push(("n_mels", "must be positive".to_string()));
        }
        if self.n_mfcc == 0 || self.n_mfcc > self.n_mels {
            out.push(("n_mfcc", format!("must be in 1..={}", self.n_mels)));
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax) {
            out.push(("fmin", format!("must be ≥ 0 and below fmax ({})", self.fmax)));
        }
        if self.fmax > f64::from(self.target_sample_rate) / 2.0 {
            out.push(("fmax", "must not exceed target_sample_rate / 2".to_string()));
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            out.push(("log_floor", "must be positive".to_string()));
        }
        if self.clip_samples() < self.frame_length {
            out.push(("clip_seconds", "clip is shorter than one frame".to_string()));
        }
        out
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            let msg = issues
                .iter()
                .map(|(k, m)| format!("{k}: {m}"))
                .collect::<Vec<_>>()
                .join("; ");
            Err(FeatureError::InvalidConfig(msg))
        }
    }

    pub fn clip_samples(&self) -> usize {
        samples_for(self.clip_seconds, self.target_sample_rate)
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frames produced from `n_samples` samples (no centering).
    pub fn frames_for(&self, n_samples: usize) -> usize {
        if n_samples < self.frame_length || self.hop_length == 0 {
            0
        } else {
            1 + (n_samples - self.frame_length) / self.hop_length
        }
    }

    /// Frames of a duration-normalized clip.
    pub fn n_frames(&self) -> usize {
        self.frames_for(self.clip_samples())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("FeatureConfig serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Time × coefficient MFCC matrix tagged with the producing config's hash.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccMatrix {
    pub values: Array2<f64>,
    pub config_hash: String,
}

impl MfccMatrix {
    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_coeffs(&self) -> usize {
        self.values.ncols()
    }
}

/// Mean over the time axis.
pub fn aggregate_mean(m: &MfccMatrix) -> Result<Array1<f64>, FeatureError> {
    m.values.mean_axis(Axis(0)).ok_or(FeatureError::EmptyMatrix)
}

/// Precomputed window, FFT plan, filterbank and DCT for one [`FeatureConfig`].
/// Immutable after construction and shareable across threads.
pub struct Featurizer {
    cfg: FeatureConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    filterbank: Array2<f64>,
    dct: Array2<f64>,
    hash: String,
}

impl std::fmt::Debug for Featurizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Featurizer").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl Featurizer {
    pub fn new(cfg: FeatureConfig) -> Result<Self, FeatureError> {
        if cfg.fmin >= cfg.fmax {
            return Err(FeatureError::InvalidBand {
                fmin: cfg.fmin,
                fmax: cfg.fmax,
            });
        }
        cfg.validate()?;
        let filterbank = mel_filterbank(&cfg)?;
        let dct = dct_matrix(cfg.n_mels).slice(ndarray::s![..cfg.n_mfcc, ..]).to_owned();
        let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
        Ok(Self {
            window: hann_window(cfg.frame_length),
            hash: cfg.config_hash(),
            cfg,
            fft,
            filterbank,
            dct,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn filterbank(&self) -> &Array2<f64> {
        &self.filterbank
    }

    fn check_rate(&self, clip: &AudioClip) -> Result<(), FeatureError> {
        if clip.sample_rate != self.cfg.target_sample_rate {
            return Err(FeatureError::SampleRateMismatch {
                expected: self.cfg.target_sample_rate,
                actual: clip.sample_rate,
            });
        }
        Ok(())
    }

    pub fn stft_magnitude(&self, clip: &AudioClip) -> Result<Array2<f64>, FeatureError> {
        stft::magnitude_with(&self.cfg, &self.window, self.fft.as_ref(), clip.samples())
    }

    /// MFCCs of a clip already at the target rate.
    pub fn mfcc(&self, clip: &AudioClip) -> Result<MfccMatrix, FeatureError> {
        self.check_rate(clip)?;
        let mut power = self.stft_magnitude(clip)?;
        power.mapv_inplace(|m| m * m);
        let floor = self.cfg.log_floor;
        let log_mel = power.dot(&self.filterbank.t()).mapv(|e| (e + floor).ln());
        let values = log_mel.dot(&self.dct.t());
        Ok(MfccMatrix {
            values,
            config_hash: self.hash.clone(),
        })
    }

    /// Resample and duration-normalize, then compute MFCCs.
    pub fn extract(&self, clip: AudioClip) -> Result<MfccMatrix, FeatureError> {
        let clip = clip.resampled(self.cfg.target_sample_rate);
        self.mfcc(&pad_or_truncate(&clip, self.cfg.clip_seconds))
    }

    /// Duration-normalized clip at the target rate, ready for [`Self::mfcc`].
    pub fn prepare(&self, clip: AudioClip) -> AudioClip {
        let clip = clip.resampled(self.cfg.target_sample_rate);
        pad_or_truncate(&clip, self.cfg.clip_seconds)
    }
}

/// One-shot MFCC computation; prefer [`Featurizer`] when extracting many clips.
pub fn mfcc(clip: &AudioClip, cfg: &FeatureConfig) -> Result<MfccMatrix, FeatureError> {
    Featurizer::new(cfg.clone())?.mfcc(clip)
}
