use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::stft::hann_window;
use super::{pad_or_truncate, resample, AudioClip, FeatureError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentKind {
    /// `param` is the target SNR in dB.
    AdditiveNoise,
    /// `param` is the shift in semitones.
    PitchShift,
    /// `param` is the rate factor; output duration is renormalized.
    TimeStretch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub kind: AugmentKind,
    pub param: f64,
    pub seed: u64,
}

/// Applies one waveform augmentation. Deterministic in `(clip, spec)`.
pub fn augment(clip: &AudioClip, spec: &AugmentSpec) -> Result<AudioClip, FeatureError> {
    if !spec.param.is_finite() {
        return Err(FeatureError::InvalidAugment(format!("{:?} parameter must be finite", spec.kind)));
    }
    match spec.kind {
        AugmentKind::AdditiveNoise => add_noise(clip, spec.param, spec.seed),
        AugmentKind::TimeStretch => {
            if spec.param <= 0.0 {
                return Err(FeatureError::InvalidAugment("time_stretch rate must be positive".into()));
            }
            let stretched = if spec.param == 1.0 {
                clip.samples().to_vec()
            } else {
                time_stretch(clip.samples(), spec.param)
            };
            let out = AudioClip::new(stretched, clip.sample_rate())?;
            Ok(pad_or_truncate(&out, clip.duration_seconds()))
        }
        AugmentKind::PitchShift => {
            if spec.param == 0.0 {
                return Ok(clip.clone());
            }
            AudioClip::new(pitch_shift(clip.samples(), spec.param), clip.sample_rate())
        }
    }
}

fn add_noise(clip: &AudioClip, snr_db: f64, seed: u64) -> Result<AudioClip, FeatureError> {
    let signal_power = clip.power();
    if signal_power <= 0.0 {
        return Err(FeatureError::SilentClip);
    }
    let noise_power = signal_power / 10f64.powf(snr_db / 10.0);
    let normal = Normal::new(0.0, noise_power.sqrt())
        .map_err(|e| FeatureError::InvalidAugment(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = clip.samples().iter().map(|&x| x + normal.sample(&mut rng)).collect();
    AudioClip::new(samples, clip.sample_rate())
}

fn analysis_size(len: usize) -> usize {
    let mut n = 2048;
    while n > 64 && n > len {
        n /= 2;
    }
    n
}

/// Centered STFT with zero padding of n_fft/2 on both sides.
fn stft(x: &[f64], n_fft: usize, hop: usize, window: &[f64]) -> Vec<Vec<Complex<f64>>> {
    let pad = n_fft / 2;
    let mut padded = vec![0.0; pad];
    padded.extend_from_slice(x);
    padded.extend(std::iter::repeat(0.0).take(pad));
    let fft = FftPlanner::new().plan_fft_forward(n_fft);
    let n_frames = 1 + (padded.len().saturating_sub(n_fft)) / hop;
    (0..n_frames)
        .map(|t| {
            let mut buf: Vec<Complex<f64>> = (0..n_fft)
                .map(|i| Complex::new(padded[t * hop + i] * window[i], 0.0))
                .collect();
            fft.process(&mut buf);
            buf.truncate(n_fft / 2 + 1);
            buf
        })
        .collect()
}

fn istft(frames: &[Vec<Complex<f64>>], n_fft: usize, hop: usize, window: &[f64], length: usize) -> Vec<f64> {
    let pad = n_fft / 2;
    let total = n_fft + hop * frames.len().saturating_sub(1);
    let mut out = vec![0.0; total.max(pad + length)];
    let mut norm = vec![0.0; out.len()];
    let ifft = FftPlanner::new().plan_fft_inverse(n_fft);
    for (t, half) in frames.iter().enumerate() {
        let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
        buf[..half.len()].copy_from_slice(half);
        for k in 1..n_fft - half.len() + 1 {
            buf[n_fft - k] = half[k].conj();
        }
        ifft.process(&mut buf);
        for i in 0..n_fft {
            out[t * hop + i] += buf[i].re / n_fft as f64 * window[i];
            norm[t * hop + i] += window[i] * window[i];
        }
    }
    for (o, w) in out.iter_mut().zip(&norm) {
        if *w > 1e-10 {
            *o /= w;
        }
    }
    let mut y: Vec<f64> = out.into_iter().skip(pad).take(length).collect();
    y.resize(length, 0.0);
    y
}

/// Phase-vocoder time stretch; output length `round(len / rate)`.
fn time_stretch(x: &[f64], rate: f64) -> Vec<f64> {
    let target = (x.len() as f64 / rate).round() as usize;
    if x.is_empty() || target == 0 {
        return vec![0.0; target];
    }
    let n_fft = analysis_size(x.len());
    let hop = n_fft / 4;
    let window = hann_window(n_fft);
    let spec = stft(x, n_fft, hop, &window);
    let n_bins = n_fft / 2 + 1;
    let advance: Vec<f64> = (0..n_bins)
        .map(|k| 2.0 * std::f64::consts::PI * hop as f64 * k as f64 / n_fft as f64)
        .collect();
    let zero = vec![Complex::new(0.0, 0.0); n_bins];
    let frame = |i: usize| spec.get(i).unwrap_or(&zero);
    let mut phase: Vec<f64> = spec[0].iter().map(|c| c.arg()).collect();
    let mut out = Vec::new();
    let mut t = 0.0;
    while t < spec.len() as f64 {
        let i = t.floor() as usize;
        let frac = t - i as f64;
        let (a, b) = (frame(i), frame(i + 1));
        let cols: Vec<Complex<f64>> = (0..n_bins)
            .map(|k| {
                let mag = (1.0 - frac) * a[k].norm() + frac * b[k].norm();
                Complex::from_polar(mag, phase[k])
            })
            .collect();
        for k in 0..n_bins {
            let mut d = b[k].arg() - a[k].arg() - advance[k];
            d -= 2.0 * std::f64::consts::PI * (d / (2.0 * std::f64::consts::PI)).round();
            phase[k] += advance[k] + d;
        }
        out.push(cols);
        t += rate;
    }
    istft(&out, n_fft, hop, &window, target)
}

/// Shift pitch by `semitones` keeping the length: stretch by the pitch
/// ratio, then resample back to the original number of samples.
fn pitch_shift(x: &[f64], semitones: f64) -> Vec<f64> {
    let ratio = 2f64.powf(semitones / 12.0);
    let stretched = time_stretch(x, 1.0 / ratio);
    let mut y = resample(&stretched, x.len() as f64 / stretched.len().max(1) as f64);
    y.resize(x.len(), 0.0);
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, seconds: f64, amp: f64) -> AudioClip {
        let n = (seconds * 22050.0) as usize;
        let s = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / 22050.0).sin())
            .collect();
        AudioClip::new(s, 22050).unwrap()
    }

    fn dominant_freq(x: &[f64], rate: f64) -> f64 {
        let n = 8192;
        let start = x.len() / 2 - n / 2;
        let mut buf: Vec<Complex<f64>> = x[start..start + n].iter().map(|&v| Complex::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let k = (1..n / 2).max_by(|&a, &b| buf[a].norm().partial_cmp(&buf[b].norm()).unwrap()).unwrap();
        k as f64 * rate / n as f64
    }

    #[test]
    fn noise_hits_target_snr() {
        let clip = sine(440.0, 3.0, 2f64.sqrt());
        assert!((clip.power() - 1.0).abs() < 1e-3);
        let out = augment(&clip, &AugmentSpec { kind: AugmentKind::AdditiveNoise, param: 20.0, seed: 3 }).unwrap();
        let p = out.power();
        assert!((p - 1.01).abs() < 0.05 * 1.01, "power {p}");
        let noise: f64 = out.samples().iter().zip(clip.samples()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / clip.len() as f64;
        let snr = 10.0 * (clip.power() / noise).log10();
        assert!((snr - 20.0).abs() < 0.2, "snr {snr}");
    }

    #[test]
    fn noise_is_seeded() {
        let clip = sine(300.0, 0.5, 0.5);
        let spec = AugmentSpec { kind: AugmentKind::AdditiveNoise, param: 10.0, seed: 11 };
        assert_eq!(augment(&clip, &spec).unwrap(), augment(&clip, &spec).unwrap());
        let other = AugmentSpec { seed: 12, ..spec };
        assert_ne!(augment(&clip, &spec).unwrap(), augment(&clip, &other).unwrap());
    }

    #[test]
    fn silent_clip_cannot_take_noise() {
        let clip = AudioClip::silence(1.0, 22050);
        let spec = AugmentSpec { kind: AugmentKind::AdditiveNoise, param: 10.0, seed: 0 };
        assert!(matches!(augment(&clip, &spec), Err(FeatureError::SilentClip)));
    }

    #[test]
    fn unit_stretch_is_identity() {
        let clip = sine(220.0, 1.0, 0.3);
        let spec = AugmentSpec { kind: AugmentKind::TimeStretch, param: 1.0, seed: 0 };
        assert_eq!(augment(&clip, &spec).unwrap(), clip);
    }

    #[test]
    fn stretch_keeps_pitch_and_duration() {
        let clip = sine(440.0, 2.0, 0.5);
        for rate in [0.8, 1.25] {
            let raw = time_stretch(clip.samples(), rate);
            assert_eq!(raw.len(), (clip.len() as f64 / rate).round() as usize);
            let f = dominant_freq(&raw, 22050.0);
            assert!((f - 440.0).abs() < 6.0, "rate {rate}: {f}");
            let out = augment(&clip, &AugmentSpec { kind: AugmentKind::TimeStretch, param: rate, seed: 0 }).unwrap();
            assert_eq!(out.len(), clip.len());
        }
        let bad = AugmentSpec { kind: AugmentKind::TimeStretch, param: 0.0, seed: 0 };
        assert!(augment(&clip, &bad).is_err());
    }

    #[test]
    fn pitch_shift_moves_frequency() {
        let clip = sine(440.0, 2.0, 0.5);
        let out = augment(&clip, &AugmentSpec { kind: AugmentKind::PitchShift, param: 12.0, seed: 0 }).unwrap();
        assert_eq!(out.len(), clip.len());
        let f = dominant_freq(out.samples(), 22050.0);
        assert!((f - 880.0).abs() < 10.0, "{f}");
        let down = augment(&clip, &AugmentSpec { kind: AugmentKind::PitchShift, param: -5.0, seed: 0 }).unwrap();
        let f = dominant_freq(down.samples(), 22050.0);
        assert!((f - 440.0 * 2f64.powf(-5.0 / 12.0)).abs() < 8.0, "{f}");
    }
}
