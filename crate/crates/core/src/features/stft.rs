use ndarray::Array2;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{AudioClip, FeatureConfig, FeatureError};

/// Periodic Hann window of `n` points.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// T × (n_fft/2 + 1) magnitude spectrogram. Frames start at sample 0 with
/// no centering padding; each frame is windowed then zero-padded to `n_fft`.
pub fn stft_magnitude(clip: &AudioClip, cfg: &FeatureConfig) -> Result<Array2<f64>, FeatureError> {
    let window = hann_window(cfg.frame_length);
    let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
    magnitude_with(cfg, &window, fft.as_ref(), clip.samples())
}

pub(super) fn magnitude_with(
    cfg: &FeatureConfig,
    window: &[f64],
    fft: &dyn Fft<f64>,
    samples: &[f64],
) -> Result<Array2<f64>, FeatureError> {
    let n_frames = cfg.frames_for(samples.len());
    if n_frames == 0 {
        return Err(FeatureError::ClipTooShort {
            samples: samples.len(),
            frame_length: cfg.frame_length,
        });
    }
    let n_bins = cfg.n_bins();
    let mut out = Array2::<f64>::zeros((n_frames, n_bins));
    out.as_slice_mut()
        .expect("fresh array is contiguous")
        .par_chunks_mut(n_bins)
        .enumerate()
        .for_each_init(
            || {
                (
                    vec![Complex::new(0.0, 0.0); cfg.n_fft],
                    vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()],
                )
            },
            |(buf, scratch), (t, row)| {
                let start = t * cfg.hop_length;
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = if i < cfg.frame_length {
                        Complex::new(samples[start + i] * window[i], 0.0)
                    } else {
                        Complex::new(0.0, 0.0)
                    };
                }
                fft.process_with_scratch(buf, scratch);
                for (dst, src) in row.iter_mut().zip(buf.iter()) {
                    *dst = src.norm();
                }
            },
        );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> FeatureConfig {
        FeatureConfig::default()
    }

    fn direct_dft_power(frame: &[f64], n_fft: usize) -> Vec<f64> {
        (0..=n_fft / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, &x) in frame.iter().enumerate() {
                    let a = -2.0 * std::f64::consts::PI * (k * n) as f64 / n_fft as f64;
                    re += x * a.cos();
                    im += x * a.sin();
                }
                re * re + im * im
            })
            .collect()
    }

    #[test]
    fn zero_clip_gives_zero_matrix() {
        let m = stft_magnitude(&AudioClip::silence(3.0, 22050), &cfg()).unwrap();
        assert!(m.iter().all(|&x| x == 0.0));
        assert_eq!(m.dim(), (cfg().n_frames(), 1025));
    }

    #[test]
    fn bin_centred_sine_peaks_at_its_bin() {
        let c = cfg();
        let k = 93;
        let f = k as f64 * 22050.0 / c.n_fft as f64;
        let samples = (0..c.clip_samples())
            .map(|n| (2.0 * std::f64::consts::PI * f * n as f64 / 22050.0).sin())
            .collect();
        let clip = AudioClip::new(samples, 22050).unwrap();
        let m = stft_magnitude(&clip, &c).unwrap();
        for row in m.rows() {
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax, k);
        }
        // Matches a direct DFT on the first frame.
        let w = hann_window(c.frame_length);
        let frame: Vec<f64> = clip.samples()[..c.frame_length].iter().zip(&w).map(|(x, w)| x * w).collect();
        let direct = direct_dft_power(&frame, c.n_fft);
        for (j, p) in direct.iter().enumerate() {
            assert!((m[[0, j]].powi(2) - p).abs() < 1e-6 * (1.0 + p));
        }
    }

    #[test]
    fn parseval_per_frame() {
        use rand::{Rng, SeedableRng};
        let c = FeatureConfig {
            n_fft: 4096,
            ..cfg()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<f64> = (0..c.clip_samples()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let clip = AudioClip::new(samples, 22050).unwrap();
        let m = stft_magnitude(&clip, &c).unwrap();
        let w = hann_window(c.frame_length);
        let n = c.n_fft;
        for t in [0, 7, m.nrows() - 1] {
            let start = t * c.hop_length;
            let energy: f64 = (0..c.frame_length).map(|i| (clip.samples()[start + i] * w[i]).powi(2)).sum();
            let row = m.row(t);
            let mut spec = row[0].powi(2) + row[n / 2].powi(2);
            spec += 2.0 * (1..n / 2).map(|k| row[k].powi(2)).sum::<f64>();
            spec /= n as f64;
            assert!((energy - spec).abs() <= 1e-6 * energy, "{energy} vs {spec}");
        }
    }

    #[test]
    fn too_short() {
        let clip = AudioClip::new(vec![0.1; 2047], 22050).unwrap();
        assert!(matches!(
            stft_magnitude(&clip, &cfg()),
            Err(FeatureError::ClipTooShort { samples: 2047, .. })
        ));
    }
}
