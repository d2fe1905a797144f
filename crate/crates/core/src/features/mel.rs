use ndarray::Array2;

use super::{FeatureConfig, FeatureError};

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// n_mels × (n_fft/2 + 1) triangular filterbank.
///
/// Filter `m` rises from the (m)th to the (m+1)th of `n_mels + 2` points
/// equally spaced in mel between `fmin` and `fmax`, and falls to zero at the
/// (m+2)th; each row is scaled to sum to 1.
pub fn mel_filterbank(cfg: &FeatureConfig) -> Result<Array2<f64>, FeatureError> {
    if !(cfg.fmin < cfg.fmax) {
        return Err(FeatureError::InvalidBand {
            fmin: cfg.fmin,
            fmax: cfg.fmax,
        });
    }
    let n_bins = cfg.n_fft / 2 + 1;
    let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz = f64::from(cfg.target_sample_rate) / cfg.n_fft as f64;

    let mut fb = Array2::<f64>::zeros((cfg.n_mels, n_bins));
    for m in 0..cfg.n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let mut row = fb.row_mut(m);
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let up = (f - left) / (center - left);
            let down = (right - f) / (right - center);
            *w = up.min(down).max(0.0);
        }
        let total: f64 = row.sum();
        if total <= 0.0 {
            return Err(FeatureError::EmptyFilter(m));
        }
        row.mapv_inplace(|w| w / total);
    }
    Ok(fb)
}
