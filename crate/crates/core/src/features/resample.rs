use rayon::prelude::*;

/// Zero crossings of the sinc kernel on each side.
const HALF_ZEROS: f64 = 32.0;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Band-limited resampling by `ratio` (output rate / input rate) using a
/// Hann-windowed sinc kernel. The cutoff sits at the lower of the two
/// Nyquist frequencies. Output length is `round(len * ratio)`.
pub fn resample(input: &[f64], ratio: f64) -> Vec<f64> {
    assert!(ratio > 0.0 && ratio.is_finite(), "resample ratio must be positive");
    let out_len = (input.len() as f64 * ratio).round() as usize;
    if input.is_empty() {
        return vec![0.0; out_len];
    }
    let cutoff = ratio.min(1.0);
    let radius = HALF_ZEROS / cutoff;
    let n = input.len() as isize;
    (0..out_len)
        .into_par_iter()
        .map(|j| {
            let t = j as f64 / ratio;
            let first = (t - radius).ceil() as isize;
            let last = (t + radius).floor() as isize;
            let mut acc = 0.0;
            for k in first.max(0)..=last.min(n - 1) {
                let d = t - k as f64;
                let u = d / radius;
                let window = 0.5 + 0.5 * (std::f64::consts::PI * u).cos();
                acc += input[k as usize] * cutoff * sinc(cutoff * d) * window;
            }
            acc
        })
        .collect()
}
