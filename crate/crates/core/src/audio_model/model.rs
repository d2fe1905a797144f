use ndarray::{Array2, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::config::{AudioModelConfig, AudioModelKind, InputMode};
use super::net::{Mode, Net, NetCache};
use crate::features::MfccMatrix;
use crate::nn::{join, softmax_rows, Module, Param};
use crate::{EmotionDistribution, N_CLASSES};

#[derive(Debug, Error)]
pub enum AudioModelError {
    #[error("invalid audio model config: {0}")]
    InvalidConfig(String),
    #[error("shape error: {0}")]
    ShapeError(String),
    #[error("feature shape {found:?} does not match the model input {expected:?}")]
    ShapeMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),
    #[error("corrupt artifact: {0}")]
    CorruptArtifact(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An acoustic classifier plus the input normalizer fitted on its training
/// features. Immutable during inference.
#[derive(Debug, Clone)]
pub struct AudioModel {
    pub(crate) config: AudioModelConfig,
    pub(crate) feature_hash: Option<String>,
    pub(crate) input_mean: Param,
    pub(crate) input_std: Param,
    pub(crate) net: Net,
}

/// Builds a freshly initialized model; parameters depend only on `(cfg, seed)`.
pub fn build_model(cfg: &AudioModelConfig, seed: u64) -> Result<AudioModel, AudioModelError> {
    let issues = cfg.issues();
    if !issues.is_empty() {
        let msg: Vec<String> = issues.into_iter().map(|(k, v)| format!("{k}: {v}")).collect();
        return Err(AudioModelError::InvalidConfig(msg.join("; ")));
    }
    if cfg.kind == AudioModelKind::Cnn {
        if let Err(stage) = cfg.pooled_lengths() {
            return Err(AudioModelError::ShapeError(format!(
                "pooling in conv block {stage} reduces the time axis of length {} below 1",
                cfg.input_shape().0
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let channels = cfg.input_shape().1;
    Ok(AudioModel {
        config: cfg.clone(),
        feature_hash: None,
        input_mean: Param::buffer(Array2::zeros((1, channels))),
        input_std: Param::buffer(Array2::ones((1, channels))),
        net: Net::build(cfg, &mut rng),
    })
}

impl AudioModel {
    pub fn config(&self) -> &AudioModelConfig {
        &self.config
    }

    /// Hash of the FeatureConfig the model was trained on, once trained.
    pub fn feature_hash(&self) -> Option<&str> {
        self.feature_hash.as_deref()
    }

    pub fn set_feature_hash(&mut self, hash: impl Into<String>) {
        self.feature_hash = Some(hash.into());
    }

    /// Stacks features into a normalized `[B, L, C]` network input.
    pub fn input_tensor(&self, features: &[&MfccMatrix]) -> Result<Array3<f64>, AudioModelError> {
        let mut x = self.raw_tensor(features)?;
        self.normalize(&mut x);
        Ok(x)
    }

    pub(crate) fn raw_tensor(&self, features: &[&MfccMatrix]) -> Result<Array3<f64>, AudioModelError> {
        let (len, ch) = self.config.input_shape();
        let mut x = Array3::zeros((features.len(), len, ch));
        for (i, m) in features.iter().enumerate() {
            if let Some(h) = &self.feature_hash {
                if &m.config_hash != h {
                    return Err(AudioModelError::ArtifactMismatch(format!(
                        "features were produced by FeatureConfig {} but the model expects {h}",
                        m.config_hash
                    )));
                }
            }
            let expected = (self.config.input_frames, self.config.input_coeffs);
            let found = (m.n_frames(), m.n_coeffs());
            let shape_ok = match self.config.input_mode {
                InputMode::Sequence => found == expected,
                InputMode::Aggregate => found.1 == expected.1 && found.0 > 0,
            };
            if !shape_ok {
                return Err(AudioModelError::ShapeMismatch { expected, found });
            }
            let mut dst = x.index_axis_mut(Axis(0), i);
            match self.config.input_mode {
                InputMode::Sequence => dst.assign(&m.values),
                InputMode::Aggregate => {
                    let mean = m.values.mean_axis(Axis(0)).expect("non-empty");
                    dst.column_mut(0).assign(&mean);
                }
            }
        }
        Ok(x)
    }

    pub(crate) fn normalize(&self, x: &mut Array3<f64>) {
        let mean = self.input_mean.row();
        let std = self.input_std.row();
        for mut lane in x.lanes_mut(Axis(2)) {
            ndarray::Zip::from(&mut lane)
                .and(&mean)
                .and(&std)
                .for_each(|v, m, s| *v = (*v - m) / s);
        }
    }

    /// Fits per-channel mean and standard deviation on raw inputs.
    pub(crate) fn fit_normalizer(&mut self, raw: &Array3<f64>) {
        let (b, l, c) = raw.dim();
        let flat = raw.view().into_shape_with_order((b * l, c)).expect("contiguous");
        let mean = flat.mean_axis(Axis(0)).expect("non-empty");
        let var = flat.var_axis(Axis(0), 0.0);
        self.input_mean.value.row_mut(0).assign(&mean);
        self.input_std.value.row_mut(0).assign(&var.mapv(|v| v.sqrt().max(1e-8)));
    }

    pub fn logits(&self, x: &Array3<f64>) -> Array2<f64> {
        self.net.forward(x, &mut Mode::Eval).0
    }

    /// Training-mode forward pass (dropout masks, batch statistics).
    pub fn forward_train(&self, x: &Array3<f64>, rng: &mut ChaCha8Rng) -> (Array2<f64>, NetCache) {
        self.net.forward(x, &mut Mode::Train(rng))
    }

    pub fn backward(&mut self, cache: &NetCache, dlogits: &Array2<f64>) {
        self.net.backward(cache, dlogits);
    }

    pub(crate) fn update_running_stats(&mut self, cache: &NetCache) {
        self.net.update_running_stats(cache);
    }

    pub fn predict_tensor(&self, x: &Array3<f64>) -> Vec<EmotionDistribution> {
        softmax_rows(self.logits(x).view())
            .rows()
            .into_iter()
            .map(|r| EmotionDistribution::from_slice(r.as_slice().expect("standard layout")).expect("softmax is a distribution"))
            .collect()
    }

    pub fn predict(&self, features: &MfccMatrix) -> Result<EmotionDistribution, AudioModelError> {
        Ok(self.predict_batch(&[features])?.remove(0))
    }

    pub fn predict_batch(&self, features: &[&MfccMatrix]) -> Result<Vec<EmotionDistribution>, AudioModelError> {
        let x = self.input_tensor(features)?;
        Ok(self.predict_tensor(&x))
    }

    /// Moves output class `i` to position `perm[i]`.
    pub fn permute_output_classes(&mut self, perm: &[usize; N_CLASSES]) {
        let mut seen = [false; N_CLASSES];
        for &p in perm {
            assert!(p < N_CLASSES && !seen[p], "not a permutation");
            seen[p] = true;
        }
        let head = self.net.head_mut();
        let (w, b) = (head.weight.value.clone(), head.bias.value.clone());
        for (old, &new) in perm.iter().enumerate() {
            head.weight.value.row_mut(new).assign(&w.row(old));
            head.bias.value[[0, new]] = b[[0, old]];
        }
    }
}

impl Module for AudioModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        f(join(prefix, "input.mean"), &self.input_mean);
        f(join(prefix, "input.std"), &self.input_std);
        self.net.visit(&join(prefix, "net"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(join(prefix, "input.mean"), &mut self.input_mean);
        f(join(prefix, "input.std"), &mut self.input_std);
        self.net.visit_mut(&join(prefix, "net"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio_model::ConvBlock;

    fn matrix(frames: usize, coeffs: usize, seed: u64) -> MfccMatrix {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MfccMatrix {
            values: Array2::from_shape_simple_fn((frames, coeffs), || rng.random_range(-5.0..5.0)),
            config_hash: "h".into(),
        }
    }

    fn small(kind: AudioModelKind) -> AudioModelConfig {
        AudioModelConfig {
            kind,
            input_frames: 130,
            conv_blocks: vec![ConvBlock { filters: 8, kernel: 3, pool: 2 }; 2],
            lstm_units: vec![8, 6],
            dense_width: 16,
            ..Default::default()
        }
    }

    #[test]
    fn default_cnn_on_130_frames_outputs_eight_probabilities() {
        let cfg = AudioModelConfig { input_frames: 130, ..Default::default() };
        let m = build_model(&cfg, 0).unwrap();
        let d = m.predict(&matrix(130, 40, 1)).unwrap();
        assert_eq!(d.probs().len(), 8);
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn same_seed_same_parameters() {
        for kind in [AudioModelKind::Cnn, AudioModelKind::Lstm] {
            let a = build_model(&small(kind), 9).unwrap();
            let b = build_model(&small(kind), 9).unwrap();
            let c = build_model(&small(kind), 10).unwrap();
            assert_eq!(a.named_tensors(), b.named_tensors());
            assert_ne!(a.named_tensors(), c.named_tensors());
        }
    }

    #[test]
    fn too_much_pooling_is_a_shape_error() {
        let cfg = AudioModelConfig {
            input_frames: 130,
            conv_blocks: vec![ConvBlock { filters: 4, kernel: 3, pool: 2 }; 8],
            ..Default::default()
        };
        assert!(matches!(build_model(&cfg, 0), Err(AudioModelError::ShapeError(_))));
    }

    #[test]
    fn wrong_shape_and_wrong_hash_are_rejected() {
        let mut m = build_model(&small(AudioModelKind::Cnn), 0).unwrap();
        assert!(matches!(m.predict(&matrix(120, 40, 0)), Err(AudioModelError::ShapeMismatch { .. })));
        m.set_feature_hash("other");
        assert!(matches!(m.predict(&matrix(130, 40, 0)), Err(AudioModelError::ArtifactMismatch(_))));
    }

    #[test]
    fn inference_is_deterministic() {
        for kind in [AudioModelKind::Cnn, AudioModelKind::Lstm] {
            let m = build_model(&small(kind), 3).unwrap();
            let x = matrix(130, 40, 5);
            assert_eq!(m.predict(&x).unwrap(), m.predict(&x).unwrap());
        }
    }

    #[test]
    fn aggregate_mode_consumes_mean_vector() {
        let cfg = AudioModelConfig { input_mode: InputMode::Aggregate, ..small(AudioModelKind::Cnn) };
        let m = build_model(&cfg, 0).unwrap();
        let x = matrix(130, 40, 2);
        let t = m.input_tensor(&[&x]).unwrap();
        assert_eq!(t.dim(), (1, 40, 1));
        let mean = x.values.mean_axis(Axis(0)).unwrap();
        assert!((t[[0, 7, 0]] - mean[7]).abs() < 1e-12);
        m.predict(&x).unwrap();
    }

    #[test]
    fn permuting_head_permutes_output() {
        let mut m = build_model(&small(AudioModelKind::Lstm), 4).unwrap();
        let x = matrix(130, 40, 6);
        let before = m.predict(&x).unwrap();
        let perm = [3, 0, 7, 1, 2, 6, 5, 4];
        m.permute_output_classes(&perm);
        let after = m.predict(&x).unwrap();
        for (old, &new) in perm.iter().enumerate() {
            assert!((before.probs()[old] - after.probs()[new]).abs() < 1e-12);
        }
    }
}
