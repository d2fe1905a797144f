use serde::{Deserialize, Serialize};

use crate::features::FeatureConfig;
use crate::N_CLASSES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AudioModelKind {
    Cnn,
    Lstm,
}

impl AudioModelKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Cnn => "cnn",
            Self::Lstm => "lstm",
        }
    }
}

impl std::str::FromStr for AudioModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(Self::Cnn),
            "lstm" => Ok(Self::Lstm),
            other => Err(format!("unknown audio model kind {other:?}")),
        }
    }
}

/// What the network consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// The full `input_frames × input_coeffs` MFCC sequence.
    #[default]
    Sequence,
    /// The time-averaged MFCC vector, read as a length-`input_coeffs`
    /// single-channel sequence.
    Aggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub filters: usize,
    pub kernel: usize,
    pub pool: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioModelConfig {
    pub kind: AudioModelKind,
    pub input_frames: usize,
    pub input_coeffs: usize,
    pub input_mode: InputMode,
    pub conv_blocks: Vec<ConvBlock>,
    pub lstm_units: Vec<usize>,
    pub dense_width: usize,
    pub dropout: f64,
    pub n_classes: usize,
}

impl Default for AudioModelConfig {
    fn default() -> Self {
        let features = FeatureConfig::default();
        Self {
            kind: AudioModelKind::Cnn,
            input_frames: features.n_frames(),
            input_coeffs: features.n_mfcc,
            input_mode: InputMode::Sequence,
            conv_blocks: vec![
                ConvBlock { filters: 64, kernel: 5, pool: 2 },
                ConvBlock { filters: 128, kernel: 5, pool: 2 },
                ConvBlock { filters: 256, kernel: 5, pool: 2 },
            ],
            lstm_units: vec![128, 64],
            dense_width: 128,
            dropout: 0.2,
            n_classes: N_CLASSES,
        }
    }
}

impl AudioModelConfig {
    pub fn lstm() -> Self {
        Self { kind: AudioModelKind::Lstm, ..Self::default() }
    }

    /// Aligns the input shape with what `features` produces.
    pub fn with_features(mut self, features: &FeatureConfig) -> Self {
        self.input_frames = features.n_frames();
        self.input_coeffs = features.n_mfcc;
        self
    }

    /// `(length, channels)` of one network input.
    pub fn input_shape(&self) -> (usize, usize) {
        match self.input_mode {
            InputMode::Sequence => (self.input_frames, self.input_coeffs),
            InputMode::Aggregate => (self.input_coeffs, 1),
        }
    }

    /// Static problems, keyed by field name.
    pub fn issues(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.n_classes != N_CLASSES {
            out.push(("n_classes", format!("must be {N_CLASSES}")));
        }
        if self.input_frames == 0 {
            out.push(("input_frames", "must be positive".into()));
        }
        if self.input_coeffs == 0 {
            out.push(("input_coeffs", "must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            out.push(("dropout", "must be in [0, 1)".into()));
        }
        match self.kind {
            AudioModelKind::Cnn => {
                if self.conv_blocks.is_empty() {
                    out.push(("conv_blocks", "needs at least one block".into()));
                }
                if self.conv_blocks.iter().any(|b| b.filters == 0 || b.kernel == 0 || b.pool == 0) {
                    out.push(("conv_blocks", "filters, kernel and pool must be positive".into()));
                }
                if self.dense_width == 0 {
                    out.push(("dense_width", "must be positive".into()));
                }
            }
            AudioModelKind::Lstm => {
                if self.lstm_units.is_empty() {
                    out.push(("lstm_units", "needs at least one layer".into()));
                }
                if self.lstm_units.contains(&0) {
                    out.push(("lstm_units", "widths must be positive".into()));
                }
            }
        }
        out
    }

    /// Time length after every pooling stage, or the first stage that
    /// reaches zero.
    pub fn pooled_lengths(&self) -> Result<Vec<usize>, usize> {
        let mut len = self.input_shape().0;
        let mut out = Vec::new();
        for (i, b) in self.conv_blocks.iter().enumerate() {
            len /= b.pool;
            if len == 0 {
                return Err(i);
            }
            out.push(len);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_feature_shape() {
        let c = AudioModelConfig::default();
        assert_eq!((c.input_frames, c.input_coeffs), (126, 40));
        assert!(c.issues().is_empty());
        assert!(AudioModelConfig::lstm().issues().is_empty());
    }

    #[test]
    fn eight_pool_blocks_collapse_time() {
        let c = AudioModelConfig {
            input_frames: 130,
            conv_blocks: vec![ConvBlock { filters: 4, kernel: 3, pool: 2 }; 8],
            ..Default::default()
        };
        assert_eq!(c.pooled_lengths(), Err(7));
    }

    #[test]
    fn rejects_bad_fields() {
        let c = AudioModelConfig { n_classes: 7, dropout: 1.0, conv_blocks: vec![], ..Default::default() };
        let keys: Vec<_> = c.issues().into_iter().map(|(k, _)| k).collect();
        assert_eq!(keys, vec!["n_classes", "dropout", "conv_blocks"]);
    }
}
