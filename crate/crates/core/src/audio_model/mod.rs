//! Acoustic classifiers over MFCC input: a 1-D CNN and a stacked LSTM.

mod artifact;
mod config;
mod model;
mod net;
mod train;

pub use artifact::{load_model, save_model, ARTIFACT_SCHEMA_VERSION};
pub use config::{AudioModelConfig, AudioModelKind, ConvBlock, InputMode};
pub use model::{build_model, AudioModel, AudioModelError};
pub use net::NetCache;
pub use train::{eval_loss, train, train_steps, ExtractingSource, FeatureSource, PrecomputedSource};
