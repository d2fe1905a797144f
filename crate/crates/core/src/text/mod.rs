//! Text pipeline: normalization, WordPiece tokenization, a DistilBERT-style
//! encoder with an 8-way head, fine-tuning, checkpoint registry and
//! artifacts.

mod artifact;
mod encoder;
mod fine_tune;
mod model;
mod normalize;
mod registry;
mod tokenizer;

pub use artifact::{load_text_model, save_text_model, TEXT_ARTIFACT_SCHEMA_VERSION};
pub use encoder::{DistilBertClassifier, EncoderConfig, SeqCache};
pub use fine_tune::{fine_tune, fine_tune_model};
pub use model::{TextModel, TextModelConfig, TextModelError, DEFAULT_PRETRAINED_ID};
pub use normalize::normalize_text;
pub use registry::{ModelRegistry, RegistryConfig, CHECKPOINT_FILES};
pub use tokenizer::{basic_tokenize, WordPiece};
