//! Hybrid speech + text emotion recognition.
//!
//! Acoustic clips become MFCC matrices classified by a 1-D CNN or a stacked
//! LSTM; transcripts and tweets go through a fine-tuned DistilBERT-style
//! encoder; the two probability vectors are combined by late fusion. The
//! crate also ships the evaluation harness, a CLI and an HTTP service.

pub mod audio_model;
pub mod cli;
pub mod config;
pub mod eval;
mod artifact;
pub mod features;
pub mod fusion;
pub mod ingest;
pub mod nn;
pub mod pipeline;
pub mod service;
pub mod taxonomy;
pub mod text;
pub mod training;
pub mod transcribe;

pub use taxonomy::{EmotionDistribution, EmotionLabel, N_CLASSES};
