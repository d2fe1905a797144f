//! Corpus ingestion: filename parsers for the supported speech corpora, the
//! tweet table loader, and the split manifest.

mod corpus;
mod manifest;
mod text_dataset;

pub use corpus::{normalize_label, parse_corpus_entry, scan_corpus, AudioClipRecord, Corpus, CorpusScan};
pub use manifest::{
    build_manifest, load_manifest, save_manifest, DatasetManifest, ManifestBuild, Record, Split,
    SplitFractions, SplitMode, SplitWarning, MANIFEST_SCHEMA_VERSION,
};
pub use text_dataset::{load_text_dataset, SkipReason, SkippedRow, TextDataset, TextRecord, TextSchema};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed {corpus} filename {path:?}: {reason}")]
    MalformedFilename {
        corpus: Corpus,
        path: PathBuf,
        reason: String,
    },
    #[error("label token {token:?} from {corpus} has no canonical mapping")]
    UnmappableLabel { token: String, corpus: Corpus },
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("no mappable rows ({skipped} skipped)")]
    EmptyDataset { skipped: usize },
    #[error("split fractions {0:?} must be positive and sum to 1")]
    InvalidFractions([f64; 3]),
    #[error("cannot build a manifest from zero records")]
    NoRecords,
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
