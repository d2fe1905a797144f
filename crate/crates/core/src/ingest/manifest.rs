use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{AudioClipRecord, Corpus};
use super::text_dataset::TextRecord;
use super::IngestError;
use crate::taxonomy::EmotionLabel;

pub const MANIFEST_SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Record {
    Audio(AudioClipRecord),
    Text(TextRecord),
}

impl Record {
    pub fn id(&self) -> &str {
        match self {
            Record::Audio(r) => &r.clip_id,
            Record::Text(r) => &r.text_id,
        }
    }

    pub fn label(&self) -> EmotionLabel {
        match self {
            Record::Audio(r) => r.label,
            Record::Text(r) => r.label,
        }
    }

    pub fn split(&self) -> Split {
        match self {
            Record::Audio(r) => r.split,
            Record::Text(r) => r.split,
        }
    }

    fn set_split(&mut self, split: Split) {
        match self {
            Record::Audio(r) => r.split = split,
            Record::Text(r) => r.split = split,
        }
    }

    pub fn as_audio(&self) -> Option<&AudioClipRecord> {
        match self {
            Record::Audio(r) => Some(r),
            Record::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> Option<&TextRecord> {
        match self {
            Record::Text(r) => Some(r),
            Record::Audio(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self, IngestError> {
        let f = Self { train, val, test };
        f.validate()?;
        Ok(f)
    }

    fn validate(&self) -> Result<(), IngestError> {
        let all = [self.train, self.val, self.test];
        let ok = all.iter().all(|x| x.is_finite() && *x > 0.0) && (all.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        if ok {
            Ok(())
        } else {
            Err(IngestError::InvalidFractions(all))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Stratified per (modality, label) at record level.
    #[default]
    Record,
    /// Audio speakers never straddle splits; text stays record-level.
    SpeakerDisjoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<Record>,
    pub split_seed: u64,
    pub split_fractions: SplitFractions,
    pub split_mode: SplitMode,
    pub created_at: DateTime<Utc>,
    pub corpus_versions: BTreeMap<String, String>,
}

impl DatasetManifest {
    pub fn audio(&self, split: Split) -> impl Iterator<Item = &AudioClipRecord> {
        self.records
            .iter()
            .filter_map(Record::as_audio)
            .filter(move |r| r.split == split)
    }

    pub fn text(&self, split: Split) -> impl Iterator<Item = &TextRecord> {
        self.records
            .iter()
            .filter_map(Record::as_text)
            .filter(move |r| r.split == split)
    }

    pub fn corpora(&self) -> Vec<Corpus> {
        let mut seen: Vec<Corpus> = self.records.iter().filter_map(Record::as_audio).map(|r| r.corpus).collect();
        seen.sort();
        seen.dedup();
        seen
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitWarning {
    /// Class too small to populate every split; all its records went to train.
    DegenerateClass { label: EmotionLabel, count: usize },
    /// Speaker-disjoint mode left a split without any audio.
    EmptySplit(Split),
}

#[derive(Debug, Clone)]
pub struct ManifestBuild {
    pub manifest: DatasetManifest,
    pub warnings: Vec<SplitWarning>,
}

fn class_seed(seed: u64, salt: u64) -> u64 {
    seed ^ salt.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Split counts for a class of `n` records: (train, val, test).
fn split_counts(n: usize, f: &SplitFractions) -> (usize, usize, usize) {
    let mut val = ((n as f64 * f.val).round() as usize).max(1);
    let mut test = ((n as f64 * f.test).round() as usize).max(1);
    while val + test >= n {
        if val >= test && val > 1 {
            val -= 1;
        } else if test > 1 {
            test -= 1;
        } else {
            break;
        }
    }
    (n - val - test, val, test)
}

/// Assigns every record to exactly one split.
///
/// Pure in (records, fractions, seed, mode): records are ordered by id within
/// each stratum before the seeded shuffle, so input order does not matter.
pub fn build_manifest(
    mut records: Vec<Record>,
    fractions: SplitFractions,
    seed: u64,
    mode: SplitMode,
) -> Result<ManifestBuild, IngestError> {
    fractions.validate()?;
    if records.is_empty() {
        return Err(IngestError::NoRecords);
    }
    let mut ids = HashSet::new();
    for r in &records {
        if !ids.insert(r.id().to_string()) {
            return Err(IngestError::DuplicateId(r.id().to_string()));
        }
    }
    records.sort_by(|a, b| a.id().cmp(b.id()));

    let mut warnings = Vec::new();
    let mut strata: BTreeMap<(u8, EmotionLabel), Vec<usize>> = BTreeMap::new();
    let mut speakers: BTreeMap<(Corpus, String), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        match (mode, r) {
            (SplitMode::SpeakerDisjoint, Record::Audio(a)) => {
                speakers.entry((a.corpus, a.speaker_id.clone())).or_default().push(i);
            }
            (_, Record::Audio(_)) => strata.entry((0, r.label())).or_default().push(i),
            (_, Record::Text(_)) => strata.entry((1, r.label())).or_default().push(i),
        }
    }

    for ((modality, label), mut members) in strata {
        let n = members.len();
        if n < Split::ALL.len() {
            log::warn!("class {label} has {n} records; assigning all to train");
            warnings.push(SplitWarning::DegenerateClass { label, count: n });
            for &i in &members {
                records[i].set_split(Split::Train);
            }
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(class_seed(seed, u64::from(modality) * 16 + label.index() as u64));
        members.shuffle(&mut rng);
        let (_, n_val, n_test) = split_counts(n, &fractions);
        for (k, &i) in members.iter().enumerate() {
            let split = if k < n_test {
                Split::Test
            } else if k < n_test + n_val {
                Split::Val
            } else {
                Split::Train
            };
            records[i].set_split(split);
        }
    }

    if !speakers.is_empty() {
        let total: usize = speakers.values().map(Vec::len).sum();
        let mut groups: Vec<Vec<usize>> = speakers.into_values().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(class_seed(seed, 0xABCD));
        groups.shuffle(&mut rng);
        let test_target = fractions.test * total as f64;
        let val_target = (fractions.test + fractions.val) * total as f64;
        let mut assigned = 0usize;
        let mut used = HashSet::new();
        for group in groups {
            let split = if (assigned as f64) < test_target {
                Split::Test
            } else if (assigned as f64) < val_target {
                Split::Val
            } else {
                Split::Train
            };
            used.insert(split);
            assigned += group.len();
            for i in group {
                records[i].set_split(split);
            }
        }
        for split in Split::ALL {
            if !used.contains(&split) {
                log::warn!("speaker-disjoint split left {split:?} without audio");
                warnings.push(SplitWarning::EmptySplit(split));
            }
        }
    }

    Ok(ManifestBuild {
        manifest: DatasetManifest {
            records,
            split_seed: seed,
            split_fractions: fractions,
            split_mode: mode,
            created_at: Utc::now(),
            corpus_versions: BTreeMap::new(),
        },
        warnings,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestHeader {
    schema_version: String,
    split_seed: u64,
    split_fractions: SplitFractions,
    split_mode: SplitMode,
    created_at: DateTime<Utc>,
    corpus_versions: BTreeMap<String, String>,
    n_records: usize,
}

/// Writes the manifest as JSON lines: one header object, then one record per line.
/// The file is written next to `path` and renamed into place.
pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<(), IngestError> {
    let header = ManifestHeader {
        schema_version: MANIFEST_SCHEMA_VERSION.to_string(),
        split_seed: manifest.split_seed,
        split_fractions: manifest.split_fractions,
        split_mode: manifest.split_mode,
        created_at: manifest.created_at,
        corpus_versions: manifest.corpus_versions.clone(),
        n_records: manifest.records.len(),
    };
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut out = BufWriter::new(fs::File::create(&tmp)?);
        serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        for r in &manifest.records {
            serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest, IngestError> {
    let corrupt = IngestError::CorruptManifest;
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let first = lines.next().ok_or_else(|| corrupt("empty file".into()))??;
    let raw: serde_json::Value =
        serde_json::from_str(&first).map_err(|e| corrupt(format!("header: {e}")))?;
    match raw.get("schema_version") {
        Some(serde_json::Value::String(v)) if v == MANIFEST_SCHEMA_VERSION => {}
        Some(v) => return Err(corrupt(format!("unsupported schema_version {v}"))),
        None => return Err(corrupt("header lacks schema_version".into())),
    }
    let header: ManifestHeader =
        serde_json::from_value(raw).map_err(|e| corrupt(format!("header: {e}")))?;

    let mut records = Vec::with_capacity(header.n_records);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: Record =
            serde_json::from_str(&line).map_err(|e| corrupt(format!("record line {}: {e}", i + 2)))?;
        records.push(r);
    }
    if records.len() != header.n_records {
        return Err(corrupt(format!(
            "header announces {} records, found {}",
            header.n_records,
            records.len()
        )));
    }
    Ok(DatasetManifest {
        records,
        split_seed: header.split_seed,
        split_fractions: header.split_fractions,
        split_mode: header.split_mode,
        created_at: header.created_at,
        corpus_versions: header.corpus_versions,
    })
}
