use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::manifest::Split;
use super::IngestError;
use crate::taxonomy::EmotionLabel;

/// Source corpus of an audio clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Corpus {
    #[serde(rename = "RAVDESS")]
    Ravdess,
    #[serde(rename = "TESS")]
    Tess,
    #[serde(rename = "SAVEE")]
    Savee,
    #[serde(rename = "CREMA_D")]
    CremaD,
    #[serde(rename = "EMO_DB")]
    EmoDb,
    #[serde(rename = "CUSTOM")]
    Custom,
}

impl Corpus {
    pub const ALL: [Corpus; 6] = [
        Corpus::Ravdess,
        Corpus::Tess,
        Corpus::Savee,
        Corpus::CremaD,
        Corpus::EmoDb,
        Corpus::Custom,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Corpus::Ravdess => "RAVDESS",
            Corpus::Tess => "TESS",
            Corpus::Savee => "SAVEE",
            Corpus::CremaD => "CREMA_D",
            Corpus::EmoDb => "EMO_DB",
            Corpus::Custom => "CUSTOM",
        }
    }
}

impl fmt::Display for Corpus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Corpus {
    type Err = String;

    /// Case-insensitive; `-` and `_` are interchangeable.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_uppercase().replace('-', "_");
        Corpus::ALL
            .iter()
            .copied()
            .find(|c| c.tag() == wanted || c.tag().replace('_', "") == wanted)
            .ok_or_else(|| format!("unknown corpus {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AudioClipRecord {
    pub clip_id: String,
    pub source_path: PathBuf,
    pub corpus: Corpus,
    pub label: EmotionLabel,
    pub speaker_id: String,
    pub split: Split,
}

/// Maps a raw label token to the canonical taxonomy.
///
/// Corpus-specific codes (RAVDESS numbers, SAVEE letters, CREMA-D and
/// EMO-DB abbreviations) are consulted first, then the shared synonym table.
pub fn normalize_label(raw: &str, corpus: Corpus) -> Result<EmotionLabel, IngestError> {
    let token = raw.trim().to_lowercase().replace([' ', '-'], "_");
    corpus_code(&token, corpus)
        .or_else(|| synonym(&token))
        .ok_or_else(|| IngestError::UnmappableLabel {
            token: raw.to_string(),
            corpus,
        })
}

fn corpus_code(token: &str, corpus: Corpus) -> Option<EmotionLabel> {
    use EmotionLabel::*;
    match corpus {
        Corpus::Ravdess => match token {
            "01" => Some(Neutral),
            "02" => Some(Calm),
            "03" => Some(Happy),
            "04" => Some(Sad),
            "05" => Some(Angry),
            "06" => Some(Fear),
            "07" => Some(Disgust),
            "08" => Some(Surprise),
            _ => None,
        },
        Corpus::Savee => match token {
            "a" => Some(Angry),
            "d" => Some(Disgust),
            "f" => Some(Fear),
            "h" => Some(Happy),
            "n" => Some(Neutral),
            "sa" => Some(Sad),
            "su" => Some(Surprise),
            _ => None,
        },
        Corpus::CremaD => match token {
            "ang" => Some(Angry),
            "dis" => Some(Disgust),
            "fea" => Some(Fear),
            "hap" => Some(Happy),
            "neu" => Some(Neutral),
            "sad" => Some(Sad),
            _ => None,
        },
        Corpus::Tess => match token {
            "ps" => Some(Surprise),
            _ => None,
        },
        // German initials; "l" (Langeweile, boredom) deliberately has no entry.
        Corpus::EmoDb => match token {
            "w" => Some(Angry),
            "e" => Some(Disgust),
            "a" => Some(Fear),
            "f" => Some(Happy),
            "n" => Some(Neutral),
            "t" => Some(Sad),
            _ => None,
        },
        Corpus::Custom => None,
    }
}

fn synonym(token: &str) -> Option<EmotionLabel> {
    use EmotionLabel::*;
    Some(match token {
        "angry" | "anger" | "mad" => Angry,
        "calm" | "calmness" => Calm,
        "disgust" | "disgusted" => Disgust,
        "fear" | "fearful" | "afraid" | "scared" => Fear,
        "happy" | "happiness" | "joy" => Happy,
        "neutral" => Neutral,
        "sad" | "sadness" => Sad,
        "surprise" | "surprised" | "pleasant_surprise" | "pleasant_surprised" => Surprise,
        _ => return None,
    })
}

/// Parses one corpus file path into a record (split defaults to train until
/// a manifest assigns one).
pub fn parse_corpus_entry(corpus: Corpus, path: &Path) -> Result<AudioClipRecord, IngestError> {
    let malformed = |reason: &str| IngestError::MalformedFilename {
        corpus,
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let file_name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| malformed("no file name"))?;
    let stem = file_name
        .strip_suffix(".wav")
        .or_else(|| file_name.strip_suffix(".WAV"))
        .ok_or_else(|| malformed("expected a .wav extension"))?;
    let parent_dir = path
        .parent()
        .and_then(|p| p.file_name())
        .and_then(|n| n.to_str());

    let (label, speaker_id, clip_stem) = match corpus {
        Corpus::Ravdess => {
            let fields: Vec<&str> = stem.split('-').collect();
            if fields.len() != 7 {
                return Err(malformed("expected 7 dash-separated fields"));
            }
            if !fields.iter().all(|f| f.len() == 2 && f.bytes().all(|b| b.is_ascii_digit())) {
                return Err(malformed("every field must be two digits"));
            }
            let actor: u32 = fields[6].parse().map_err(|_| malformed("bad actor"))?;
            if !(1..=24).contains(&actor) {
                return Err(malformed("actor must be 01..24"));
            }
            let label = normalize_label(fields[2], corpus)?;
            (label, fields[6].to_string(), stem.to_string())
        }
        Corpus::Savee => {
            // Either "DC_sa01" or "sa01" inside a speaker directory.
            let (speaker, rest) = match stem.split_once('_') {
                Some((s, r)) => (s.to_string(), r),
                None => (
                    parent_dir
                        .ok_or_else(|| malformed("no speaker prefix and no parent directory"))?
                        .to_string(),
                    stem,
                ),
            };
            if speaker.is_empty() || !speaker.bytes().all(|b| b.is_ascii_alphabetic()) {
                return Err(malformed("speaker must be alphabetic"));
            }
            let split_at = rest
                .find(|c: char| c.is_ascii_digit())
                .ok_or_else(|| malformed("missing sentence number"))?;
            let (code, number) = rest.split_at(split_at);
            if code.is_empty() || !code.bytes().all(|b| b.is_ascii_alphabetic()) {
                return Err(malformed("missing emotion code"));
            }
            if !number.bytes().all(|b| b.is_ascii_digit()) {
                return Err(malformed("sentence number must be numeric"));
            }
            let label = normalize_label(code, corpus)?;
            (label, speaker.clone(), format!("{speaker}_{rest}"))
        }
        Corpus::CremaD => {
            let fields: Vec<&str> = stem.split('_').collect();
            if fields.len() != 4 {
                return Err(malformed("expected actor_sentence_emotion_level"));
            }
            let actor = fields[0];
            if actor.len() != 4 || !actor.bytes().all(|b| b.is_ascii_digit()) {
                return Err(malformed("actor must be a 4-digit id"));
            }
            if fields[1].len() != 3 || !fields[1].bytes().all(|b| b.is_ascii_uppercase()) {
                return Err(malformed("sentence must be a 3-letter code"));
            }
            if !matches!(fields[3], "LO" | "MD" | "HI" | "XX" | "X") {
                return Err(malformed("unknown intensity level"));
            }
            let label = normalize_label(fields[2], corpus)?;
            (label, actor.to_string(), stem.to_string())
        }
        Corpus::Tess => {
            let mut parts = stem.splitn(3, '_');
            let speaker = parts.next().unwrap_or_default();
            let word = parts.next().ok_or_else(|| malformed("expected speaker_word_emotion"))?;
            let emotion = parts.next().ok_or_else(|| malformed("expected speaker_word_emotion"))?;
            if !matches!(speaker.to_ascii_uppercase().as_str(), "OAF" | "YAF") {
                return Err(malformed("speaker must be OAF or YAF"));
            }
            if word.is_empty() || emotion.is_empty() {
                return Err(malformed("empty word or emotion"));
            }
            let label = normalize_label(emotion, corpus)?;
            (label, speaker.to_ascii_uppercase(), stem.to_string())
        }
        Corpus::EmoDb => {
            // e.g. "03a01Fa": speaker(2) text(3) emotion(1) version(1)
            let bytes = stem.as_bytes();
            if bytes.len() != 7 || !bytes[..2].iter().all(u8::is_ascii_digit) {
                return Err(malformed("expected 7-character EMO-DB code"));
            }
            let label = normalize_label(&stem[5..6], corpus)?;
            (label, stem[..2].to_string(), stem.to_string())
        }
        Corpus::Custom => {
            // <root>/<label>/<file>.wav; speaker is the filename prefix before '_'.
            let dir = parent_dir.ok_or_else(|| malformed("label directory missing"))?;
            let label = normalize_label(dir, corpus)?;
            let speaker = stem.split_once('_').map(|(s, _)| s).unwrap_or("unknown");
            (label, speaker.to_string(), format!("{dir}_{stem}"))
        }
    };

    Ok(AudioClipRecord {
        clip_id: format!("{}/{}", corpus.tag().to_lowercase(), clip_stem),
        source_path: path.to_path_buf(),
        corpus,
        label,
        speaker_id,
        split: Split::Train,
    })
}

/// Records found under a corpus root, plus the files that failed to parse.
#[derive(Debug)]
pub struct CorpusScan {
    pub records: Vec<AudioClipRecord>,
    pub rejected: Vec<IngestError>,
}

/// Parses every `.wav` file below `root`, in sorted path order.
pub fn scan_corpus(corpus: Corpus, root: &Path) -> Result<CorpusScan, IngestError> {
    if !root.is_dir() {
        return Err(IngestError::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("corpus root {} is not a directory", root.display()),
        )));
    }
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| IngestError::Io(e.into()))?;
        let is_wav = entry.path().extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if !entry.file_type().is_file() || !is_wav {
            continue;
        }
        match parse_corpus_entry(corpus, entry.path()) {
            Ok(r) => records.push(r),
            Err(e) => rejected.push(e),
        }
    }
    Ok(CorpusScan { records, rejected })
}
