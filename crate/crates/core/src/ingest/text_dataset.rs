use std::path::Path;

use serde::{Deserialize, Serialize};

use super::corpus::{normalize_label, Corpus};
use super::manifest::Split;
use super::IngestError;
use crate::taxonomy::EmotionLabel;
use crate::text::normalize_text;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextRecord {
    pub text_id: String,
    pub content: String,
    pub label: EmotionLabel,
    pub split: Split,
}

/// Column mapping for a delimited tweet table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextSchema {
    pub content_column: String,
    pub label_column: String,
    pub id_column: Option<String>,
    pub delimiter: char,
}

impl Default for TextSchema {
    fn default() -> Self {
        Self {
            content_column: "text".to_string(),
            label_column: "label".to_string(),
            id_column: None,
            delimiter: ',',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum SkipReason {
    UnmappableLabel { label: String },
    EmptyContent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedRow {
    /// 1-based data row number (header excluded).
    pub row: usize,
    #[serde(flatten)]
    pub reason: SkipReason,
}

#[derive(Debug, Clone)]
pub struct TextDataset {
    pub records: Vec<TextRecord>,
    pub skipped: Vec<SkippedRow>,
}

pub fn load_text_dataset(path: &Path, schema: &TextSchema) -> Result<TextDataset, IngestError> {
    let delimiter = u8::try_from(schema.delimiter)
        .map_err(|_| IngestError::MissingColumn(format!("delimiter {:?} is not ASCII", schema.delimiter)))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let content_idx = column(&schema.content_column)?;
    let label_idx = column(&schema.label_column)?;
    let id_idx = schema.id_column.as_deref().map(column).transpose()?;

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let row_no = i + 1;
        let content = row.get(content_idx).unwrap_or("").trim();
        let raw_label = row.get(label_idx).unwrap_or("");
        if normalize_text(content).is_empty() {
            skipped.push(SkippedRow {
                row: row_no,
                reason: SkipReason::EmptyContent,
            });
            continue;
        }
        let label = match normalize_label(raw_label, Corpus::Custom) {
            Ok(l) => l,
            Err(_) => {
                skipped.push(SkippedRow {
                    row: row_no,
                    reason: SkipReason::UnmappableLabel {
                        label: raw_label.to_string(),
                    },
                });
                continue;
            }
        };
        let text_id = match id_idx.and_then(|j| row.get(j)).map(str::trim) {
            Some(id) if !id.is_empty() => id.to_string(),
            _ => format!("row-{row_no}"),
        };
        records.push(TextRecord {
            text_id,
            content: content.to_string(),
            label,
            split: Split::Train,
        });
    }
    if records.is_empty() {
        return Err(IngestError::EmptyDataset {
            skipped: skipped.len(),
        });
    }
    for s in &skipped {
        log::debug!("skipped tweet row {}: {:?}", s.row, s.reason);
    }
    Ok(TextDataset { records, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_mappable_rows() {
        let f = write_csv("text,label\nso glad,happy\nawful day,sad\nyay,happy\n");
        let ds = load_text_dataset(f.path(), &TextSchema::default()).unwrap();
        assert_eq!(ds.records.len(), 3);
        assert!(ds.skipped.is_empty());
        assert_eq!(ds.records[1].label, EmotionLabel::Sad);
        assert_eq!(ds.records[0].text_id, "row-1");
    }

    #[test]
    fn unmappable_label_is_skipped() {
        let f = write_csv("text,label\nso glad,happy\nmeh,boredom\n");
        let ds = load_text_dataset(f.path(), &TextSchema::default()).unwrap();
        assert_eq!(ds.records.len(), 1);
        assert_eq!(ds.skipped.len(), 1);
        assert_eq!(
            ds.skipped[0].reason,
            SkipReason::UnmappableLabel {
                label: "boredom".into()
            }
        );
    }

    #[test]
    fn empty_content_is_skipped_with_reason() {
        let f = write_csv("id;tweet;emotion\n7;hi there;joy\n8;   ;anger\n");
        let schema = TextSchema {
            content_column: "tweet".into(),
            label_column: "emotion".into(),
            id_column: Some("id".into()),
            delimiter: ';',
        };
        let ds = load_text_dataset(f.path(), &schema).unwrap();
        assert_eq!(ds.records.len(), 1);
        assert_eq!(ds.records[0].text_id, "7");
        assert_eq!(ds.records[0].label, EmotionLabel::Happy);
        assert_eq!(ds.skipped[0].row, 2);
        assert_eq!(ds.skipped[0].reason, SkipReason::EmptyContent);
    }

    #[test]
    fn missing_column_and_empty_dataset() {
        let f = write_csv("body,label\nx,happy\n");
        assert!(matches!(
            load_text_dataset(f.path(), &TextSchema::default()),
            Err(IngestError::MissingColumn(c)) if c == "text"
        ));
        let f = write_csv("text,label\nx,boredom\n");
        assert!(matches!(
            load_text_dataset(f.path(), &TextSchema::default()),
            Err(IngestError::EmptyDataset { skipped: 1 })
        ));
    }
}
