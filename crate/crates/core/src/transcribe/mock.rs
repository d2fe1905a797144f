use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use super::{Transcript, TranscribeError, TranscriptionBackend, TranscriptionConfig, TranscriptionRequest};

/// Fixture-table backend: a pure function of (table, clip id). Known ids
/// yield their transcript with confidence 1; anything else yields empty text
/// with confidence 0.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    table: HashMap<String, String>,
}

impl MockBackend {
    pub fn new(table: HashMap<String, String>) -> Self {
        Self { table }
    }

    /// Reads `clip_id<TAB>transcript` lines. Blank lines and lines starting
    /// with `#` are skipped, as is a leading `clip_id<TAB>transcript` header.
    pub fn from_file(path: &Path) -> Result<Self, TranscribeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TranscribeError::InvalidConfig(format!("mock fixture {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| TranscribeError::InvalidConfig(format!("mock fixture {}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut table = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') || (n == 0 && line == "clip_id\ttranscript") {
                continue;
            }
            let (id, transcript) = line.split_once('\t').ok_or_else(|| format!("line {}: expected two tab-separated columns", n + 1))?;
            if table.insert(id.to_string(), transcript.to_string()).is_some() {
                return Err(format!("line {}: duplicate clip id {id:?}", n + 1));
            }
        }
        Ok(Self { table })
    }

    pub fn from_config(cfg: &TranscriptionConfig) -> Result<Self, TranscribeError> {
        match &cfg.fixture {
            Some(path) => Self::from_file(path),
            None => Ok(Self::default()),
        }
    }

    pub fn lookup(&self, clip_id: Option<&str>) -> Transcript {
        match clip_id.and_then(|id| self.table.get(id)) {
            Some(text) => Transcript { text: text.clone(), confidence: Some(1.0) },
            None => Transcript { text: String::new(), confidence: Some(0.0) },
        }
    }
}

impl TranscriptionBackend for MockBackend {
    fn id(&self) -> &str {
        "mock"
    }

    fn transcribe_once(&self, request: &TranscriptionRequest<'_>, _: Duration) -> Result<Transcript, TranscribeError> {
        Ok(self.lookup(request.clip_id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_echo_and_default() {
        let m = MockBackend::parse("clip_id\ttranscript\nc1\ti want a refund\n# note\n\nc2\t\n").unwrap();
        assert_eq!(m.lookup(Some("c1")), Transcript { text: "i want a refund".into(), confidence: Some(1.0) });
        assert_eq!(m.lookup(Some("c2")).text, "");
        assert_eq!(m.lookup(Some("zzz")), Transcript { text: String::new(), confidence: Some(0.0) });
        assert_eq!(m.lookup(None).confidence, Some(0.0));
    }

    #[test]
    fn malformed_fixture() {
        assert!(MockBackend::parse("only-one-column\n").is_err());
        assert!(MockBackend::parse("a\tx\na\ty\n").is_err());
    }
}
