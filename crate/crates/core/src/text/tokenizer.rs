//! Uncased BERT-style tokenization: basic splitting (lowercase, accent
//! stripping, punctuation isolation) followed by greedy longest-match
//! WordPiece.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
const SPECIALS: [&str; 5] = [PAD, UNK, CLS, SEP, "[MASK]"];
const MAX_WORD_CHARS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct WordPiece {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    unk: usize,
    cls: usize,
    sep: usize,
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c as u32,
            0x00A1 | 0x00A7 | 0x00AB | 0x00B6 | 0x00B7 | 0x00BB | 0x00BF
            | 0x2010..=0x2027 | 0x2030..=0x205E | 0x3001..=0x3003 | 0x3008..=0x3011
            | 0xFF01..=0xFF0F | 0xFF1A..=0xFF20 | 0xFF3B..=0xFF40 | 0xFF5B..=0xFF65)
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x4E00..=0x9FFF | 0x3400..=0x4DBF | 0x20000..=0x2A6DF | 0x2A700..=0x2B73F
        | 0x2B740..=0x2B81F | 0x2B820..=0x2CEAF | 0xF900..=0xFAFF | 0x2F800..=0x2FA1F)
}

/// Lowercased, accent-stripped words and isolated punctuation.
pub fn basic_tokenize(text: &str) -> Vec<String> {
    let mut cleaned = String::with_capacity(text.len());
    for c in text.chars() {
        if c == '\0' || c == '\u{FFFD}' {
            continue;
        }
        if c.is_whitespace() {
            cleaned.push(' ');
        } else if c.is_control() {
            continue;
        } else if is_cjk(c) {
            cleaned.push(' ');
            cleaned.push(c);
            cleaned.push(' ');
        } else {
            cleaned.push(c);
        }
    }
    let mut out = Vec::new();
    for word in cleaned.split_whitespace() {
        let folded: String = word.to_lowercase().nfd().filter(|c| !is_combining_mark(*c)).collect();
        let mut current = String::new();
        for c in folded.chars() {
            if is_punctuation(c) {
                if !current.is_empty() {
                    out.push(std::mem::take(&mut current));
                }
                out.push(c.to_string());
            } else {
                current.push(c);
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
    out
}

impl WordPiece {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, String> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            index.entry(t.clone()).or_insert(i);
        }
        let find = |t: &str| index.get(t).copied().ok_or_else(|| format!("vocabulary lacks {t}"));
        let (unk, cls, sep) = (find(UNK)?, find(CLS)?, find(SEP)?);
        find(PAD)?;
        Ok(Self { tokens, index, unk, cls, sep })
    }

    /// Reads a `vocab.txt` with one token per line.
    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_tokens(text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect())
    }

    /// Vocabulary for training from scratch: special tokens, every character
    /// seen (bare and as a continuation piece), then words occurring at least
    /// `min_count` times.
    pub fn from_corpus<'a>(texts: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut words: BTreeMap<String, usize> = BTreeMap::new();
        let mut chars = std::collections::BTreeSet::new();
        for t in texts {
            for w in basic_tokenize(t) {
                chars.extend(w.chars());
                *words.entry(w).or_default() += 1;
            }
        }
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        for c in &chars {
            tokens.push(c.to_string());
            tokens.push(format!("##{c}"));
        }
        for (w, n) in words {
            if n >= min_count && w.chars().count() > 1 {
                tokens.push(w);
            }
        }
        Self::from_tokens(tokens).expect("specials present")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    fn word_pieces(&self, word: &str, out: &mut Vec<usize>) {
        let chars: Vec<char> = word.chars().collect();
        if chars.len() > MAX_WORD_CHARS {
            out.push(self.unk);
            return;
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                let mut piece: String = chars[start..end].iter().collect();
                if start > 0 {
                    piece.insert_str(0, "##");
                }
                if let Some(&id) = self.index.get(&piece) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => pieces.push(id),
                None => {
                    out.push(self.unk);
                    return;
                }
            }
            start = end;
        }
        out.extend(pieces);
    }

    /// Token ids without special tokens.
    pub fn tokenize(&self, text: &str) -> Vec<usize> {
        let mut out = Vec::new();
        for w in basic_tokenize(text) {
            self.word_pieces(&w, &mut out);
        }
        out
    }

    /// `[CLS] tokens [SEP]`, keeping the longest prefix that fits in
    /// `max_tokens`.
    pub fn encode(&self, text: &str, max_tokens: usize) -> Vec<usize> {
        let mut ids = vec![self.cls];
        let body = self.tokenize(text);
        ids.extend(body.into_iter().take(max_tokens.saturating_sub(2)));
        ids.push(self.sep);
        ids
    }

    pub fn to_file_contents(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> WordPiece {
        let toks = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "un", "##aff", "##able", "happy", "!", "cafe", "##s"];
        WordPiece::from_tokens(toks.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn basic_splitting() {
        assert_eq!(basic_tokenize("Hello, World!!"), vec!["hello", ",", "world", "!", "!"]);
        assert_eq!(basic_tokenize("Café\tnaïve"), vec!["cafe", "naive"]);
        assert_eq!(basic_tokenize("a\u{0}b \u{7}c"), vec!["ab", "c"]);
        assert_eq!(basic_tokenize("中文x"), vec!["中", "文", "x"]);
    }

    #[test]
    fn greedy_longest_match() {
        let v = vocab();
        assert_eq!(v.tokenize("unaffable"), vec![5, 6, 7]);
        assert_eq!(v.tokenize("unaffablex HAPPY!"), vec![1, 8, 9]);
        assert_eq!(v.tokenize("Cafés"), vec![10, 11]);
    }

    #[test]
    fn encode_truncates_to_budget() {
        let v = vocab();
        let ids = v.encode("happy happy happy happy", 4);
        assert_eq!(ids, vec![2, 8, 8, 3]);
        assert_eq!(v.encode("", 8), vec![2, 3]);
    }

    #[test]
    fn corpus_vocab_covers_its_corpus() {
        let v = WordPiece::from_corpus(["i love it", "i hate rain"], 1);
        for t in ["i love it", "i hate rain", "tail"] {
            assert!(!v.tokenize(t).contains(&v.id(UNK).unwrap()), "{t}");
        }
        assert_eq!(v.tokenize("love").len(), 1);
    }
}
