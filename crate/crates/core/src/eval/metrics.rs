use rayon::prelude::*;
use serde::Serialize;

use super::EvalError;
use crate::fusion::decide;
use crate::ingest::{DatasetManifest, Record, Split};
use crate::taxonomy::{EmotionDistribution, EmotionLabel, N_CLASSES};

/// Prediction callback over manifest records.
pub type RecordPredictor<'a> = dyn Fn(&Record) -> Result<EmotionDistribution, EvalError> + Sync + 'a;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when a denominator was zero and the reported value is 0 by
    /// convention rather than measured.
    pub zero_denominator: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub slice_id: String,
    pub overall_accuracy: f64,
    /// Indexed by class in canonical order.
    pub per_class: [ClassMetrics; N_CLASSES],
    /// Rows are true labels, columns predicted labels.
    pub confusion: [[u64; N_CLASSES]; N_CLASSES],
    pub n_records: u64,
}

impl EvalResult {
    /// Metrics from a filled confusion matrix. `overall_accuracy` is
    /// `trace / total` computed once, so the identity holds bit-exactly.
    pub fn from_confusion(slice_id: impl Into<String>, confusion: [[u64; N_CLASSES]; N_CLASSES]) -> Result<Self, EvalError> {
        let slice_id = slice_id.into();
        let total: u64 = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(EvalError::EmptySlice(slice_id));
        }
        let per_class = std::array::from_fn(|k| {
            let tp = confusion[k][k];
            let support: u64 = confusion[k].iter().sum();
            let predicted: u64 = confusion.iter().map(|row| row[k]).sum();
            let precision = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
            let recall = if support == 0 { 0.0 } else { tp as f64 / support as f64 };
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            ClassMetrics { precision, recall, f1, support, zero_denominator: predicted == 0 || support == 0 }
        });
        Ok(Self { slice_id, overall_accuracy: accuracy_of(&confusion), per_class, confusion, n_records: total })
    }

    pub fn from_pairs(slice_id: impl Into<String>, pairs: impl IntoIterator<Item = (EmotionLabel, EmotionLabel)>) -> Result<Self, EvalError> {
        let mut confusion = [[0u64; N_CLASSES]; N_CLASSES];
        for (truth, pred) in pairs {
            confusion[truth.index()][pred.index()] += 1;
        }
        Self::from_confusion(slice_id, confusion)
    }

    pub fn n_correct(&self) -> u64 {
        (0..N_CLASSES).map(|i| self.confusion[i][i]).sum()
    }

    pub fn macro_f1(&self) -> f64 {
        self.per_class.iter().map(|m| m.f1).sum::<f64>() / N_CLASSES as f64
    }
}

/// `trace / sum` of a confusion matrix; NaN when it is empty.
pub fn accuracy_of(confusion: &[[u64; N_CLASSES]; N_CLASSES]) -> f64 {
    let total: u64 = confusion.iter().flatten().sum();
    let trace: u64 = (0..N_CLASSES).map(|i| confusion[i][i]).sum();
    trace as f64 / total as f64
}

/// Scores every record (in parallel) and tallies `decide` labels. The
/// result does not depend on record order.
pub fn evaluate(predict: &RecordPredictor<'_>, slice_id: &str, records: &[&Record]) -> Result<EvalResult, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptySlice(slice_id.to_string()));
    }
    let predicted: Vec<EmotionLabel> = records
        .par_iter()
        .map(|r| predict(r).map(|d| decide(&d)))
        .collect::<Result<_, _>>()?;
    EvalResult::from_pairs(slice_id, records.iter().map(|r| r.label()).zip(predicted))
}

/// Slice tag used for grouping: the corpus tag for audio, "text" otherwise.
pub fn slice_tag(record: &Record) -> &'static str {
    match record {
        Record::Audio(a) => a.corpus.tag(),
        Record::Text(_) => "text",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Breakdown {
    pub pooled: EvalResult,
    pub per_corpus: Vec<EvalResult>,
    /// Corpora present in the manifest but absent from the split.
    pub notes: Vec<String>,
}

/// One result per corpus present in `split`, plus the pooled result. Slice
/// ids are `<prefix>/<corpus>` and `<prefix>/pooled`.
pub fn per_corpus_breakdown(
    predict: &RecordPredictor<'_>,
    manifest: &DatasetManifest,
    split: Split,
    prefix: &str,
) -> Result<Breakdown, EvalError> {
    let records: Vec<&Record> = manifest.records.iter().filter(|r| r.split() == split).collect();
    let pooled_id = format!("{prefix}/pooled");
    if records.is_empty() {
        return Err(EvalError::EmptySlice(pooled_id));
    }
    let predicted: Vec<EmotionLabel> = records
        .par_iter()
        .map(|r| predict(r).map(|d| decide(&d)))
        .collect::<Result<_, _>>()?;

    let mut tags: Vec<&'static str> = manifest.records.iter().map(slice_tag).collect();
    tags.sort_unstable();
    tags.dedup();
    let mut per_corpus = Vec::new();
    let mut notes = Vec::new();
    for tag in tags {
        let pairs = records.iter().zip(&predicted).filter(|(r, _)| slice_tag(r) == tag).map(|(r, &p)| (r.label(), p));
        match EvalResult::from_pairs(format!("{prefix}/{tag}"), pairs) {
            Ok(r) => per_corpus.push(r),
            Err(EvalError::EmptySlice(id)) => notes.push(format!("{id}: no {} records; skipped", split.name())),
            Err(e) => return Err(e),
        }
    }
    let pooled = EvalResult::from_pairs(pooled_id, records.iter().map(|r| r.label()).zip(predicted))?;
    Ok(Breakdown { pooled, per_corpus, notes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_denominators_are_flagged() {
        let r = EvalResult::from_pairs("s", [(EmotionLabel::Angry, EmotionLabel::Angry), (EmotionLabel::Calm, EmotionLabel::Angry)]).unwrap();
        assert_eq!(r.overall_accuracy, 0.5);
        let calm = r.per_class[EmotionLabel::Calm.index()];
        assert_eq!((calm.precision, calm.recall, calm.support, calm.zero_denominator), (0.0, 0.0, 1, true));
        let angry = r.per_class[0];
        assert_eq!((angry.precision, angry.recall, angry.zero_denominator), (0.5, 1.0, false));
        assert!((angry.f1 - 2.0 / 3.0).abs() < 1e-15);
        let absent = r.per_class[EmotionLabel::Sad.index()];
        assert!(absent.zero_denominator && absent.f1 == 0.0 && absent.support == 0);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(EvalResult::from_pairs("x", []), Err(EvalError::EmptySlice(id)) if id == "x"));
    }
}
