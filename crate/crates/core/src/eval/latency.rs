use std::collections::BTreeMap;

use serde::Serialize;

use super::EvalError;
use crate::pipeline::{Pipeline, PredictRequest, STAGES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageStats {
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub n_samples: usize,
    /// Keyed by stage name, including "end_to_end".
    pub stages: BTreeMap<String, StageStats>,
    /// Per-run sum of the five stages divided by end-to-end time, averaged.
    pub mean_stage_coverage: f64,
}

/// Nearest-rank percentile of sorted values, `q` in (0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

pub fn stats(values: &[f64]) -> StageStats {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    StageStats {
        mean_ms: v.iter().sum::<f64>() / v.len() as f64,
        p50_ms: percentile(&v, 0.50),
        p95_ms: percentile(&v, 0.95),
        max_ms: *v.last().expect("non-empty"),
    }
}

/// Runs `n_warmup` unrecorded then `n_measure` recorded predictions,
/// cycling through `inputs`.
pub fn latency_benchmark(pipeline: &Pipeline, inputs: &[PredictRequest], n_warmup: usize, n_measure: usize) -> Result<LatencyReport, EvalError> {
    if n_measure < 10 {
        return Err(EvalError::InvalidArgument(format!("n_measure must be at least 10, got {n_measure}")));
    }
    if inputs.is_empty() {
        return Err(EvalError::InvalidArgument("no benchmark inputs".into()));
    }
    for i in 0..n_warmup {
        pipeline.predict(inputs[i % inputs.len()].clone())?;
    }
    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(n_measure); STAGES.len()];
    let mut coverage = 0.0;
    for i in 0..n_measure {
        let out = pipeline.predict(inputs[i % inputs.len()].clone())?;
        for (s, v) in samples.iter_mut().zip(out.timings.values()) {
            s.push(v);
        }
        if out.timings.end_to_end > 0.0 {
            coverage += out.timings.stage_sum() / out.timings.end_to_end;
        }
    }
    Ok(LatencyReport {
        n_samples: n_measure,
        stages: STAGES.iter().zip(&samples).map(|(k, v)| (k.to_string(), stats(v))).collect(),
        mean_stage_coverage: coverage / n_measure as f64,
    })
}
