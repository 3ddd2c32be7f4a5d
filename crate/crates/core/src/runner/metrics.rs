//! Newline-delimited metric records with a fixed field order.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::es::IterationRecord;
use crate::trainer::StepMetrics;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRecord {
    pub run_id: String,
    pub step: usize,
    pub reward_mean: f64,
    pub divergence_mean: f64,
    pub validation_accuracy: Option<f64>,
    pub response_length: f64,
    /// Milliseconds since the Unix epoch; `null` unless timestamps were
    /// requested, so that metric files stay reproducible.
    pub timestamp_ms: Option<u128>,
}

impl MetricRecord {
    pub fn from_step(run_id: &str, m: &StepMetrics, timestamp_ms: Option<u128>) -> Self {
        Self {
            run_id: run_id.to_string(),
            step: m.step,
            reward_mean: m.reward_mean,
            divergence_mean: m.divergence_mean,
            validation_accuracy: m.validation_accuracy,
            response_length: m.response_length,
            timestamp_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EsIterationRecord {
    pub run_id: String,
    pub iteration: usize,
    pub sigma: f64,
    pub mean_fitness: f64,
    pub max_fitness: f64,
    pub best_fitness: f64,
    pub accepted: bool,
    pub evaluated: usize,
    pub failed: usize,
}

impl EsIterationRecord {
    pub fn from_record(run_id: &str, r: &IterationRecord) -> Self {
        Self {
            run_id: run_id.to_string(),
            iteration: r.iteration,
            sigma: r.sigma,
            mean_fitness: r.mean_fitness,
            max_fitness: r.max_fitness,
            best_fitness: r.best_fitness,
            accepted: r.accepted,
            evaluated: r.evaluated,
            failed: r.failed,
        }
    }
}

/// One JSON object per line.
pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("metric records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(to_jsonl(records).as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn now_ms() -> u128 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}
