//! Experiment orchestration: replicate seeds, metric files, summaries.

mod checkpoint;
mod config;
mod metrics;
mod report;

pub use checkpoint::{load as load_checkpoint, save as save_checkpoint};
pub use config::{parse_config, parse_config_str, validate_seeds, PotentialSource, RunConfig, SCHEMA_VERSION};
pub use metrics::{to_jsonl, EsIterationRecord, MetricRecord};
pub use report::{compare_report, read_summary, Report, SummaryRow};

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::divergence::{NeuralMirrorParams, PotentialSpec};
use crate::es::{run_on_task, EsOutcome};
use crate::tasks::{evaluate_accuracy, EvalMode};
use crate::trainer::{train, TrainOutcome};
use crate::{Error, Result};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "GBMPO_OUTPUT_ROOT";

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub output_dir: PathBuf,
    /// Maximum concurrently executing seeds.
    pub jobs: usize,
    /// Stamp metric records with wall-clock time (breaks byte-reproducibility).
    pub timestamps: bool,
}

/// Everything one replicate produces.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub run_id: String,
    pub seed: u64,
    pub training: TrainOutcome,
    pub es: Option<EsOutcome>,
    pub final_accuracy: f64,
    pub response_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub run_id: String,
    pub seed: u64,
    pub status: String,
    pub final_accuracy: Option<f64>,
    pub response_length: Option<f64>,
    pub negative_divergences: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub row: SummaryRow,
    pub runs: Vec<RunResult>,
    pub output_dir: PathBuf,
}

impl ExperimentSummary {
    pub fn failed_runs(&self) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(|r| r.error.is_some())
    }
}

pub fn run_id(label: &str, seed: u64) -> String {
    format!("{label}-seed{seed}")
}

/// Population mean and standard deviation.
pub fn population_mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// One replicate: optional ES search, then training and final evaluation.
pub fn run_single(cfg: &RunConfig, seed: u64) -> Result<RunArtifacts> {
    let splits = cfg.split.resolve(cfg.task.num_prompts())?;
    let mut trainer = cfg.trainer_for(seed);
    let es = match cfg.es_for(seed) {
        Some(es_cfg) => {
            let outcome = run_on_task(&es_cfg, &trainer, &cfg.task, &splits)?;
            trainer.potential = PotentialSpec::neural(outcome.psi().clone());
            Some(outcome)
        }
        None => None,
    };
    let training = train(&trainer, &cfg.task, &splits)?;
    let eval_set = splits.evaluation_set();
    let final_accuracy = evaluate_accuracy(&cfg.task, &training.state.policy, eval_set, EvalMode::Greedy)?;
    let response_length =
        eval_set.iter().map(|&x| training.state.policy.greedy_response(x).len() as f64).sum::<f64>() / eval_set.len() as f64;
    Ok(RunArtifacts { run_id: run_id(&cfg.label, seed), seed, training, es, final_accuracy, response_length })
}

fn write_artifacts(dir: &Path, art: &RunArtifacts, timestamps: bool) -> Result<()> {
    let records: Vec<MetricRecord> = art
        .training
        .metrics
        .iter()
        .map(|m| MetricRecord::from_step(&art.run_id, m, timestamps.then(metrics::now_ms)))
        .collect();
    metrics::write_jsonl(&dir.join(format!("{}.metrics.jsonl", art.run_id)), &records)?;
    if let Some(es) = &art.es {
        let history: Vec<EsIterationRecord> =
            es.history.iter().map(|r| EsIterationRecord::from_record(&art.run_id, r)).collect();
        metrics::write_jsonl(&dir.join(format!("{}.es.jsonl", art.run_id)), &history)?;
        save_checkpoint(&dir.join(format!("{}.psi.json", art.run_id)), es.psi())?;
    }
    Ok(())
}

/// Path of the ES checkpoint written for `run_id` under `dir`.
pub fn checkpoint_path(dir: &Path, run_id: &str) -> PathBuf {
    dir.join(format!("{run_id}.psi.json"))
}

/// Loads a checkpoint written by [`run_experiment`].
pub fn load_run_checkpoint(dir: &Path, run_id: &str) -> Result<NeuralMirrorParams> {
    load_checkpoint(&checkpoint_path(dir, run_id))
}

/// Runs every seed, writes per-run metric files plus `runs.csv` and
/// `summary.csv`. A failing seed is recorded and the others continue.
pub fn run_experiment(cfg: &RunConfig, opts: &RunOptions) -> Result<ExperimentSummary> {
    std::fs::create_dir_all(&opts.output_dir).map_err(|e| Error::io(&opts.output_dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let outcomes: Vec<(u64, Result<RunArtifacts>)> = pool.install(|| {
        use rayon::prelude::*;
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let result = run_single(cfg, seed)
                    .and_then(|art| write_artifacts(&opts.output_dir, &art, opts.timestamps).map(|_| art));
                (seed, result)
            })
            .collect()
    });

    let runs: Vec<RunResult> = outcomes
        .iter()
        .map(|(seed, res)| match res {
            Ok(art) => RunResult {
                run_id: art.run_id.clone(),
                seed: *seed,
                status: "ok".into(),
                final_accuracy: Some(art.final_accuracy),
                response_length: Some(art.response_length),
                negative_divergences: Some(art.training.state.negative_divergences),
                error: None,
            },
            Err(e) => RunResult {
                run_id: run_id(&cfg.label, *seed),
                seed: *seed,
                status: "aborted".into(),
                final_accuracy: None,
                response_length: None,
                negative_divergences: None,
                error: Some(e.to_string()),
            },
        })
        .collect();

    let accs: Vec<f64> = runs.iter().filter_map(|r| r.final_accuracy).collect();
    let lens: Vec<f64> = runs.iter().filter_map(|r| r.response_length).collect();
    let acc = population_mean_std(&accs);
    let row = SummaryRow {
        method: cfg.label.clone(),
        runs_requested: cfg.seeds.len(),
        runs_completed: accs.len(),
        incomplete: accs.len() < cfg.seeds.len(),
        accuracy_mean: acc.map(|a| a.0),
        accuracy_std_pop: acc.map(|a| a.1),
        response_length_mean: population_mean_std(&lens).map(|l| l.0),
    };
    report::write_rows(&opts.output_dir.join("runs.csv"), &runs)?;
    report::write_rows(&opts.output_dir.join("summary.csv"), std::slice::from_ref(&row))?;
    Ok(ExperimentSummary { row, runs, output_dir: opts.output_dir.clone() })
}
