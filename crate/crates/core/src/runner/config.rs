//! Run configuration files (TOML, `schema_version = 1`).
//!
//! Unknown keys are rejected; every semantic error names the offending key
//! path. See `configs/` in the crate root for complete examples.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::advantage::{AdvantageConfig, AdvantageMode, DEFAULT_EPSILON};
use crate::divergence::{NeuralMirrorParams, PotentialSpec, INIT_STD};
use crate::es::{EsConfig, FitnessMode};
use crate::rng::{derive_seed, rng_from};
use crate::tasks::{SplitSpec, TaskKind, TaskSpec};
use crate::trainer::{PolicyInit, RegularizerMode, TrainerConfig, DEFAULT_BREGMAN_COEFF, DEFAULT_GROUP_SIZE, DEFAULT_KL_BETA};
use crate::{Error, Result};

use super::checkpoint;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: u32,
    label: Option<String>,
    seeds: Vec<u64>,
    output_dir: Option<PathBuf>,
    task: RawTask,
    #[serde(default)]
    split: RawSplit,
    #[serde(default)]
    trainer: RawTrainer,
    es: Option<RawEs>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    kind: String,
    vocab_size: usize,
    #[serde(default = "one")]
    horizon: usize,
    // group_bandit
    targets: Option<Vec<usize>>,
    num_prompts: Option<usize>,
    target_period: Option<usize>,
    target_seed: Option<u64>,
    // arithmetic_chain
    modulus: Option<usize>,
    operands: Option<Vec<[usize; 2]>>,
    operand_seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSplit {
    #[serde(default = "default_train_fraction")]
    inner_train_fraction: f64,
    #[serde(default)]
    outer_test: Vec<usize>,
}

impl Default for RawSplit {
    fn default() -> Self {
        Self { inner_train_fraction: default_train_fraction(), outer_test: Vec::new() }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrainer {
    #[serde(default = "default_mode")]
    mode: String,
    #[serde(default = "default_group_size")]
    group_size: usize,
    #[serde(default = "default_bregman_coeff")]
    bregman_coeff: f64,
    #[serde(default = "default_kl_beta")]
    kl_beta: f64,
    #[serde(default = "default_learning_rate")]
    learning_rate: f64,
    #[serde(default = "default_steps")]
    steps: usize,
    length_norm: Option<usize>,
    contexts: Option<usize>,
    #[serde(default = "default_eval_every")]
    eval_every: usize,
    #[serde(default)]
    cosine_decay: bool,
    #[serde(default = "default_init")]
    init: String,
    #[serde(default = "default_margin")]
    init_margin: f64,
    #[serde(default = "default_policy_init_std")]
    init_std: f64,
    gspo_epsilon: Option<f64>,
    gspo_epsilon_high: Option<f64>,
    #[serde(default)]
    advantage: RawAdvantage,
    #[serde(default)]
    potential: RawPotential,
}

impl Default for RawTrainer {
    fn default() -> Self {
        toml::from_str("").expect("all trainer fields have defaults")
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAdvantage {
    #[serde(default = "default_advantage_mode")]
    mode: String,
    #[serde(default = "default_epsilon")]
    epsilon: f64,
}

impl Default for RawAdvantage {
    fn default() -> Self {
        Self { mode: default_advantage_mode(), epsilon: DEFAULT_EPSILON }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPotential {
    kind: Option<String>,
    alpha: Option<f64>,
    init: Option<String>,
    init_std: Option<f64>,
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEs {
    #[serde(default = "default_population")]
    population: usize,
    #[serde(default = "default_iterations")]
    iterations: usize,
    #[serde(default = "default_sigma0")]
    sigma0: f64,
    #[serde(default = "default_decay")]
    decay: f64,
    #[serde(default = "default_es_lr")]
    learning_rate: f64,
    #[serde(default = "default_inner_steps")]
    inner_steps: usize,
    #[serde(default = "default_fitness")]
    fitness: String,
    #[serde(default = "default_pass_n")]
    pass_n: usize,
    #[serde(default = "default_es_init_std")]
    init_std: f64,
}

fn one() -> usize {
    1
}
fn default_train_fraction() -> f64 {
    0.8
}
fn default_mode() -> String {
    "gbmpo".into()
}
fn default_group_size() -> usize {
    DEFAULT_GROUP_SIZE
}
fn default_bregman_coeff() -> f64 {
    DEFAULT_BREGMAN_COEFF
}
fn default_kl_beta() -> f64 {
    DEFAULT_KL_BETA
}
fn default_learning_rate() -> f64 {
    0.5
}
fn default_steps() -> usize {
    200
}
fn default_eval_every() -> usize {
    100
}
fn default_init() -> String {
    "uniform".into()
}
fn default_margin() -> f64 {
    20.0
}
fn default_policy_init_std() -> f64 {
    0.1
}
fn default_advantage_mode() -> String {
    "dr_grpo".into()
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_population() -> usize {
    12
}
fn default_iterations() -> usize {
    15
}
fn default_sigma0() -> f64 {
    0.02
}
fn default_decay() -> f64 {
    1.0
}
fn default_es_lr() -> f64 {
    0.01
}
fn default_inner_steps() -> usize {
    200
}
fn default_fitness() -> String {
    "accuracy".into()
}
fn default_pass_n() -> usize {
    10
}
fn default_es_init_std() -> f64 {
    INIT_STD
}

/// Where the regularizing potential comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSource {
    Fixed(PotentialSpec),
    /// A fresh `N(0, std^2)` neural map per run seed.
    NeuralRandom { std: f64 },
}

impl PotentialSource {
    pub fn resolve(&self, seed: u64) -> PotentialSpec {
        match self {
            PotentialSource::Fixed(spec) => spec.clone(),
            PotentialSource::NeuralRandom { std } => {
                let mut rng = rng_from(seed, &[0x9e0a]);
                PotentialSpec::neural(NeuralMirrorParams::random(&mut rng, *std))
            }
        }
    }
}

/// A validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub label: String,
    pub task: TaskSpec,
    pub split: SplitSpec,
    /// Template; `potential` and `seed` are filled per run.
    pub trainer: TrainerConfig,
    pub potential: PotentialSource,
    pub es: Option<EsConfig>,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
    /// GSPO clipping constants, kept for fidelity; never used.
    pub gspo_epsilons: Option<(f64, f64)>,
}

fn invalid(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::InvalidConfig(format!("{key}: {msg}"))
}

fn reject_keys(kind: &str, present: &[(&str, bool)]) -> Result<()> {
    for (key, is_set) in present {
        if *is_set {
            return Err(invalid(&format!("task.{key}"), format!("not valid for task kind `{kind}`")));
        }
    }
    Ok(())
}

fn build_task(raw: RawTask) -> Result<TaskSpec> {
    let task = match raw.kind.as_str() {
        "group_bandit" => {
            reject_keys(
                "group_bandit",
                &[("modulus", raw.modulus.is_some()), ("operands", raw.operands.is_some()), ("operand_seed", raw.operand_seed.is_some())],
            )?;
            match (raw.targets, raw.num_prompts) {
                (Some(targets), None) => TaskSpec::new(TaskKind::GroupBandit { targets }, raw.vocab_size, raw.horizon),
                (None, Some(n)) => {
                    let period = raw.target_period.unwrap_or(n);
                    TaskSpec::periodic_bandit(n, period, raw.vocab_size, raw.horizon, raw.target_seed.unwrap_or(0))
                }
                _ => return Err(invalid("task", "group_bandit needs exactly one of `targets` or `num_prompts`")),
            }
        }
        "arithmetic_chain" => {
            reject_keys(
                "arithmetic_chain",
                &[("targets", raw.targets.is_some()), ("target_period", raw.target_period.is_some()), ("target_seed", raw.target_seed.is_some())],
            )?;
            let modulus = raw.modulus.ok_or_else(|| invalid("task.modulus", "required for arithmetic_chain"))?;
            let operands: Vec<(usize, usize)> = match (raw.operands, raw.num_prompts) {
                (Some(ops), None) => ops.into_iter().map(|[a, b]| (a, b)).collect(),
                (None, Some(n)) => {
                    let mut rng = rng_from(raw.operand_seed.unwrap_or(0), &[0x0a9d]);
                    (0..n)
                        .map(|_| {
                            use rand::Rng;
                            (rng.random_range(0..modulus.max(1)), rng.random_range(0..modulus.max(1)))
                        })
                        .collect()
                }
                _ => return Err(invalid("task", "arithmetic_chain needs exactly one of `operands` or `num_prompts`")),
            };
            TaskSpec::new(TaskKind::ArithmeticChain { modulus, operands }, raw.vocab_size, raw.horizon)
        }
        other => return Err(invalid("task.kind", format!("unknown task kind `{other}`"))),
    };
    task.map_err(|e| invalid("task", e))
}

fn build_potential(raw: RawPotential, base_dir: &Path) -> Result<PotentialSource> {
    let kind = raw.kind.as_deref().unwrap_or("prob_l2");
    let neural_only = [("init", raw.init.is_some()), ("init_std", raw.init_std.is_some()), ("checkpoint", raw.checkpoint.is_some())];
    if kind != "neural" {
        if let Some((key, _)) = neural_only.iter().find(|(_, set)| *set) {
            return Err(invalid(&format!("trainer.potential.{key}"), "only valid for kind `neural`"));
        }
    }
    if kind != "alpha" && raw.alpha.is_some() {
        return Err(invalid("trainer.potential.alpha", "only valid for kind `alpha`"));
    }
    let spec = match kind {
        "kl" => PotentialSpec::Kl,
        "prob_l2" => PotentialSpec::ProbL2,
        "alpha" => {
            let a = raw.alpha.ok_or_else(|| invalid("trainer.potential.alpha", "required for kind `alpha`"))?;
            PotentialSpec::alpha(a).map_err(|e| invalid("trainer.potential.alpha", e))?
        }
        "neural" => {
            if let Some(path) = raw.checkpoint {
                if raw.init.is_some() {
                    return Err(invalid("trainer.potential", "`checkpoint` and `init` are mutually exclusive"));
                }
                let path = if path.is_relative() { base_dir.join(path) } else { path };
                return Ok(PotentialSource::Fixed(PotentialSpec::neural(checkpoint::load(&path)?)));
            }
            match raw.init.as_deref().unwrap_or("random") {
                "random" => {
                    let std = raw.init_std.unwrap_or(INIT_STD);
                    if !(std >= 0.0 && std.is_finite()) {
                        return Err(invalid("trainer.potential.init_std", "must be finite and >= 0"));
                    }
                    return Ok(PotentialSource::NeuralRandom { std });
                }
                "kl" => PotentialSpec::neural(NeuralMirrorParams::kl()),
                "l2" => PotentialSpec::neural(NeuralMirrorParams::prob_l2()),
                "zeros" => PotentialSpec::neural(NeuralMirrorParams::zeros()),
                other => return Err(invalid("trainer.potential.init", format!("unknown init `{other}`"))),
            }
        }
        other => return Err(invalid("trainer.potential.kind", format!("unknown potential `{other}`"))),
    };
    Ok(PotentialSource::Fixed(spec))
}

/// Trainer template, potential source and the parsed GSPO epsilons.
type TrainerParts = (TrainerConfig, PotentialSource, Option<(f64, f64)>);

fn build_trainer(raw: RawTrainer, base_dir: &Path) -> Result<TrainerParts> {
    let mode = match raw.mode.as_str() {
        "gbmpo" => RegularizerMode::Bregman,
        "kl" => RegularizerMode::KlPenalty,
        "gspo" => return Err(Error::UnsupportedMode("gspo (trainer.mode)".into())),
        other => return Err(invalid("trainer.mode", format!("unknown mode `{other}`"))),
    };
    let advantage = AdvantageConfig {
        mode: match raw.advantage.mode.as_str() {
            "dr_grpo" => AdvantageMode::DrGrpo,
            "grpo" => AdvantageMode::Grpo,
            other => return Err(invalid("trainer.advantage.mode", format!("unknown mode `{other}`"))),
        },
        epsilon: raw.advantage.epsilon,
    };
    advantage.validate().map_err(|e| invalid("trainer.advantage", e))?;
    let init = match raw.init.as_str() {
        "uniform" => PolicyInit::Uniform,
        "perfect" => PolicyInit::Perfect { margin: raw.init_margin },
        "random" => PolicyInit::Random { std: raw.init_std },
        other => return Err(invalid("trainer.init", format!("unknown init `{other}`"))),
    };
    let potential = build_potential(raw.potential, base_dir)?;
    let gspo = match (raw.gspo_epsilon, raw.gspo_epsilon_high) {
        (None, None) => None,
        (lo, hi) => Some((lo.unwrap_or(3e-4), hi.unwrap_or(4e-4))),
    };
    let cfg = TrainerConfig {
        group_size: raw.group_size,
        mode,
        bregman_coeff: raw.bregman_coeff,
        kl_beta: raw.kl_beta,
        learning_rate: raw.learning_rate,
        steps: raw.steps,
        length_norm: raw.length_norm,
        advantage,
        potential: PotentialSpec::ProbL2,
        cosine_decay: raw.cosine_decay,
        eval_every: raw.eval_every,
        context_count: raw.contexts,
        init,
        seed: 0,
    };
    cfg.validate().map_err(|e| invalid("trainer", e))?;
    Ok((cfg, potential, gspo))
}

fn build_es(raw: RawEs) -> Result<EsConfig> {
    let fitness = match raw.fitness.as_str() {
        "accuracy" => FitnessMode::GreedyAccuracy,
        "pass_at_n" => FitnessMode::PassAtN { n: raw.pass_n },
        other => return Err(invalid("es.fitness", format!("unknown fitness `{other}`"))),
    };
    let cfg = EsConfig {
        population: raw.population,
        iterations: raw.iterations,
        sigma0: raw.sigma0,
        decay: raw.decay,
        learning_rate: raw.learning_rate,
        inner_steps: Some(raw.inner_steps),
        fitness,
        seed: 0,
        init_std: raw.init_std,
    };
    cfg.validate().map_err(|e| invalid("es", e))?;
    Ok(cfg)
}

fn default_label(trainer: &TrainerConfig, potential: &PotentialSource, es: bool) -> String {
    if es {
        return "neural-es".into();
    }
    if trainer.mode == RegularizerMode::KlPenalty {
        return "kl-baseline".into();
    }
    match potential {
        PotentialSource::NeuralRandom { .. } => "neural-random-init".into(),
        PotentialSource::Fixed(PotentialSpec::Kl) => "bregman-kl".into(),
        PotentialSource::Fixed(PotentialSpec::ProbL2) => "prob-l2".into(),
        PotentialSource::Fixed(PotentialSpec::Alpha(a)) => format!("alpha-{a}"),
        PotentialSource::Fixed(PotentialSpec::Neural(_)) => "neural-fixed".into(),
    }
}

/// Parses and validates configuration text. `base_dir` anchors relative
/// checkpoint paths.
pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    if raw.schema_version != SCHEMA_VERSION {
        return Err(invalid("schema_version", format!("expected {SCHEMA_VERSION}, got {}", raw.schema_version)));
    }
    let seeds = validate_seeds(raw.seeds)?;
    let task = build_task(raw.task)?;
    let split = SplitSpec { inner_train_fraction: raw.split.inner_train_fraction, outer_test: raw.split.outer_test };
    split.resolve(task.num_prompts()).map_err(|e| invalid("split", e))?;
    let (trainer, potential, gspo_epsilons) = build_trainer(raw.trainer, base_dir)?;
    let es = raw.es.map(build_es).transpose()?;
    if es.is_some() {
        if !matches!(potential, PotentialSource::NeuralRandom { .. } | PotentialSource::Fixed(PotentialSpec::Neural(_))) {
            return Err(invalid("trainer.potential.kind", "an [es] section requires kind `neural`"));
        }
        if trainer.mode != RegularizerMode::Bregman {
            return Err(invalid("trainer.mode", "an [es] section requires mode `gbmpo`"));
        }
    }
    let label = match raw.label {
        Some(l) if l.is_empty() || l.contains([',', '"', '\n', '/']) => {
            return Err(invalid("label", "must be non-empty without commas, quotes, slashes or newlines"))
        }
        Some(l) => l,
        None => default_label(&trainer, &potential, es.is_some()),
    };
    Ok(RunConfig { label, task, split, trainer, potential, es, seeds, output_dir: raw.output_dir, gspo_epsilons })
}

pub fn validate_seeds(seeds: Vec<u64>) -> Result<Vec<u64>> {
    if seeds.is_empty() {
        return Err(invalid("seeds", "at least one seed is required"));
    }
    let unique: BTreeSet<u64> = seeds.iter().copied().collect();
    if unique.len() != seeds.len() {
        return Err(invalid("seeds", "duplicate seeds"));
    }
    Ok(seeds)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })
}

impl RunConfig {
    /// Trainer for one replicate: run seed plus its resolved potential.
    pub fn trainer_for(&self, seed: u64) -> TrainerConfig {
        TrainerConfig { potential: self.potential.resolve(seed), seed, ..self.trainer.clone() }
    }

    pub fn es_for(&self, seed: u64) -> Option<EsConfig> {
        self.es.as_ref().map(|es| EsConfig { seed: derive_seed(seed, &[0xe5]), ..es.clone() })
    }
}
