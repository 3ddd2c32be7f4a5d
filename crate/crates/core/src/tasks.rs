//! Synthetic tasks with verifiable 0/1 rewards and prompt splits.

use rand::Rng;

use crate::policy::{PolicyParams, Response};
use crate::rng::{derive_seed, rng_from};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum TaskKind {
    /// Prompt `x` is solved iff the first token equals `targets[x]`.
    GroupBandit { targets: Vec<usize> },
    /// Prompt `x` is solved iff the last token equals `(a + b) mod modulus`
    /// for `operands[x] = (a, b)`.
    ArithmeticChain { modulus: usize, operands: Vec<(usize, usize)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub vocab_size: usize,
    pub horizon: usize,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, vocab_size: usize, horizon: usize) -> Result<Self> {
        let spec = Self { kind, vocab_size, horizon };
        spec.validate()?;
        Ok(spec)
    }

    /// A bandit whose targets repeat with period `period`, so prompts `x` and
    /// `x + period` ask for the same token. Targets are drawn uniformly from
    /// the vocabulary with `seed`.
    pub fn periodic_bandit(num_prompts: usize, period: usize, vocab_size: usize, horizon: usize, seed: u64) -> Result<Self> {
        if period == 0 {
            return Err(Error::InvalidTask("target period must be positive".into()));
        }
        let mut rng = rng_from(seed, &[0x7a5c]);
        let base: Vec<usize> = (0..period).map(|_| rng.random_range(0..vocab_size.max(1))).collect();
        let targets = (0..num_prompts).map(|x| base[x % period]).collect();
        Self::new(TaskKind::GroupBandit { targets }, vocab_size, horizon)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 || self.horizon == 0 {
            return Err(Error::InvalidTask("need vocab_size >= 2 and horizon >= 1".into()));
        }
        match &self.kind {
            TaskKind::GroupBandit { targets } => {
                if targets.is_empty() {
                    return Err(Error::InvalidTask("bandit needs at least one prompt".into()));
                }
                if let Some(t) = targets.iter().find(|&&t| t >= self.vocab_size) {
                    return Err(Error::InvalidTask(format!("target {t} >= vocab size {}", self.vocab_size)));
                }
            }
            TaskKind::ArithmeticChain { modulus, operands } => {
                if operands.is_empty() {
                    return Err(Error::InvalidTask("arithmetic chain needs at least one prompt".into()));
                }
                if *modulus == 0 || *modulus > self.vocab_size {
                    return Err(Error::InvalidTask(format!("modulus {modulus} must be in 1..={}", self.vocab_size)));
                }
                if self.horizon < 2 {
                    return Err(Error::InvalidTask("arithmetic chain needs horizon >= 2".into()));
                }
            }
        }
        Ok(())
    }

    pub fn num_prompts(&self) -> usize {
        match &self.kind {
            TaskKind::GroupBandit { targets } => targets.len(),
            TaskKind::ArithmeticChain { operands, .. } => operands.len(),
        }
    }

    /// The token that earns reward at the decisive position, and that position.
    pub fn answer(&self, prompt_id: usize) -> (usize, usize) {
        match &self.kind {
            TaskKind::GroupBandit { targets } => (0, targets[prompt_id]),
            TaskKind::ArithmeticChain { modulus, operands } => {
                let (a, b) = operands[prompt_id];
                (self.horizon - 1, (a + b) % modulus)
            }
        }
    }

    pub fn reward(&self, prompt_id: usize, response: &Response) -> f64 {
        let hit = match &self.kind {
            TaskKind::GroupBandit { targets } => response.tokens.first() == Some(&targets[prompt_id]),
            TaskKind::ArithmeticChain { modulus, operands } => {
                let (a, b) = operands[prompt_id];
                response.tokens.last() == Some(&((a + b) % modulus))
            }
        };
        if hit {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalMode {
    Greedy,
    /// pass@n: a prompt counts as solved if any of `n` samples is rewarded.
    Sampled { n: usize, seed: u64 },
}

pub fn evaluate_accuracy(spec: &TaskSpec, params: &PolicyParams, prompts: &[usize], mode: EvalMode) -> Result<f64> {
    if prompts.is_empty() {
        return Err(Error::InvalidSplit("evaluation prompt set is empty".into()));
    }
    let solved = prompts
        .iter()
        .filter(|&&x| match mode {
            EvalMode::Greedy => spec.reward(x, &params.greedy_response(x)) > 0.0,
            // sample i of prompt x depends only on (seed, x, i), so the first
            // n1 samples are shared with any n2 >= n1
            EvalMode::Sampled { n, seed } => (0..n as u64)
                .any(|i| spec.reward(x, &params.sample_response(x, derive_seed(seed, &[x as u64, i]))) > 0.0),
        })
        .count();
    Ok(solved as f64 / prompts.len() as f64)
}

/// How the prompt pool is divided.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    /// Fraction of the non-test pool used for inner training; the rest is
    /// inner validation.
    pub inner_train_fraction: f64,
    /// Held-out prompts, excluded from the pool.
    pub outer_test: Vec<usize>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { inner_train_fraction: 0.8, outer_test: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub inner_train: Vec<usize>,
    pub inner_validation: Vec<usize>,
    pub outer_test: Vec<usize>,
}

impl Splits {
    /// The set reported as a run's accuracy: outer test when present, else
    /// inner validation, else inner train.
    pub fn evaluation_set(&self) -> &[usize] {
        if !self.outer_test.is_empty() {
            &self.outer_test
        } else if !self.inner_validation.is_empty() {
            &self.inner_validation
        } else {
            &self.inner_train
        }
    }

    /// Inner validation, falling back to inner train when empty.
    pub fn validation_or_train(&self) -> &[usize] {
        if self.inner_validation.is_empty() {
            &self.inner_train
        } else {
            &self.inner_validation
        }
    }
}

impl SplitSpec {
    /// Contiguous split of the pool in prompt-id order: the first
    /// `round(fraction * |pool|)` prompts train, the rest validate.
    pub fn resolve(&self, num_prompts: usize) -> Result<Splits> {
        if !(0.0..=1.0).contains(&self.inner_train_fraction) {
            return Err(Error::InvalidSplit(format!(
                "inner_train_fraction {} outside [0, 1]",
                self.inner_train_fraction
            )));
        }
        let mut test = self.outer_test.clone();
        test.sort_unstable();
        if test.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSplit("duplicate outer test prompt".into()));
        }
        if let Some(x) = test.iter().find(|&&x| x >= num_prompts) {
            return Err(Error::InvalidSplit(format!("outer test prompt {x} >= {num_prompts} prompts")));
        }
        let pool: Vec<usize> = (0..num_prompts).filter(|x| test.binary_search(x).is_err()).collect();
        let n_train = (self.inner_train_fraction * pool.len() as f64).round() as usize;
        if n_train == 0 {
            return Err(Error::InvalidSplit("inner train split is empty".into()));
        }
        let (train, val) = pool.split_at(n_train.min(pool.len()));
        Ok(Splits { inner_train: train.to_vec(), inner_validation: val.to_vec(), outer_test: test })
    }
}
