//! Regularized group policy optimization against a frozen reference.
//!
//! For one prompt with responses `y_1..y_K` and advantages `A_i`:
//!
//! ```text
//! J(theta) = 1/(K L) sum_i [ A_i (log pi(y_i) - log pi_ref(y_i)) - coeff * D(y_i) ]
//! D(y)     = sum_t D_phi(pi(.|ctx_t) || pi_ref(.|ctx_t))
//! ```
//!
//! The divergence gradient is exact: per visited context the softmax
//! Jacobian is applied to `grad phi(pi) - grad phi(pi_ref)`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::advantage::{advantages, AdvantageConfig, RewardGroup};
use crate::divergence::{bregman_simplex, grad_phi, PotentialSpec};
use crate::policy::{LogitTable, PolicyParams, Response};
use crate::rng::rng_from;
use crate::tasks::{evaluate_accuracy, EvalMode, Splits, TaskSpec};
use crate::{Error, Result};

/// Bregman coefficient default.
pub const DEFAULT_BREGMAN_COEFF: f64 = 1e-4;
/// KL-penalty coefficient default.
pub const DEFAULT_KL_BETA: f64 = 0.01;
pub const DEFAULT_GROUP_SIZE: usize = 8;

/// Which coefficient drives the regularizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularizerMode {
    /// KL potential weighted by `kl_beta`, whatever `potential` says.
    KlPenalty,
    /// `potential` weighted by `bregman_coeff`.
    Bregman,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyInit {
    Uniform,
    /// Greedy decoding already solves every prompt: the rewarded token gets
    /// logit `margin` at the decisive context.
    Perfect { margin: f64 },
    Random { std: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    /// `K`, responses per prompt.
    pub group_size: usize,
    pub mode: RegularizerMode,
    pub bregman_coeff: f64,
    pub kl_beta: f64,
    pub learning_rate: f64,
    pub steps: usize,
    /// Fixed loss normalizer `L`; `None` means the task horizon.
    pub length_norm: Option<usize>,
    pub advantage: AdvantageConfig,
    pub potential: PotentialSpec,
    pub cosine_decay: bool,
    /// Greedy validation accuracy is logged every this many steps (0: only at
    /// the last step).
    pub eval_every: usize,
    /// Number of policy contexts; `None` gives every (prompt, step) its own.
    pub context_count: Option<usize>,
    pub init: PolicyInit,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            group_size: DEFAULT_GROUP_SIZE,
            mode: RegularizerMode::Bregman,
            bregman_coeff: DEFAULT_BREGMAN_COEFF,
            kl_beta: DEFAULT_KL_BETA,
            learning_rate: 0.5,
            steps: 200,
            length_norm: None,
            advantage: AdvantageConfig::default(),
            potential: PotentialSpec::ProbL2,
            cosine_decay: false,
            eval_every: 100,
            context_count: None,
            init: PolicyInit::Uniform,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(Error::InvalidConfig(format!("group_size must be >= 2, got {}", self.group_size)));
        }
        for (name, v) in [("bregman_coeff", self.bregman_coeff), ("kl_beta", self.kl_beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if self.length_norm == Some(0) {
            return Err(Error::InvalidConfig("length_norm must be positive".into()));
        }
        if self.context_count == Some(0) {
            return Err(Error::InvalidConfig("context_count must be positive".into()));
        }
        if let PotentialSpec::Alpha(a) = self.potential {
            PotentialSpec::alpha(a)?;
        }
        self.advantage.validate()
    }

    /// The potential and coefficient actually used by the regularizer.
    pub fn regularizer(&self) -> (&PotentialSpec, f64) {
        match self.mode {
            RegularizerMode::KlPenalty => (&PotentialSpec::Kl, self.kl_beta),
            RegularizerMode::Bregman => (&self.potential, self.bregman_coeff),
        }
    }

    pub fn length_norm_for(&self, horizon: usize) -> f64 {
        self.length_norm.unwrap_or(horizon) as f64
    }
}

/// Policy, frozen reference and running metric sums.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub policy: PolicyParams,
    reference: PolicyParams,
    pub step: usize,
    pub reward_sum: f64,
    pub divergence_sum: f64,
    pub length_sum: f64,
    pub samples: usize,
    /// Sequence divergences that came out negative (possible for learned
    /// potentials that are not convex).
    pub negative_divergences: usize,
}

impl TrainState {
    /// The reference is a snapshot of `policy` and is never mutated.
    pub fn new(policy: PolicyParams) -> Self {
        Self {
            reference: policy.clone(),
            policy,
            step: 0,
            reward_sum: 0.0,
            divergence_sum: 0.0,
            length_sum: 0.0,
            samples: 0,
            negative_divergences: 0,
        }
    }

    pub fn with_reference(policy: PolicyParams, reference: PolicyParams) -> Self {
        Self { reference, ..Self::new(policy) }
    }

    pub fn reference(&self) -> &PolicyParams {
        &self.reference
    }

    pub fn mean_reward(&self) -> f64 {
        self.reward_sum / self.samples.max(1) as f64
    }

    pub fn mean_divergence(&self) -> f64 {
        self.divergence_sum / self.samples.max(1) as f64
    }

    pub fn mean_length(&self) -> f64 {
        self.length_sum / self.samples.max(1) as f64
    }
}

/// Sum over the response's steps of the per-context divergence.
pub fn sequence_divergence(
    spec: &PotentialSpec,
    policy: &PolicyParams,
    reference: &PolicyParams,
    prompt_id: usize,
    response: &Response,
) -> Result<f64> {
    let mut total = 0.0;
    for t in 0..response.len() {
        let ctx = policy.context_of(prompt_id, t);
        total += bregman_simplex(spec, &policy.token_distribution(ctx), &reference.token_distribution(ctx))?;
    }
    Ok(total)
}

fn phi_gap(spec: &PotentialSpec, policy: &PolicyParams, reference: &PolicyParams, ctx: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let pi = policy.token_distribution(ctx);
    let g_pi = grad_phi(spec, &pi)?;
    let g_ref = grad_phi(spec, &reference.token_distribution(ctx))?;
    let gap = g_pi.iter().zip(&g_ref).map(|(a, b)| a - b).collect();
    Ok((pi.probs().to_vec(), gap))
}

/// Exact `grad_theta D(y)` through the softmax: `pi * (gap - <pi, gap>)` on
/// every visited context row.
pub fn divergence_gradient(
    spec: &PotentialSpec,
    policy: &PolicyParams,
    reference: &PolicyParams,
    prompt_id: usize,
    response: &Response,
) -> Result<LogitTable> {
    let mut grad = LogitTable::zeros(policy.context_count(), policy.vocab_size());
    for t in 0..response.len() {
        let ctx = policy.context_of(prompt_id, t);
        let (pi, gap) = phi_gap(spec, policy, reference, ctx)?;
        let mean: f64 = pi.iter().zip(&gap).map(|(p, g)| p * g).sum();
        for ((out, p), g) in grad.row_mut(ctx).iter_mut().zip(&pi).zip(&gap) {
            *out += p * (g - mean);
        }
    }
    Ok(grad)
}

/// Single-sample score-form estimator of the divergence gradient:
/// `sum_t grad log pi(y_t | ctx_t) * (grad phi(pi) - grad phi(pi_ref))[y_t]`.
/// Its expectation under `y ~ pi` equals [`divergence_gradient`].
pub fn sampled_divergence_gradient(
    spec: &PotentialSpec,
    policy: &PolicyParams,
    reference: &PolicyParams,
    prompt_id: usize,
    response: &Response,
) -> Result<LogitTable> {
    let mut grad = LogitTable::zeros(policy.context_count(), policy.vocab_size());
    for (t, &tok) in response.tokens.iter().enumerate() {
        let ctx = policy.context_of(prompt_id, t);
        let (pi, gap) = phi_gap(spec, policy, reference, ctx)?;
        let weight = gap[tok];
        let row = grad.row_mut(ctx);
        for (out, p) in row.iter_mut().zip(&pi) {
            *out -= weight * p;
        }
        row[tok] += weight;
    }
    Ok(grad)
}

fn check_group(cfg: &TrainerConfig, responses: &[Response], rewards: &RewardGroup) -> Result<()> {
    if responses.len() != rewards.len() {
        return Err(Error::DimensionMismatch { expected: responses.len(), got: rewards.len() });
    }
    if responses.len() != cfg.group_size {
        return Err(Error::DimensionMismatch { expected: cfg.group_size, got: responses.len() });
    }
    Ok(())
}

/// The regularized group objective for one prompt.
pub fn objective(
    cfg: &TrainerConfig,
    state: &TrainState,
    prompt_id: usize,
    responses: &[Response],
    rewards: &RewardGroup,
) -> Result<f64> {
    check_group(cfg, responses, rewards)?;
    let (spec, coeff) = cfg.regularizer();
    let adv = advantages(&cfg.advantage, rewards);
    let norm = responses.len() as f64 * cfg.length_norm_for(state.policy.horizon());
    let mut total = 0.0;
    for (y, a) in responses.iter().zip(&adv) {
        let log_ratio = state.policy.log_prob(prompt_id, y)? - state.reference.log_prob(prompt_id, y)?;
        let div = sequence_divergence(spec, &state.policy, &state.reference, prompt_id, y)?;
        total += a * log_ratio - coeff * div;
    }
    Ok(total / norm)
}

/// `grad_theta` of [`objective`] with responses and advantages held fixed.
pub fn gradient(
    cfg: &TrainerConfig,
    state: &TrainState,
    prompt_id: usize,
    responses: &[Response],
    rewards: &RewardGroup,
) -> Result<LogitTable> {
    check_group(cfg, responses, rewards)?;
    let (spec, coeff) = cfg.regularizer();
    let adv = advantages(&cfg.advantage, rewards);
    let norm = responses.len() as f64 * cfg.length_norm_for(state.policy.horizon());
    let mut grad = LogitTable::zeros(state.policy.context_count(), state.policy.vocab_size());
    // contexts depend only on (prompt, position), so responses of equal
    // length share their divergence gradient
    let mut by_length: Vec<(usize, usize)> = Vec::new();
    for (y, a) in responses.iter().zip(&adv) {
        if *a != 0.0 {
            grad.add_scaled(&state.policy.score_gradient(prompt_id, y)?, a / norm);
        }
        match by_length.iter_mut().find(|(len, _)| *len == y.len()) {
            Some((_, count)) => *count += 1,
            None => by_length.push((y.len(), 1)),
        }
    }
    if coeff != 0.0 {
        for (len, count) in by_length {
            let y = responses.iter().find(|y| y.len() == len).expect("length seen above");
            let dg = divergence_gradient(spec, &state.policy, &state.reference, prompt_id, y)?;
            grad.add_scaled(&dg, -coeff * count as f64 / norm);
        }
    }
    Ok(grad)
}

/// Initial policy for `task` under `cfg`.
pub fn init_policy(cfg: &TrainerConfig, task: &TaskSpec) -> Result<PolicyParams> {
    let contexts = cfg.context_count.unwrap_or(task.num_prompts() * task.horizon);
    let mut policy = PolicyParams::new(contexts, task.vocab_size, task.horizon)?;
    match cfg.init {
        PolicyInit::Uniform => {}
        PolicyInit::Perfect { margin } => {
            for x in 0..task.num_prompts() {
                let (pos, token) = task.answer(x);
                let ctx = policy.context_of(x, pos);
                policy.logits_mut().row_mut(ctx)[token] = margin;
            }
        }
        PolicyInit::Random { std } => {
            let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidConfig(format!("init std: {e}")))?;
            let mut rng = rng_from(cfg.seed, &[0x1417]);
            for x in policy.logits_mut().as_mut_slice() {
                *x = normal.sample(&mut rng);
            }
        }
    }
    Ok(policy)
}

/// Per-step training metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    pub prompt_id: usize,
    pub reward_mean: f64,
    pub divergence_mean: f64,
    pub validation_accuracy: Option<f64>,
    pub response_length: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub metrics: Vec<StepMetrics>,
}

fn learning_rate_at(cfg: &TrainerConfig, step: usize) -> f64 {
    if cfg.cosine_decay && cfg.steps > 0 {
        let progress = (step - 1) as f64 / cfg.steps as f64;
        cfg.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    } else {
        cfg.learning_rate
    }
}

/// Runs `cfg.steps` ascent steps, each on one prompt drawn uniformly from
/// the inner training split.
pub fn train(cfg: &TrainerConfig, task: &TaskSpec, splits: &Splits) -> Result<TrainOutcome> {
    cfg.validate()?;
    task.validate()?;
    if splits.inner_train.is_empty() {
        return Err(Error::InvalidSplit("inner train split is empty".into()));
    }
    let mut state = TrainState::new(init_policy(cfg, task)?);
    let mut rng = rng_from(cfg.seed, &[0x7e41]);
    let mut metrics = Vec::with_capacity(cfg.steps);
    let (spec, _) = cfg.regularizer();

    for step in 1..=cfg.steps {
        let prompt_id = splits.inner_train[rng.random_range(0..splits.inner_train.len())];
        let responses: Vec<Response> = (0..cfg.group_size)
            .map(|_| state.policy.sample_response(prompt_id, rng.random()))
            .collect();
        let rewards = RewardGroup::new(responses.iter().map(|y| task.reward(prompt_id, y)).collect())?;

        let mut div_total = 0.0;
        let mut cached: Option<(usize, f64)> = None;
        for y in &responses {
            let d = match cached {
                Some((len, d)) if len == y.len() => d,
                _ => sequence_divergence(spec, &state.policy, &state.reference, prompt_id, y)?,
            };
            cached = Some((y.len(), d));
            if d < 0.0 {
                state.negative_divergences += 1;
            }
            div_total += d;
        }
        let k = responses.len() as f64;
        let length_total: f64 = responses.iter().map(|y| y.len() as f64).sum();

        let grad = gradient(cfg, &state, prompt_id, &responses, &rewards)?;
        if !grad.is_finite() || !div_total.is_finite() {
            return Err(Error::NonFiniteGradient { step, potential: spec.to_string() });
        }
        state.policy.ascend(&grad, learning_rate_at(cfg, step));
        state.step = step;
        state.reward_sum += rewards.rewards().iter().sum::<f64>();
        state.divergence_sum += div_total;
        state.length_sum += length_total;
        state.samples += responses.len();

        let evaluate = step == cfg.steps || (cfg.eval_every > 0 && step % cfg.eval_every == 0);
        let validation_accuracy = if evaluate {
            Some(evaluate_accuracy(task, &state.policy, splits.validation_or_train(), EvalMode::Greedy)?)
        } else {
            None
        };
        metrics.push(StepMetrics {
            step,
            prompt_id,
            reward_mean: rewards.mean(),
            divergence_mean: div_total / k,
            validation_accuracy,
            response_length: length_total / k,
        });
    }
    Ok(TrainOutcome { state, metrics })
}
