//! Antithetic evolution strategies over neural mirror-map parameters.
//!
//! Each iteration perturbs `psi` with `N` antithetic Gaussian directions,
//! scores every candidate, forms `grad J = 1/(N sigma) sum F_i eps_i` and
//! takes the step only if the mean fitness beats the best mean seen so far.
//! On rejection the top quarter of candidates (direction plus cached
//! fitness) is carried into the next iteration instead of being re-scored;
//! the fresh slots start with the elites' negations, then new pairs.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::divergence::{NeuralMirrorParams, PotentialSpec, INIT_STD, PARAM_COUNT};
use crate::rng::{derive_seed, rng_from};
use crate::tasks::{evaluate_accuracy, EvalMode, Splits, TaskSpec};
use crate::trainer::{train, RegularizerMode, TrainerConfig};
use crate::{Error, Result};

/// Fraction of the population kept as elites after a rejected update.
pub const ELITE_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitnessMode {
    /// Greedy accuracy on inner validation.
    GreedyAccuracy,
    /// pass@n on inner validation, sampling from the trained policy.
    PassAtN { n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsConfig {
    /// `N`, must be even.
    pub population: usize,
    /// `G`.
    pub iterations: usize,
    pub sigma0: f64,
    /// Per-iteration noise decay `gamma` in `(0, 1]`.
    pub decay: f64,
    pub learning_rate: f64,
    /// Inner training steps; `None` keeps the trainer template's value.
    pub inner_steps: Option<usize>,
    pub fitness: FitnessMode,
    pub seed: u64,
    pub init_std: f64,
}

impl Default for EsConfig {
    fn default() -> Self {
        Self {
            population: 12,
            iterations: 15,
            sigma0: 0.02,
            decay: 1.0,
            learning_rate: 0.01,
            inner_steps: Some(200),
            fitness: FitnessMode::GreedyAccuracy,
            seed: 0,
            init_std: INIT_STD,
        }
    }
}

impl EsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 || !self.population.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!("population must be even and >= 2, got {}", self.population)));
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma0 must be > 0, got {}", self.sigma0)));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::InvalidConfig(format!("decay must be in (0, 1], got {}", self.decay)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("es learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if !(self.init_std >= 0.0) {
            return Err(Error::InvalidConfig(format!("init_std must be >= 0, got {}", self.init_std)));
        }
        if let FitnessMode::PassAtN { n: 0 } = self.fitness {
            return Err(Error::InvalidConfig("pass@n needs n >= 1".into()));
        }
        Ok(())
    }

    pub fn elite_count(&self) -> usize {
        (self.population as f64 * ELITE_FRACTION).floor() as usize
    }

    /// `sigma_g = sigma0 * gamma^(g - 1)` for 1-based `g`.
    pub fn sigma_at(&self, iteration: usize) -> f64 {
        self.sigma0 * self.decay.powi(iteration as i32 - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Elite {
    pub perturbation: Vec<f64>,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsState {
    pub psi: NeuralMirrorParams,
    pub best_fitness: f64,
    pub elites: Vec<Elite>,
    /// Completed iterations.
    pub iteration: usize,
    /// Candidates actually scored (elites reuse their cached fitness).
    pub inner_runs: usize,
}

impl EsState {
    pub fn new(psi: NeuralMirrorParams) -> Self {
        Self { psi, best_fitness: f64::NEG_INFINITY, elites: Vec::new(), iteration: 0, inner_runs: 0 }
    }

    /// `psi_0` drawn coordinate-wise from `N(0, init_std^2)`.
    pub fn initial(cfg: &EsConfig) -> Self {
        let mut rng = rng_from(cfg.seed, &[0x1d17]);
        Self::new(NeuralMirrorParams::random(&mut rng, cfg.init_std))
    }
}

/// Scores a candidate mirror map. `iteration` is 1-based; `member` indexes
/// the candidate within the population.
pub trait Fitness: Sync {
    fn evaluate(&self, candidate: &NeuralMirrorParams, iteration: usize, member: usize) -> Result<f64>;
}

impl<F> Fitness for F
where
    F: Fn(&NeuralMirrorParams) -> f64 + Sync,
{
    fn evaluate(&self, candidate: &NeuralMirrorParams, _iteration: usize, _member: usize) -> Result<f64> {
        Ok(self(candidate))
    }
}

/// Trains a policy with the candidate map on inner train and scores it on
/// inner validation.
#[derive(Debug, Clone)]
pub struct InnerTrainingFitness<'a> {
    pub trainer: TrainerConfig,
    pub task: &'a TaskSpec,
    pub splits: &'a Splits,
    pub mode: FitnessMode,
    pub seed: u64,
}

impl<'a> InnerTrainingFitness<'a> {
    pub fn new(cfg: &EsConfig, template: &TrainerConfig, task: &'a TaskSpec, splits: &'a Splits) -> Self {
        let mut trainer = template.clone();
        trainer.mode = RegularizerMode::Bregman;
        if let Some(steps) = cfg.inner_steps {
            trainer.steps = steps;
        }
        Self { trainer, task, splits, mode: cfg.fitness, seed: cfg.seed }
    }
}

impl Fitness for InnerTrainingFitness<'_> {
    fn evaluate(&self, candidate: &NeuralMirrorParams, iteration: usize, member: usize) -> Result<f64> {
        let member_seed = derive_seed(self.seed, &[iteration as u64, member as u64]);
        let cfg = TrainerConfig {
            potential: PotentialSpec::neural(candidate.clone()),
            seed: member_seed,
            ..self.trainer.clone()
        };
        let outcome = train(&cfg, self.task, self.splits)?;
        let prompts = self.splits.validation_or_train();
        let mode = match self.mode {
            FitnessMode::GreedyAccuracy => EvalMode::Greedy,
            FitnessMode::PassAtN { n } => EvalMode::Sampled { n, seed: derive_seed(member_seed, &[0xe7a1]) },
        };
        evaluate_accuracy(self.task, &outcome.state.policy, prompts, mode)
    }
}

/// `n / 2` standard normal vectors, each followed by its negation.
pub fn antithetic_sample<R: Rng + ?Sized>(rng: &mut R, n: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
    if !n.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!("antithetic sampling needs an even count, got {n}")));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n / 2 {
        let eps: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let neg = eps.iter().map(|x| -x).collect();
        out.push(eps);
        out.push(neg);
    }
    Ok(out)
}

/// `1 / (N sigma) * sum_i F_i eps_i` with raw fitnesses.
pub fn es_gradient(perturbations: &[Vec<f64>], fitnesses: &[f64], sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::NonPositiveSigma(sigma));
    }
    if perturbations.len() != fitnesses.len() {
        return Err(Error::DimensionMismatch { expected: perturbations.len(), got: fitnesses.len() });
    }
    let Some(first) = perturbations.first() else {
        return Err(Error::InvalidConfig("empty population".into()));
    };
    let dim = first.len();
    let mut grad = vec![0.0; dim];
    for (eps, f) in perturbations.iter().zip(fitnesses) {
        if eps.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: eps.len() });
        }
        for (g, e) in grad.iter_mut().zip(eps) {
            *g += f * e;
        }
    }
    let scale = 1.0 / (perturbations.len() as f64 * sigma);
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok(grad)
}

/// Summary of one ES iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub sigma: f64,
    pub mean_fitness: f64,
    pub max_fitness: f64,
    pub best_fitness: f64,
    pub accepted: bool,
    /// Candidates scored this iteration (population minus reused elites).
    pub evaluated: usize,
    /// Candidates whose inner run failed and were scored 0.
    pub failed: usize,
}

/// One iteration of the accept/reject ES loop.
pub fn step<F: Fitness + ?Sized>(state: &EsState, cfg: &EsConfig, fitness: &F) -> Result<(EsState, IterationRecord)> {
    cfg.validate()?;
    let g = state.iteration + 1;
    let sigma = cfg.sigma_at(g);
    let n = cfg.population;

    let reused = state.elites.len().min(n);
    let fresh = n - reused;
    let mut rng = rng_from(cfg.seed, &[0xe5, g as u64]);
    // Each reused elite is completed by its mirror image so the raw-fitness
    // baseline still cancels pairwise in the gradient.
    let mirrored = reused.min(fresh);
    let mut fresh_eps: Vec<Vec<f64>> =
        state.elites[..mirrored].iter().map(|e| e.perturbation.iter().map(|x| -x).collect()).collect();
    let remaining = fresh - mirrored;
    fresh_eps.extend(antithetic_sample(&mut rng, remaining - remaining % 2, PARAM_COUNT)?);
    if remaining % 2 == 1 {
        fresh_eps.push((0..PARAM_COUNT).map(|_| rng.sample(StandardNormal)).collect());
    }

    let scored: Vec<(f64, bool)> = fresh_eps
        .par_iter()
        .enumerate()
        .map(|(i, eps)| {
            let member = reused + i;
            let result = state.psi.perturbed(eps, sigma).and_then(|c| fitness.evaluate(&c, g, member));
            match result {
                Ok(f) if f.is_finite() => (f, false),
                _ => (0.0, true),
            }
        })
        .collect();

    let mut perturbations: Vec<Vec<f64>> = state.elites[..reused].iter().map(|e| e.perturbation.clone()).collect();
    let mut fitnesses: Vec<f64> = state.elites[..reused].iter().map(|e| e.fitness).collect();
    perturbations.extend(fresh_eps);
    fitnesses.extend(scored.iter().map(|(f, _)| *f));

    let grad = es_gradient(&perturbations, &fitnesses, sigma)?;
    let mean = fitnesses.iter().sum::<f64>() / n as f64;
    let max = fitnesses.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut next = EsState {
        psi: state.psi.clone(),
        best_fitness: state.best_fitness,
        elites: Vec::new(),
        iteration: g,
        inner_runs: state.inner_runs + fresh,
    };
    let accepted = mean > state.best_fitness;
    if accepted {
        next.psi = state.psi.perturbed(&grad, cfg.learning_rate)?;
        next.best_fitness = mean;
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| fitnesses[b].total_cmp(&fitnesses[a]).then(a.cmp(&b)));
        next.elites = order
            .into_iter()
            .take(cfg.elite_count())
            .map(|i| Elite { perturbation: perturbations[i].clone(), fitness: fitnesses[i] })
            .collect();
    }
    let record = IterationRecord {
        iteration: g,
        sigma,
        mean_fitness: mean,
        max_fitness: max,
        best_fitness: next.best_fitness,
        accepted,
        evaluated: fresh,
        failed: scored.iter().filter(|(_, failed)| *failed).count(),
    };
    Ok((next, record))
}

#[derive(Debug, Clone)]
pub struct EsOutcome {
    pub state: EsState,
    pub history: Vec<IterationRecord>,
}

impl EsOutcome {
    pub fn psi(&self) -> &NeuralMirrorParams {
        &self.state.psi
    }
}

/// `G` iterations from `initial`.
pub fn run_from<F: Fitness + ?Sized>(initial: EsState, cfg: &EsConfig, fitness: &F) -> Result<EsOutcome> {
    cfg.validate()?;
    let mut state = initial;
    let mut history = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let (next, record) = step(&state, cfg, fitness)?;
        state = next;
        history.push(record);
    }
    Ok(EsOutcome { state, history })
}

/// `G` iterations from the Gaussian initialisation.
pub fn run<F: Fitness + ?Sized>(cfg: &EsConfig, fitness: &F) -> Result<EsOutcome> {
    run_from(EsState::initial(cfg), cfg, fitness)
}

/// Meta-learns a mirror map for `task` with GBMPO inner training.
pub fn run_on_task(cfg: &EsConfig, trainer: &TrainerConfig, task: &TaskSpec, splits: &Splits) -> Result<EsOutcome> {
    run(cfg, &InnerTrainingFitness::new(cfg, trainer, task, splits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn unit(dim: usize, i: usize) -> Vec<f64> {
        let mut e = vec![0.0; dim];
        e[i] = 1.0;
        e
    }

    #[test]
    fn antithetic_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let eps = antithetic_sample(&mut rng, 6, 10).unwrap();
        assert_eq!(eps.len(), 6);
        for pair in eps.chunks(2) {
            for (a, b) in pair[0].iter().zip(&pair[1]) {
                assert_eq!(*a, -b);
            }
        }
        for j in 0..10 {
            assert_eq!(eps.iter().map(|e| e[j]).sum::<f64>(), 0.0);
        }
        assert!(antithetic_sample(&mut rng, 3, 10).is_err());
    }

    #[test]
    fn gradient_examples() {
        let e = unit(4, 2);
        let neg: Vec<f64> = e.iter().map(|x| -x).collect();
        let g = es_gradient(&[e.clone(), neg.clone()], &[1.0, 0.0], 0.1).unwrap();
        assert_eq!(g, vec![0.0, 0.0, 5.0, 0.0]);

        let g = es_gradient(&[e.clone(), neg.clone()], &[0.7, 0.7], 0.1).unwrap();
        assert!(g.iter().all(|x| *x == 0.0));

        let e1 = unit(4, 0);
        let n1: Vec<f64> = e1.iter().map(|x| -x).collect();
        let g = es_gradient(&[e1, n1, e, neg], &[1.0, 1.0, 0.0, 0.0], 1.0).unwrap();
        assert!(g.iter().all(|x| *x == 0.0));

        assert!(matches!(es_gradient(&[unit(2, 0)], &[1.0], 0.0), Err(Error::NonPositiveSigma(_))));
    }

    #[test]
    fn sigma_schedule() {
        let cfg = EsConfig { sigma0: 0.02, decay: 1.0, ..Default::default() };
        assert!((1..=15).all(|g| cfg.sigma_at(g) == 0.02));
        let cfg = EsConfig { sigma0: 1.0, decay: 0.5, ..Default::default() };
        assert_eq!(cfg.sigma_at(3), 0.25);
    }

    #[test]
    fn config_validation() {
        assert!(EsConfig { population: 5, ..Default::default() }.validate().is_err());
        assert!(EsConfig { decay: 1.5, ..Default::default() }.validate().is_err());
        assert!(EsConfig { sigma0: 0.0, ..Default::default() }.validate().is_err());
        assert_eq!(EsConfig::default().elite_count(), 3);
    }

    fn state_with_best(best: f64) -> EsState {
        EsState { best_fitness: best, ..EsState::new(NeuralMirrorParams::zeros()) }
    }

    #[test]
    fn rejection_keeps_psi_and_saves_elites() {
        let cfg = EsConfig::default();
        let state = state_with_best(0.5);
        let (next, rec) = step(&state, &cfg, &|_: &NeuralMirrorParams| 0.4).unwrap();
        assert!(!rec.accepted);
        assert_eq!(next.psi, state.psi);
        assert_eq!(next.best_fitness, 0.5);
        assert_eq!(next.elites.len(), 3);
    }

    #[test]
    fn acceptance_updates_psi() {
        let cfg = EsConfig::default();
        let state = state_with_best(0.5);
        let f = |c: &NeuralMirrorParams| 0.6 + c.a;
        let (next, rec) = step(&state, &cfg, &f).unwrap();
        assert!(rec.accepted);
        assert!((next.best_fitness - 0.6).abs() < 1e-3);
        assert_ne!(next.psi, state.psi);
        assert!(next.elites.is_empty());
    }

    #[test]
    fn elites_are_reused_without_rescoring() {
        let cfg = EsConfig::default();
        let calls = AtomicUsize::new(0);
        struct Counting<'a>(&'a AtomicUsize);
        impl Fitness for Counting<'_> {
            fn evaluate(&self, c: &NeuralMirrorParams, _: usize, _: usize) -> Result<f64> {
                self.0.fetch_add(1, Ordering::SeqCst);
                Ok(-c.a.abs())
            }
        }
        let fit = Counting(&calls);
        let (s1, _) = step(&state_with_best(1.0), &cfg, &fit).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 12);
        assert_eq!(s1.elites.len(), 3);
        let (s2, rec) = step(&s1, &cfg, &fit).unwrap();
        assert_eq!(rec.evaluated, 9);
        assert_eq!(calls.load(Ordering::SeqCst), 21);
        assert_eq!(s2.inner_runs, 21);
    }

    #[test]
    fn failing_member_scores_zero() {
        struct Flaky;
        impl Fitness for Flaky {
            fn evaluate(&self, _: &NeuralMirrorParams, _: usize, member: usize) -> Result<f64> {
                if member == 1 {
                    Err(Error::NonFiniteGradient { step: 1, potential: "neural".into() })
                } else {
                    Ok(1.0)
                }
            }
        }
        let cfg = EsConfig { population: 4, ..Default::default() };
        let (_, rec) = step(&EsState::new(NeuralMirrorParams::zeros()), &cfg, &Flaky).unwrap();
        assert_eq!(rec.failed, 1);
        assert_eq!(rec.mean_fitness, 0.75);
    }

    #[test]
    fn zero_iterations_returns_init() {
        let cfg = EsConfig { iterations: 0, ..Default::default() };
        let out = run(&cfg, &|_: &NeuralMirrorParams| 1.0).unwrap();
        assert_eq!(out.state.psi, EsState::initial(&cfg).psi);
        assert!(out.history.is_empty());
    }
}
