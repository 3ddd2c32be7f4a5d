mod common;

use approx::assert_relative_eq;
use common::{random_neural, random_policy, random_tokens, rng};
use gbmpo::advantage::RewardGroup;
use gbmpo::divergence::{bregman_simplex, PotentialSpec};
use gbmpo::policy::{enumerate_responses, LogitTable, PolicyParams, Response};
use gbmpo::tasks::{evaluate_accuracy, EvalMode, SplitSpec, TaskKind, TaskSpec};
use gbmpo::trainer::{
    divergence_gradient, gradient, objective, sampled_divergence_gradient, sequence_divergence, train, RegularizerMode,
    TrainState, TrainerConfig,
};
use rand::Rng;

fn kinds(r: &mut rand_chacha::ChaCha8Rng) -> Vec<PotentialSpec> {
    vec![
        PotentialSpec::Kl,
        PotentialSpec::ProbL2,
        PotentialSpec::Alpha(-1.0),
        PotentialSpec::Alpha(0.5),
        PotentialSpec::Alpha(3.0),
        PotentialSpec::neural(random_neural(r)),
    ]
}

#[test]
fn objective_single_term_example() {
    let (a, log_ratio, div, coeff, l) = (0.5, 0.2, 0.1, 1e-4, 1.0);
    let value: f64 = (a * log_ratio - coeff * div) / l;
    assert_relative_eq!(value, 0.09999, epsilon = 1e-15);
}

#[test]
fn objective_matches_hand_assembled_sum() {
    let mut r = rng(20);
    for spec in kinds(&mut r) {
        let policy = random_policy(&mut r, 4, 3, 2);
        let reference = random_policy(&mut r, 4, 3, 2);
        let state = TrainState::with_reference(policy.clone(), reference.clone());
        let cfg = TrainerConfig { group_size: 4, bregman_coeff: 0.3, potential: spec.clone(), ..Default::default() };
        let ys: Vec<Response> = (0..4).map(|_| Response::new(random_tokens(&mut r, 3, 2))).collect();
        let rewards = RewardGroup::new(vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let adv = [0.5, -0.5, -0.5, 0.5];
        let expected: f64 = ys
            .iter()
            .zip(adv)
            .map(|(y, a)| {
                let lr = policy.log_prob(1, y).unwrap() - reference.log_prob(1, y).unwrap();
                a * lr - 0.3 * sequence_divergence(&spec, &policy, &reference, 1, y).unwrap()
            })
            .sum::<f64>()
            / (4.0 * 2.0);
        assert_relative_eq!(objective(&cfg, &state, 1, &ys, &rewards).unwrap(), expected, epsilon = 1e-14);
    }
}

#[test]
fn sequence_divergence_resums_per_step_values() {
    let mut r = rng(21);
    for _ in 0..20 {
        let (c, v, t) = (r.random_range(1..6), r.random_range(2..5), r.random_range(1..4));
        let policy = random_policy(&mut r, c, v, t);
        let reference = random_policy(&mut r, c, v, t);
        let spec = if r.random::<bool>() { PotentialSpec::Kl } else { PotentialSpec::ProbL2 };
        let prompt = r.random_range(0..5);
        let y = Response::new(random_tokens(&mut r, v, t));
        let mut oracle = 0.0;
        for step in 0..t {
            let ctx = (prompt * t + step) % c;
            oracle += bregman_simplex(&spec, &policy.token_distribution(ctx), &reference.token_distribution(ctx)).unwrap();
        }
        let d = sequence_divergence(&spec, &policy, &reference, prompt, &y).unwrap();
        assert!((d - oracle).abs() < 1e-12);
    }
}

fn fd_check(cfg: &TrainerConfig, state: &TrainState, prompt: usize, ys: &[Response], rewards: &RewardGroup) {
    let h = 1e-5;
    let g = gradient(cfg, state, prompt, ys, rewards).unwrap();
    for i in 0..g.as_slice().len() {
        let mut plus = state.clone();
        plus.policy.logits_mut().as_mut_slice()[i] += h;
        let mut minus = state.clone();
        minus.policy.logits_mut().as_mut_slice()[i] -= h;
        let fd = (objective(cfg, &plus, prompt, ys, rewards).unwrap() - objective(cfg, &minus, prompt, ys, rewards).unwrap())
            / (2.0 * h);
        assert_relative_eq!(fd, g.as_slice()[i], max_relative = 1e-3, epsilon = 1e-9);
    }
}

#[test]
fn gradient_matches_finite_differences_for_every_kind() {
    let mut r = rng(22);
    for spec in kinds(&mut r) {
        for _ in 0..5 {
            let policy = random_policy(&mut r, 4, 3, 2);
            let reference = random_policy(&mut r, 4, 3, 2);
            let state = TrainState::with_reference(policy, reference);
            let cfg = TrainerConfig { group_size: 4, bregman_coeff: 0.5, potential: spec.clone(), ..Default::default() };
            let ys: Vec<Response> = (0..4).map(|_| Response::new(random_tokens(&mut r, 3, 2))).collect();
            let rewards = RewardGroup::new((0..4).map(|_| if r.random::<bool>() { 1.0 } else { 0.0 }).collect()).unwrap();
            fd_check(&cfg, &state, r.random_range(0..3), &ys, &rewards);
        }
    }
}

#[test]
fn sampled_estimator_expectation_equals_exact_gradient() {
    let mut r = rng(23);
    for spec in kinds(&mut r) {
        for (contexts, horizon) in [(1, 1), (3, 2)] {
            let policy = random_policy(&mut r, contexts, 3, horizon);
            let reference = random_policy(&mut r, contexts, 3, horizon);
            let exact = divergence_gradient(&spec, &policy, &reference, 0, &Response::new(vec![0; horizon])).unwrap();
            let mut expectation = LogitTable::zeros(contexts, 3);
            for y in enumerate_responses(3, horizon) {
                let weight = policy.log_prob(0, &y).unwrap().exp();
                expectation.add_scaled(&sampled_divergence_gradient(&spec, &policy, &reference, 0, &y).unwrap(), weight);
            }
            for (a, b) in exact.as_slice().iter().zip(expectation.as_slice()) {
                assert!((a - b).abs() < 1e-8, "{spec}: {a} vs {b}");
            }
        }
    }
}

fn single_bandit() -> (TaskSpec, gbmpo::tasks::Splits) {
    let task = TaskSpec::new(TaskKind::GroupBandit { targets: vec![2] }, 4, 1).unwrap();
    let splits = SplitSpec { inner_train_fraction: 1.0, outer_test: vec![] }.resolve(1).unwrap();
    (task, splits)
}

#[test]
fn small_bandit_converges() {
    let (task, splits) = single_bandit();
    let cfg = TrainerConfig { group_size: 8, learning_rate: 0.5, steps: 500, potential: PotentialSpec::ProbL2, ..Default::default() };
    let out = train(&cfg, &task, &splits).unwrap();
    assert_eq!(evaluate_accuracy(&task, &out.state.policy, &splits.inner_train, EvalMode::Greedy).unwrap(), 1.0);
    assert_eq!(out.metrics.last().unwrap().validation_accuracy, Some(1.0));
}

#[test]
fn training_is_deterministic_and_reference_is_frozen() {
    let task = TaskSpec::periodic_bandit(6, 6, 5, 2, 4).unwrap();
    let splits = SplitSpec::default().resolve(6).unwrap();
    let cfg = TrainerConfig { steps: 100, seed: 9, potential: PotentialSpec::Alpha(0.5), bregman_coeff: 0.1, ..Default::default() };
    let a = train(&cfg, &task, &splits).unwrap();
    let b = train(&cfg, &task, &splits).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.state, b.state);
    let initial = gbmpo::trainer::init_policy(&cfg, &task).unwrap();
    assert_eq!(a.state.reference(), &initial);
    assert_ne!(a.state.policy, initial);
}

#[test]
fn kl_penalty_mode_is_bregman_kl() {
    let task = TaskSpec::periodic_bandit(4, 4, 6, 2, 1).unwrap();
    let splits = SplitSpec::default().resolve(4).unwrap();
    let kl_mode = TrainerConfig { mode: RegularizerMode::KlPenalty, kl_beta: 0.05, steps: 150, seed: 3, ..Default::default() };
    let bregman = TrainerConfig {
        mode: RegularizerMode::Bregman,
        potential: PotentialSpec::Kl,
        bregman_coeff: 0.05,
        kl_beta: 0.0,
        ..kl_mode.clone()
    };
    let a = train(&kl_mode, &task, &splits).unwrap();
    let b = train(&bregman, &task, &splits).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.state.policy, b.state.policy);
}

#[test]
fn degenerate_group_applies_only_regularization() {
    let mut r = rng(24);
    let policy = random_policy(&mut r, 2, 3, 1);
    let reference = PolicyParams::new(2, 3, 1).unwrap();
    let state = TrainState::with_reference(policy.clone(), reference.clone());
    let cfg = TrainerConfig { group_size: 2, bregman_coeff: 1.0, potential: PotentialSpec::ProbL2, ..Default::default() };
    let ys = vec![Response::new(vec![0]), Response::new(vec![1])];
    let g = gradient(&cfg, &state, 0, &ys, &RewardGroup::new(vec![1.0, 1.0]).unwrap()).unwrap();
    let dg = divergence_gradient(&PotentialSpec::ProbL2, &policy, &reference, 0, &ys[0]).unwrap();
    for (a, b) in g.as_slice().iter().zip(dg.as_slice()) {
        assert!((a + b).abs() < 1e-15);
    }
}
