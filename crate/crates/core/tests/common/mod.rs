#![allow(dead_code)]

use gbmpo::divergence::{NeuralMirrorParams, Simplex, NEURONS};
use gbmpo::policy::{LogitTable, PolicyParams};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Exp1, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw from the simplex (Dirichlet(1)), with every entry kept
/// above the clamp floor so that clamping never alters the inputs.
pub fn random_simplex(rng: &mut ChaCha8Rng, dim: usize) -> Simplex {
    loop {
        let w: Vec<f64> = (0..dim).map(|_| Exp1.sample(rng)).collect();
        let s = Simplex::from_weights(&w).unwrap();
        if s.probs().iter().all(|&p| p > 1e-5) {
            return s;
        }
    }
}

/// Neural parameters with O(1) weights: every activation family is
/// exercised away from degenerate scales.
pub fn random_neural(rng: &mut ChaCha8Rng) -> NeuralMirrorParams {
    let unit = Normal::new(0.0, 1.0).unwrap();
    let mut p = NeuralMirrorParams::zeros();
    for j in 0..NEURONS {
        p.v[j] = 0.3 * unit.sample(rng);
        p.w[j] = unit.sample(rng);
        p.b[j] = unit.sample(rng);
    }
    p.a = unit.sample(rng);
    p.c = unit.sample(rng);
    p
}

pub fn random_policy(rng: &mut ChaCha8Rng, contexts: usize, vocab: usize, horizon: usize) -> PolicyParams {
    let unit = Normal::new(0.0, 1.0).unwrap();
    let data = (0..contexts * vocab).map(|_| unit.sample(rng)).collect();
    PolicyParams::from_logits(LogitTable::from_vec(contexts, vocab, data).unwrap(), horizon).unwrap()
}

pub fn random_tokens(rng: &mut ChaCha8Rng, vocab: usize, len: usize) -> Vec<usize> {
    (0..len).map(|_| rng.random_range(0..vocab)).collect()
}
