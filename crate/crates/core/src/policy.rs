//! Exact tabular autoregressive softmax policies.
//!
//! A policy is a table of logits indexed by `(context, token)`. The context
//! at step `t` of a response to prompt `x` is `(x * T + t) mod C`, so every
//! conditional distribution is explicit and responses can be enumerated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::divergence::Simplex;
use crate::{Error, Result};

pub const MAX_VOCAB: usize = 256;
pub const MAX_HORIZON: usize = 16;

/// A dense `rows x cols` table of reals, used both for logits and for
/// gradients with respect to them.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitTable {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl LogitTable {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, got: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &LogitTable, scale: f64) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "table shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// One sampled or decoded response.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Response {
    pub tokens: Vec<usize>,
    pub terminal: bool,
}

impl Response {
    pub fn new(tokens: Vec<usize>) -> Self {
        Self { tokens, terminal: true }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// `context_id = (prompt_id * horizon + prefix_len) mod context_count`.
pub fn context_of(prompt_id: usize, prefix_len: usize, horizon: usize, context_count: usize) -> usize {
    (prompt_id * horizon + prefix_len) % context_count
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    logits: LogitTable,
    horizon: usize,
}

impl PolicyParams {
    /// Uniform policy (all logits zero).
    pub fn new(context_count: usize, vocab_size: usize, horizon: usize) -> Result<Self> {
        Self::from_logits(LogitTable::zeros(context_count, vocab_size), horizon)
    }

    pub fn from_logits(logits: LogitTable, horizon: usize) -> Result<Self> {
        if logits.rows() == 0 {
            return Err(Error::InvalidPolicy("need at least one context".into()));
        }
        if !(2..=MAX_VOCAB).contains(&logits.cols()) {
            return Err(Error::InvalidPolicy(format!("vocab size {} outside 2..={MAX_VOCAB}", logits.cols())));
        }
        if !(1..=MAX_HORIZON).contains(&horizon) {
            return Err(Error::InvalidPolicy(format!("horizon {horizon} outside 1..={MAX_HORIZON}")));
        }
        if !logits.is_finite() {
            return Err(Error::InvalidPolicy("logits must be finite".into()));
        }
        Ok(Self { logits, horizon })
    }

    pub fn context_count(&self) -> usize {
        self.logits.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.logits.cols()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn logits(&self) -> &LogitTable {
        &self.logits
    }

    /// Mutable access for initialisation; callers keep logits finite.
    pub fn logits_mut(&mut self) -> &mut LogitTable {
        &mut self.logits
    }

    pub fn context_of(&self, prompt_id: usize, prefix_len: usize) -> usize {
        context_of(prompt_id, prefix_len, self.horizon, self.context_count())
    }

    pub fn token_distribution(&self, context_id: usize) -> Simplex {
        Simplex::softmax(self.logits.row(context_id)).expect("finite logits give a valid simplex")
    }

    fn check_response(&self, response: &Response) -> Result<()> {
        if response.is_empty() || response.len() > self.horizon {
            return Err(Error::InvalidPolicy(format!(
                "response length {} outside 1..={}",
                response.len(),
                self.horizon
            )));
        }
        if let Some(&t) = response.tokens.iter().find(|&&t| t >= self.vocab_size()) {
            return Err(Error::InvalidPolicy(format!("token {t} >= vocab size {}", self.vocab_size())));
        }
        Ok(())
    }

    /// `log pi(y | x)` as a sum of per-step log-softmax terms.
    pub fn log_prob(&self, prompt_id: usize, response: &Response) -> Result<f64> {
        self.check_response(response)?;
        Ok(response
            .tokens
            .iter()
            .enumerate()
            .map(|(t, &tok)| {
                let row = self.logits.row(self.context_of(prompt_id, t));
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
                row[tok] - lse
            })
            .sum())
    }

    /// A full-horizon response drawn with `rng`.
    pub fn sample_with<R: Rng + ?Sized>(&self, prompt_id: usize, rng: &mut R) -> Response {
        let tokens = (0..self.horizon)
            .map(|t| {
                let dist = self.token_distribution(self.context_of(prompt_id, t));
                let u: f64 = rng.random();
                let mut acc = 0.0;
                dist.probs()
                    .iter()
                    .position(|p| {
                        acc += p;
                        u < acc
                    })
                    .unwrap_or(self.vocab_size() - 1)
            })
            .collect();
        Response::new(tokens)
    }

    pub fn sample_response(&self, prompt_id: usize, rng_seed: u64) -> Response {
        self.sample_with(prompt_id, &mut ChaCha8Rng::seed_from_u64(rng_seed))
    }

    /// Argmax decoding with ties broken towards the lowest token id.
    pub fn greedy_response(&self, prompt_id: usize) -> Response {
        let tokens = (0..self.horizon)
            .map(|t| {
                let row = self.logits.row(self.context_of(prompt_id, t));
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &l)| if l > best.1 { (i, l) } else { best })
                    .0
            })
            .collect();
        Response::new(tokens)
    }

    /// `grad_theta log pi(y | x)`: for each visited context, `onehot(y_t) - pi_t`.
    pub fn score_gradient(&self, prompt_id: usize, response: &Response) -> Result<LogitTable> {
        self.check_response(response)?;
        let mut grad = LogitTable::zeros(self.context_count(), self.vocab_size());
        for (t, &tok) in response.tokens.iter().enumerate() {
            let ctx = self.context_of(prompt_id, t);
            let dist = self.token_distribution(ctx);
            let row = grad.row_mut(ctx);
            for (g, p) in row.iter_mut().zip(dist.probs()) {
                *g -= p;
            }
            row[tok] += 1.0;
        }
        Ok(grad)
    }

    /// Gradient ascent step on the logits.
    pub fn ascend(&mut self, grad: &LogitTable, learning_rate: f64) {
        self.logits.add_scaled(grad, learning_rate);
    }
}

/// Every response of length `horizon` over `vocab_size` tokens, in
/// lexicographic order.
pub fn enumerate_responses(vocab_size: usize, horizon: usize) -> Vec<Response> {
    let total = vocab_size.pow(horizon as u32);
    (0..total)
        .map(|mut idx| {
            let mut tokens = vec![0; horizon];
            for slot in tokens.iter_mut().rev() {
                *slot = idx % vocab_size;
                idx /= vocab_size;
            }
            Response::new(tokens)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_token(l0: f64) -> PolicyParams {
        PolicyParams::from_logits(LogitTable::from_vec(1, 2, vec![l0, 0.0]).unwrap(), 1).unwrap()
    }

    #[test]
    fn context_examples() {
        assert_eq!(context_of(0, 0, 4, 8), 0);
        assert_eq!(context_of(1, 2, 4, 8), 6);
        assert_eq!(context_of(2, 0, 4, 8), 0);
    }

    #[test]
    fn shape_validation() {
        assert!(PolicyParams::new(0, 4, 2).is_err());
        assert!(PolicyParams::new(1, 1, 2).is_err());
        assert!(PolicyParams::new(1, 257, 2).is_err());
        assert!(PolicyParams::new(1, 4, 0).is_err());
        assert!(PolicyParams::new(1, 4, 17).is_err());
        let bad = LogitTable::from_vec(1, 2, vec![f64::NAN, 0.0]).unwrap();
        assert!(PolicyParams::from_logits(bad, 1).is_err());
    }

    #[test]
    fn distribution_examples() {
        let p = PolicyParams::new(1, 4, 1).unwrap();
        assert_eq!(p.token_distribution(0).probs(), &[0.25; 4]);
        let d = two_token(2f64.ln()).token_distribution(0);
        assert_relative_eq!(d.probs()[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(d.probs()[1], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn log_prob_examples() {
        let p = PolicyParams::new(4, 4, 2).unwrap();
        assert_relative_eq!(p.log_prob(0, &Response::new(vec![1, 3])).unwrap(), (1.0f64 / 16.0).ln(), epsilon = 1e-14);
        let q = two_token(2f64.ln());
        assert_relative_eq!(q.log_prob(0, &Response::new(vec![0])).unwrap(), (2.0f64 / 3.0).ln(), epsilon = 1e-15);
    }

    #[test]
    fn invalid_responses_rejected() {
        let p = PolicyParams::new(2, 3, 2).unwrap();
        assert!(p.log_prob(0, &Response::new(vec![3])).is_err());
        assert!(p.log_prob(0, &Response::new(vec![])).is_err());
        assert!(p.log_prob(0, &Response::new(vec![0, 0, 0])).is_err());
    }

    #[test]
    fn degenerate_policy_samples_its_mode() {
        let mut p = PolicyParams::new(3, 5, 4).unwrap();
        for ctx in 0..3 {
            p.logits_mut().row_mut(ctx)[2] = 30.0;
        }
        for seed in 0..20 {
            assert_eq!(p.sample_response(1, seed).tokens, vec![2; 4]);
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let p = PolicyParams::new(3, 5, 4).unwrap();
        assert_eq!(p.sample_response(2, 99), p.sample_response(2, 99));
        assert_eq!(p.sample_response(2, 99).len(), 4);
    }

    #[test]
    fn sampling_frequency() {
        let p = two_token(2f64.ln());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let zeros = (0..20_000).filter(|_| p.sample_with(0, &mut rng).tokens[0] == 0).count();
        let freq = zeros as f64 / 20_000.0;
        assert!((0.655..=0.678).contains(&freq), "{freq}");
    }

    #[test]
    fn greedy_breaks_ties_low() {
        let p = PolicyParams::new(2, 4, 2).unwrap();
        assert_eq!(p.greedy_response(0).tokens, vec![0, 0]);
    }

    #[test]
    fn score_rows_sum_to_zero_and_unvisited_are_zero() {
        let mut p = PolicyParams::new(6, 3, 2).unwrap();
        for (i, x) in p.logits_mut().as_mut_slice().iter_mut().enumerate() {
            *x = (i as f64 * 0.37).sin();
        }
        let g = p.score_gradient(1, &Response::new(vec![2, 0])).unwrap();
        for ctx in 0..6 {
            let sum: f64 = g.row(ctx).iter().sum();
            assert!(sum.abs() < 1e-12);
            if ctx != 2 && ctx != 3 {
                assert!(g.row(ctx).iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn enumeration_covers_all() {
        let all = enumerate_responses(3, 2);
        assert_eq!(all.len(), 9);
        assert_eq!(all[5].tokens, vec![1, 2]);
    }
}
