//! Potentials and Bregman divergences on the probability simplex.
//!
//! `D_phi(p || q) = phi(p) - phi(q) - <grad phi(q), p - q>` for the four
//! potential families in [`PotentialSpec`]. All entries are clamped to
//! `[PROB_FLOOR, 1]` before any logarithm or power is taken.

mod activation;
mod neural;

pub use activation::{ActivationKind, EXP_CLAMP, LOG_SHIFT, NEURONS, UNITS_PER_KIND};
pub use neural::{NeuralMirrorParams, INIT_STD, PARAM_COUNT};

use std::fmt;

use crate::{Error, Result};

/// Lower clamp applied to probabilities before logs and powers.
pub const PROB_FLOOR: f64 = 1e-6;
/// Absolute tolerance on the sum of a [`Simplex`].
pub const SIMPLEX_TOL: f64 = 1e-9;

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0)
}

/// A probability distribution over a small vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Simplex(Vec<f64>);

impl Simplex {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidSimplex(format!("need at least 2 entries, got {}", probs.len())));
        }
        if let Some(bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidSimplex(format!("entry {bad} outside [0, 1]")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidSimplex(format!("entries sum to {sum}")));
        }
        Ok(Simplex(probs))
    }

    /// Normalises non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidSimplex("weights must be finite, non-negative, not all zero".into()));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    /// Numerically stable softmax of a logit row.
    pub fn softmax(logits: &[f64]) -> Result<Self> {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        Self::from_weights(&exps)
    }

    pub fn uniform(len: usize) -> Result<Self> {
        Self::new(vec![1.0 / len as f64; len])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<[f64]> for Simplex {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Which potential induces the divergence.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    /// `phi(p) = sum p log p`.
    Kl,
    /// `phi(p) = ||p||^2 / 2`.
    ProbL2,
    /// `phi(p) = sum (p^alpha - p) / (alpha (alpha - 1))`; construct with
    /// [`PotentialSpec::alpha`].
    Alpha(f64),
    /// Learned inverse potential.
    Neural(Box<NeuralMirrorParams>),
}

impl PotentialSpec {
    pub fn alpha(alpha: f64) -> Result<Self> {
        if alpha == 0.0 || alpha == 1.0 || !alpha.is_finite() {
            return Err(Error::InvalidAlpha(alpha));
        }
        Ok(PotentialSpec::Alpha(alpha))
    }

    pub fn neural(params: NeuralMirrorParams) -> Self {
        PotentialSpec::Neural(Box::new(params))
    }

    fn check(&self) -> Result<()> {
        match *self {
            PotentialSpec::Alpha(a) if a == 0.0 || a == 1.0 || !a.is_finite() => Err(Error::InvalidAlpha(a)),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialSpec::Kl => f.write_str("kl"),
            PotentialSpec::ProbL2 => f.write_str("prob-l2"),
            PotentialSpec::Alpha(a) => write!(f, "alpha({a})"),
            PotentialSpec::Neural(_) => f.write_str("neural"),
        }
    }
}

/// `D_phi(p || q)`.
pub fn bregman_simplex(spec: &PotentialSpec, p: &Simplex, q: &Simplex) -> Result<f64> {
    spec.check()?;
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch { expected: p.len(), got: q.len() });
    }
    let pairs = p.probs().iter().copied().zip(q.probs().iter().copied());
    let value = match spec {
        PotentialSpec::Kl => pairs
            .map(|(pi, qi)| if pi == 0.0 { 0.0 } else { pi * (pi / clamp_prob(qi)).ln() })
            .sum(),
        PotentialSpec::ProbL2 => 0.5 * pairs.map(|(pi, qi)| (pi - qi).powi(2)).sum::<f64>(),
        PotentialSpec::Alpha(alpha) => {
            let alpha = *alpha;
            let sum: f64 = pairs
                .map(|(pi, qi)| {
                    let (pi, qi) = (clamp_prob(pi), clamp_prob(qi));
                    pi.powf(alpha) - qi.powf(alpha) - alpha * qi.powf(alpha - 1.0) * (pi - qi)
                })
                .sum();
            sum / (alpha * (alpha - 1.0))
        }
        PotentialSpec::Neural(params) => {
            let mut total = 0.0;
            for (pi, qi) in pairs {
                total += params.bregman_per_action(pi, qi)?;
            }
            total
        }
    };
    Ok(value)
}

/// `grad phi(p)`, coordinate-wise on the clamped entries.
pub fn grad_phi(spec: &PotentialSpec, p: &Simplex) -> Result<Vec<f64>> {
    spec.check()?;
    let clamped = p.probs().iter().map(|&x| clamp_prob(x));
    let grad = match spec {
        PotentialSpec::Kl => clamped.map(|x| 1.0 + x.ln()).collect(),
        PotentialSpec::ProbL2 => clamped.collect(),
        PotentialSpec::Alpha(alpha) => {
            let alpha = *alpha;
            clamped.map(|x| (alpha * x.powf(alpha - 1.0) - 1.0) / (alpha * (alpha - 1.0))).collect()
        }
        PotentialSpec::Neural(params) => clamped.map(|x| params.phi_inverse(x)).collect(),
    };
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn s(v: &[f64]) -> Simplex {
        Simplex::new(v.to_vec()).unwrap()
    }

    #[test]
    fn simplex_validation() {
        assert!(Simplex::new(vec![1.0]).is_err());
        assert!(Simplex::new(vec![0.6, 0.6]).is_err());
        assert!(Simplex::new(vec![-0.1, 1.1]).is_err());
        assert!(Simplex::new(vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn prob_l2_example() {
        let d = bregman_simplex(&PotentialSpec::ProbL2, &s(&[1.0, 0.0]), &s(&[0.5, 0.5])).unwrap();
        assert_eq!(d, 0.25);
    }

    #[test]
    fn kl_example() {
        let d = bregman_simplex(&PotentialSpec::Kl, &s(&[0.75, 0.25]), &s(&[0.25, 0.75])).unwrap();
        // 0.75 ln 3 + 0.25 ln(1/3)
        assert_relative_eq!(d, 0.5 * 3f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn kl_zero_mass_terms_vanish() {
        let d = bregman_simplex(&PotentialSpec::Kl, &s(&[1.0, 0.0]), &s(&[0.5, 0.5])).unwrap();
        assert_relative_eq!(d, 2f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn kl_clamps_reference() {
        let d = bregman_simplex(&PotentialSpec::Kl, &s(&[0.5, 0.5]), &s(&[1.0, 0.0])).unwrap();
        assert!(d.is_finite());
        assert_relative_eq!(d, 0.5 * (0.5f64).ln() + 0.5 * (0.5 / PROB_FLOOR).ln(), epsilon = 1e-12);
    }

    #[test]
    fn grad_phi_examples() {
        assert_eq!(grad_phi(&PotentialSpec::ProbL2, &s(&[0.3, 0.7])).unwrap(), vec![0.3, 0.7]);
        let e = std::f64::consts::E;
        let g = grad_phi(&PotentialSpec::Kl, &s(&[1.0 / e, 1.0 - 1.0 / e])).unwrap();
        assert!(g[0].abs() < 1e-15);
    }

    #[test]
    fn invalid_alpha() {
        assert!(matches!(PotentialSpec::alpha(0.0), Err(Error::InvalidAlpha(_))));
        assert!(matches!(PotentialSpec::alpha(1.0), Err(Error::InvalidAlpha(_))));
        let p = s(&[0.5, 0.5]);
        assert!(bregman_simplex(&PotentialSpec::Alpha(1.0), &p, &p).is_err());
        assert!(PotentialSpec::alpha(-1.0).is_ok());
    }

    #[test]
    fn dimension_mismatch() {
        let r = bregman_simplex(&PotentialSpec::Kl, &s(&[0.5, 0.5]), &s(&[0.2, 0.3, 0.5]));
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn softmax_shift_invariant() {
        let a = Simplex::softmax(&[0.3, -1.0, 2.0]).unwrap();
        let b = Simplex::softmax(&[5.3, 4.0, 7.0]).unwrap();
        for (x, y) in a.probs().iter().zip(b.probs()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
