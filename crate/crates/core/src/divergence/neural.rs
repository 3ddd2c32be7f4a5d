//! The 380-parameter neural inverse potential
//!
//! ```text
//! phi_inv(y) = sum_j v_j g_j(w_j y + b_j) + a y + c log y
//! h(y)       = sum_j v_j H_j(y) + (a/2) y^2 + c (y log y - y)
//! ```
//!
//! `h` is the scalar mirror potential whose derivative is `phi_inv`; the
//! per-action Bregman divergence is `h(y) - h(y0) - phi_inv(y0) (y - y0)`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::activation::{ActivationKind, NEURONS};
use super::clamp_prob;
use crate::{Error, Result};

/// Total number of scalar parameters: `v`, `w`, `b` (126 each), `a`, `c`.
pub const PARAM_COUNT: usize = 3 * NEURONS + 2;

/// Standard deviation of the coordinate-wise Gaussian initialisation.
pub const INIT_STD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralMirrorParams {
    /// Output weights.
    pub v: [f64; NEURONS],
    /// Input weights.
    pub w: [f64; NEURONS],
    /// Biases.
    pub b: [f64; NEURONS],
    /// Linear coefficient.
    pub a: f64,
    /// Logarithmic coefficient.
    pub c: f64,
}

impl Default for NeuralMirrorParams {
    fn default() -> Self {
        Self::zeros()
    }
}

impl NeuralMirrorParams {
    pub fn zeros() -> Self {
        Self { v: [0.0; NEURONS], w: [0.0; NEURONS], b: [0.0; NEURONS], a: 0.0, c: 0.0 }
    }

    /// `phi_inv(y) = log y`: the induced divergence is KL on the simplex.
    pub fn kl() -> Self {
        Self { c: 1.0, ..Self::zeros() }
    }

    /// `phi_inv(y) = y`: the induced divergence is half the squared L2 distance.
    pub fn prob_l2() -> Self {
        Self { a: 1.0, ..Self::zeros() }
    }

    /// Every coordinate drawn from `N(0, std^2)`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, std: f64) -> Self {
        let normal = Normal::new(0.0, std).expect("finite non-negative std");
        let flat: Vec<f64> = (0..PARAM_COUNT).map(|_| normal.sample(rng)).collect();
        Self::from_flat(&flat).expect("length is PARAM_COUNT")
    }

    /// Canonical flattening: `v`, `w`, `b`, `a`, `c`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(PARAM_COUNT);
        out.extend_from_slice(&self.v);
        out.extend_from_slice(&self.w);
        out.extend_from_slice(&self.b);
        out.push(self.a);
        out.push(self.c);
        out
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() != PARAM_COUNT {
            return Err(Error::DimensionMismatch { expected: PARAM_COUNT, got: flat.len() });
        }
        let mut p = Self::zeros();
        p.v.copy_from_slice(&flat[..NEURONS]);
        p.w.copy_from_slice(&flat[NEURONS..2 * NEURONS]);
        p.b.copy_from_slice(&flat[2 * NEURONS..3 * NEURONS]);
        p.a = flat[3 * NEURONS];
        p.c = flat[3 * NEURONS + 1];
        Ok(p)
    }

    /// `self + scale * direction` in flattened coordinates.
    pub fn perturbed(&self, direction: &[f64], scale: f64) -> Result<Self> {
        if direction.len() != PARAM_COUNT {
            return Err(Error::DimensionMismatch { expected: PARAM_COUNT, got: direction.len() });
        }
        let flat: Vec<f64> = self.flatten().iter().zip(direction).map(|(p, d)| p + scale * d).collect();
        Self::from_flat(&flat)
    }

    fn active_units(&self) -> impl Iterator<Item = usize> + '_ {
        (0..NEURONS).filter(move |&j| self.v[j] != 0.0)
    }

    /// The inverse potential at `y`, clamped into `[1e-6, 1]`.
    pub fn phi_inverse(&self, y: f64) -> f64 {
        let y = clamp_prob(y);
        let neural: f64 = self
            .active_units()
            .map(|j| self.v[j] * ActivationKind::of_unit(j).apply(self.w[j] * y + self.b[j]))
            .sum();
        neural + self.a * y + self.c * y.ln()
    }

    fn primitive(&self, j: usize, y: f64) -> Result<f64> {
        ActivationKind::of_unit(j)
            .primitive(y, self.w[j], self.b[j])
            .map_err(|_| Error::DegenerateWeight { unit: j })
    }

    /// The mirror potential `h(y)`; units with `v_j = 0` are skipped.
    pub fn mirror_potential(&self, y: f64) -> Result<f64> {
        let y = clamp_prob(y);
        let mut neural = 0.0;
        for j in self.active_units() {
            neural += self.v[j] * self.primitive(j, y)?;
        }
        Ok(neural + 0.5 * self.a * y * y + self.c * (y * y.ln() - y))
    }

    /// Per-action divergence split into neural, quadratic and entropic parts.
    pub fn bregman_per_action(&self, y: f64, y0: f64) -> Result<f64> {
        let y = clamp_prob(y);
        let y0 = clamp_prob(y0);
        let dy = y - y0;
        let mut neural = 0.0;
        for j in self.active_units() {
            let slope = ActivationKind::of_unit(j).apply(self.w[j] * y0 + self.b[j]);
            neural += self.v[j] * (self.primitive(j, y)? - self.primitive(j, y0)? - slope * dy);
        }
        let quadratic = 0.5 * self.a * dy * dy;
        let entropic = self.c * (y * (y / y0).ln() - dy);
        Ok(neural + quadratic + entropic)
    }
}

impl Serialize for NeuralMirrorParams {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.flatten().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for NeuralMirrorParams {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let flat = Vec::<f64>::deserialize(deserializer)?;
        Self::from_flat(&flat).map_err(serde::de::Error::custom)
    }
}
