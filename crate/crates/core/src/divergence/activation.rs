//! The six activation families of the neural inverse potential and their
//! closed-form antiderivatives.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of hidden units in the neural inverse potential.
pub const NEURONS: usize = 126;
/// Units per activation family.
pub const UNITS_PER_KIND: usize = 21;
/// Shift inside the guarded logarithm, `log(max(u, 0) + LOG_SHIFT)`.
pub const LOG_SHIFT: f64 = 1e-3;
/// Arguments of the exponential are clamped to this value.
pub const EXP_CLAMP: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActivationKind {
    Cubic,
    Quadratic,
    SquareRoot,
    CubeRoot,
    LogShifted,
    Exponential,
}

#[inline]
fn pos(u: f64) -> f64 {
    u.max(0.0)
}

/// Antiderivative of `log(s + LOG_SHIFT)` in `s`, for `s >= 0`.
#[inline]
fn shifted_xlogx(s: f64) -> f64 {
    let t = s + LOG_SHIFT;
    t * t.ln() - t
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 6] = [
        ActivationKind::Cubic,
        ActivationKind::Quadratic,
        ActivationKind::SquareRoot,
        ActivationKind::CubeRoot,
        ActivationKind::LogShifted,
        ActivationKind::Exponential,
    ];

    /// Kind of the zero-based hidden unit `unit` (units 0..21 are cubic,
    /// 21..42 quadratic, and so on).
    ///
    /// Panics if `unit >= NEURONS`.
    pub fn of_unit(unit: usize) -> Self {
        assert!(unit < NEURONS, "unit index {unit} out of range");
        Self::ALL[unit / UNITS_PER_KIND]
    }

    /// `g(u)` with positive-part guards.
    pub fn apply(self, u: f64) -> f64 {
        match self {
            ActivationKind::Cubic => u * u * u,
            ActivationKind::Quadratic => pos(u).powi(2),
            ActivationKind::SquareRoot => pos(u).sqrt(),
            ActivationKind::CubeRoot => pos(u).cbrt(),
            ActivationKind::LogShifted => (pos(u) + LOG_SHIFT).ln(),
            ActivationKind::Exponential => u.min(EXP_CLAMP).exp(),
        }
    }

    /// `G(u)`, an antiderivative of [`apply`](Self::apply) in `u`.
    ///
    /// Below the kink of the guarded families the activation is constant, so
    /// the antiderivative continues linearly with that constant slope (zero
    /// for the power families, `log(LOG_SHIFT)` for the logarithm). Above the
    /// exponential clamp it continues with slope `e^EXP_CLAMP`.
    fn antiderivative(self, u: f64) -> f64 {
        match self {
            ActivationKind::Cubic => u.powi(4) / 4.0,
            ActivationKind::Quadratic => pos(u).powi(3) / 3.0,
            ActivationKind::SquareRoot => 2.0 / 3.0 * pos(u).powf(1.5),
            ActivationKind::CubeRoot => 0.75 * pos(u).powf(4.0 / 3.0),
            ActivationKind::LogShifted => {
                if u >= 0.0 {
                    shifted_xlogx(u)
                } else {
                    shifted_xlogx(0.0) + LOG_SHIFT.ln() * u
                }
            }
            ActivationKind::Exponential => {
                if u <= EXP_CLAMP {
                    u.exp()
                } else {
                    let cap = EXP_CLAMP.exp();
                    cap + cap * (u - EXP_CLAMP)
                }
            }
        }
    }

    /// `H(y) = G(w y + b) / w`, so that `dH/dy = g(w y + b)`.
    pub fn primitive(self, y: f64, w: f64, b: f64) -> Result<f64> {
        if w == 0.0 {
            return Err(Error::DegenerateWeight { unit: usize::MAX });
        }
        Ok(self.antiderivative(w * y + b) / w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn activation_examples() {
        assert_eq!(ActivationKind::Cubic.apply(2.0), 8.0);
        assert_relative_eq!(ActivationKind::LogShifted.apply(0.0), -6.907755278982137, epsilon = 1e-12);
        assert_eq!(ActivationKind::SquareRoot.apply(-1.0), 0.0);
        assert_eq!(ActivationKind::CubeRoot.apply(-8.0), 0.0);
        assert_eq!(ActivationKind::Quadratic.apply(-3.0), 0.0);
        assert_relative_eq!(ActivationKind::CubeRoot.apply(27.0), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn exponential_is_clamped() {
        let capped = ActivationKind::Exponential.apply(1e6);
        assert!(capped.is_finite());
        assert_eq!(capped, EXP_CLAMP.exp());
    }

    #[test]
    fn primitive_examples() {
        assert_eq!(ActivationKind::Exponential.primitive(0.0, 1.0, 0.0).unwrap(), 1.0);
        assert_eq!(ActivationKind::Cubic.primitive(1.0, 1.0, 0.0).unwrap(), 0.25);
    }

    #[test]
    fn zero_weight_is_rejected() {
        for kind in ActivationKind::ALL {
            assert!(matches!(kind.primitive(0.5, 0.0, 0.1), Err(Error::DegenerateWeight { .. })));
        }
    }

    #[test]
    fn layout_is_fixed() {
        assert_eq!(ActivationKind::of_unit(0), ActivationKind::Cubic);
        assert_eq!(ActivationKind::of_unit(20), ActivationKind::Cubic);
        assert_eq!(ActivationKind::of_unit(21), ActivationKind::Quadratic);
        assert_eq!(ActivationKind::of_unit(62), ActivationKind::SquareRoot);
        assert_eq!(ActivationKind::of_unit(63), ActivationKind::CubeRoot);
        assert_eq!(ActivationKind::of_unit(84), ActivationKind::LogShifted);
        assert_eq!(ActivationKind::of_unit(125), ActivationKind::Exponential);
    }

    // Central differences of H at y = 0.37, w = 1.3, b = -0.2 against g(u).
    #[test]
    fn primitive_differentiates_to_activation() {
        let (y, w, b, h) = (0.37, 1.3, -0.2, 1e-5);
        for kind in ActivationKind::ALL {
            let fd = (kind.primitive(y + h, w, b).unwrap() - kind.primitive(y - h, w, b).unwrap()) / (2.0 * h);
            let exact = kind.apply(w * y + b);
            assert_relative_eq!(fd, exact, max_relative = 1e-5);
        }
    }

    // The guarded branches: below the kink and above the exponential clamp.
    #[test]
    fn primitive_differentiates_across_guards() {
        let h = 1e-5;
        let cases = [
            (ActivationKind::LogShifted, -0.5, 1.0, 0.0),
            (ActivationKind::LogShifted, 0.5, -2.0, 0.1),
            (ActivationKind::Exponential, 0.5, 1.0, 70.0),
            (ActivationKind::Quadratic, 0.5, -1.0, 0.0),
        ];
        for (kind, y, w, b) in cases {
            let fd = (kind.primitive(y + h, w, b).unwrap() - kind.primitive(y - h, w, b).unwrap()) / (2.0 * h);
            let exact = kind.apply(w * y + b);
            assert_relative_eq!(fd, exact, max_relative = 1e-5, epsilon = 1e-9);
        }
    }
}
