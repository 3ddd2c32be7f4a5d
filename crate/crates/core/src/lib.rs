//! Group-based mirror policy optimization at desk scale.
//!
//! The crate is organised bottom-up:
//!
//! * [`divergence`]: potentials, the 380-parameter neural inverse potential,
//!   closed-form primitives and Bregman divergences on the simplex.
//! * [`advantage`]: group-relative advantage estimators (GRPO, Dr. GRPO).
//! * [`policy`]: exact tabular autoregressive softmax policies.
//! * [`tasks`]: synthetic verifiable-reward tasks and prompt splits.
//! * [`trainer`]: the regularized group objective, its exact gradient and
//!   the training loop.
//! * [`es`]: antithetic evolution strategies over mirror-map parameters
//!   with accept/reject and elite retention.
//! * [`runner`]: configuration, seeded multi-run execution, metric files and
//!   comparison reports.

pub mod advantage;
pub mod divergence;
mod error;
pub mod es;
pub mod policy;
pub mod rng;
pub mod runner;
pub mod tasks;
pub mod trainer;

pub use error::{Error, Result};
