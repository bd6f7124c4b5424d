//! Multi-objective Q-learning with linear preferences.
//!
//! A reward here is a vector, one entry per objective, and a *preference*
//! ω is a point on the probability simplex that scalarizes it as ω⊺r.
//! Instead of fixing one ω up front, the learner maintains a single
//! Q-function `Q(s, a, ω)` over the whole preference space and trains it
//! with an *envelope* Bellman backup: the target at preference ω may take
//! its continuation value from the best action under *any* candidate
//! preference ω′, not just ω itself. The result is one model that can be
//! handed any preference at run time and act near-optimally for it.
//!
//! The crate has three layers:
//!
//! - **Exact machinery** — [`moq::DiscreteMOQ`] tables over finite
//!   preference grids, the envelope backup operators and value iteration
//!   in [`tabular`], brute-force frontier/convex-coverage-set oracles in
//!   [`oracle`], and the two benchmark environments in [`envs`]
//!   (Deep Sea Treasure, Fruit Tree Navigation).
//! - **Deep learner** — a minimal MLP with manual backpropagation and Adam
//!   in [`nn`], plus the replay buffer, hindsight preference expansion,
//!   double-Q envelope targets, homotopy loss, and the training loop in
//!   [`learner`].
//! - **Evaluation** — coverage ratio / adaptation error / adaptation
//!   quality / average utility in [`metrics`], and few-shot preference
//!   inference against a frozen policy in [`adapt`].
//!
//! All numeric code is generic over a [`Real`] scalar. The shipped binary
//! trains in `f32` (throughput) and runs the exact tabular and oracle
//! paths in `f64` (tight tolerances); the aliases below name those two
//! instantiations.

pub mod adapt;
pub mod cli;
pub mod envs;
pub mod learner;
pub mod metrics;
pub mod moq;
pub mod nn;
pub mod oracle;
pub mod pref;
pub mod real;
pub mod tabular;

mod error;

pub use error::{Error, Result};
pub use real::Real;

/// Scalar used by the deep-learner paths in the shipped binary.
pub type TrainScalar = f32;
/// Scalar used by the exact tabular/oracle paths in the shipped binary.
pub type ExactScalar = f64;

/// Preference over objectives at the training scalar.
pub type Preference32 = pref::Preference<TrainScalar>;
/// Preference over objectives at the exact scalar.
pub type Preference64 = pref::Preference<ExactScalar>;
/// Dense tabular Q at the exact scalar.
pub type DiscreteMOQ64 = moq::DiscreteMOQ<ExactScalar>;
/// Network parameters at the training scalar.
pub type MlpParams32 = nn::MlpParams<TrainScalar>;
/// Network parameters at the exact scalar.
pub type MlpParams64 = nn::MlpParams<ExactScalar>;
