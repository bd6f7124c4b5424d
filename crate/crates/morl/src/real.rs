//! Scalar abstraction: every numeric module is generic over [`Real`].
//!
//! `f64` is used wherever tolerances are tight (tabular operators, oracles,
//! finite-difference gradient checks); `f32` is used by the deep learner,
//! where batched matrix products dominate the run time.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar usable across tables, environments, and networks.
pub trait Real:
    Float
    + NumAssignOps
    + FromPrimitive
    + ToPrimitive
    + ScalarOperand
    + LinalgScalar
    + Sum
    + Display
    + Debug
    + 'static
{
    /// Lossless-enough conversion from `f64` (rounds to nearest for `f32`).
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to any Real")
    }

    /// Widen to `f64` for accumulation, formatting, and RNG plumbing.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("Real widens to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Dot product of two equal-length slices, accumulated in the scalar itself.
#[inline]
pub fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = F::zero();
    for (x, y) in a.iter().zip(b) {
        acc = acc + *x * *y;
    }
    acc
}
