//! Linear preferences over objectives and the samplers that draw them.
//!
//! A preference ω is a nonnegative weight vector on the probability simplex;
//! it scalarizes a vector reward r as the utility ω⊺r. Training and
//! evaluation both draw preferences from explicit, seeded distributions:
//! the flat simplex distribution ([`sample_uniform_simplex`]) and a
//! clamp-and-renormalize truncated Gaussian centered on a simplex point
//! ([`sample_truncated_gaussian_simplex`]), the latter driving preference
//! inference.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::real::{dot, Real};
use crate::{Error, Result};

/// Vector-valued reward or return; one entry per objective.
pub type VectorReward<F> = Vec<F>;

/// How far the weight sum may drift from 1.
///
/// 1e-9 absolute for `f64`; for narrower scalars the tolerance is relaxed to
/// a few units in the last place, since 1e-9 is below `f32` resolution.
fn sum_tolerance<F: Real>(m: usize) -> F {
    let eps_based = F::epsilon() * F::from_f64_lossy(4.0 * m as f64);
    F::from_f64_lossy(1e-9).max(eps_based)
}

/// Nonnegative weights over m ≥ 2 objectives summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Preference<F> {
    weights: Vec<F>,
}

impl<F: Real> Preference<F> {
    /// Validates and wraps a weight vector.
    ///
    /// Requires m ≥ 2, every weight ≥ 0 and finite, and a sum within
    /// tolerance of 1.
    pub fn new(weights: Vec<F>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::invalid(format!(
                "preference needs at least 2 objectives, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < F::zero()) {
            return Err(Error::invalid("preference weights must be finite and nonnegative"));
        }
        let sum: F = weights.iter().copied().sum();
        if (sum - F::one()).abs() > sum_tolerance::<F>(weights.len()) {
            return Err(Error::invalid(format!("preference weights sum to {sum}, expected 1")));
        }
        Ok(Self { weights })
    }

    /// The uniform preference (1/m, …, 1/m).
    pub fn uniform(m: usize) -> Result<Self> {
        let w = F::one() / F::from_f64_lossy(m as f64);
        Self::new(vec![w; m])
    }

    /// All mass on objective `index`.
    pub fn one_hot(m: usize, index: usize) -> Result<Self> {
        if index >= m {
            return Err(Error::invalid(format!("one-hot index {index} out of range for m={m}")));
        }
        let mut w = vec![F::zero(); m];
        w[index] = F::one();
        Self::new(w)
    }

    /// Number of objectives.
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    /// Scalar utility ω⊺r of a vector reward under this preference.
    ///
    /// Errors when the reward dimension differs from the preference's.
    pub fn utility(&self, reward: &[F]) -> Result<F> {
        if reward.len() != self.weights.len() {
            return Err(Error::invalid(format!(
                "utility: reward has {} objectives, preference has {}",
                reward.len(),
                self.weights.len()
            )));
        }
        Ok(dot(&self.weights, reward))
    }

    /// Index of the largest weight (first one on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, w) in self.weights.iter().enumerate() {
            if *w > self.weights[best] {
                best = i;
            }
        }
        best
    }
}

/// Parameters of the truncated Gaussian on the simplex: center μ and a
/// shared per-coordinate standard deviation σ > 0.
#[derive(Debug, Clone)]
pub struct SimplexGaussianParams<F> {
    pub mu: Preference<F>,
    pub sigma: F,
}

impl<F: Real> SimplexGaussianParams<F> {
    /// Requires σ > 0 (μ carries its own simplex invariants).
    pub fn new(mu: Preference<F>, sigma: F) -> Result<Self> {
        if !(sigma > F::zero()) || !sigma.is_finite() {
            return Err(Error::invalid(format!("sigma must be positive and finite, got {sigma}")));
        }
        Ok(Self { mu, sigma })
    }
}

/// Draws a preference from the flat distribution on the (m−1)-simplex by
/// normalizing m independent unit-rate exponential draws.
///
/// Errors when m < 2. Deterministic given the RNG stream.
pub fn sample_uniform_simplex<F: Real>(m: usize, rng: &mut impl Rng) -> Result<Preference<F>> {
    if m < 2 {
        return Err(Error::invalid(format!("simplex sampling needs m >= 2, got {m}")));
    }
    let mut draws = vec![0.0f64; m];
    let mut sum = 0.0f64;
    for d in draws.iter_mut() {
        // -ln(1-u) with u in [0,1) is a unit-rate exponential; 1-u never hits 0.
        let u: f64 = rng.gen();
        *d = -(1.0 - u).ln();
        sum += *d;
    }
    let weights = draws.into_iter().map(|d| F::from_f64_lossy(d / sum)).collect();
    Preference::new(weights)
}

/// Maximum resample attempts before a degenerate (all-clamped-to-zero) draw
/// becomes an error.
const TRUNCATION_RETRIES: usize = 64;

/// Draws μ + σ·z with z standard normal per coordinate, clamps negatives to
/// zero, and renormalizes onto the simplex.
///
/// A draw whose clamp leaves no positive mass is retried a bounded number of
/// times and then reported as an error. σ → 0 recovers μ exactly.
pub fn sample_truncated_gaussian_simplex<F: Real>(
    params: &SimplexGaussianParams<F>,
    rng: &mut impl Rng,
) -> Result<Preference<F>> {
    let m = params.mu.dim();
    let sigma = params.sigma.to_f64_lossy();
    for _ in 0..TRUNCATION_RETRIES {
        let mut draws = vec![0.0f64; m];
        let mut sum = 0.0f64;
        for (d, mu_i) in draws.iter_mut().zip(params.mu.weights()) {
            let z: f64 = rng.sample(StandardNormal);
            *d = (mu_i.to_f64_lossy() + sigma * z).max(0.0);
            sum += *d;
        }
        if sum > 0.0 {
            let weights = draws.into_iter().map(|d| F::from_f64_lossy(d / sum)).collect();
            return Preference::new(weights);
        }
    }
    Err(Error::invalid(format!(
        "truncated Gaussian on the simplex degenerated to zero mass {TRUNCATION_RETRIES} times"
    )))
}
