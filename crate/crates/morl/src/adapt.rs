//! Few-shot recovery of a hidden preference from scalar returns.
//!
//! After training, the network covers the whole preference simplex — but a
//! deployed task reveals only a scalar reward, its preference hidden inside
//! the scalarization. This module searches for that preference with the
//! policy frozen: candidates ω are drawn from a Gaussian on the simplex
//! around a running estimate μ, each is rolled out greedily for one episode,
//! and μ moves by an equal blend of elite re-fitting (the mean of the
//! best-scoring candidates) and a score-function gradient step, then snaps
//! back to the simplex. Exploration lives entirely in ω-space; the rollouts
//! themselves are greedy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::envs::{Benchmark, VectorEnv};
use crate::metrics::greedy_return;
use crate::nn::MlpParams;
use crate::pref::{sample_truncated_gaussian_simplex, Preference, SimplexGaussianParams};
use crate::real::Real;
use crate::{Error, Result};

pub const DEFAULT_BUDGET: usize = 15;
pub const DEFAULT_POPULATION: usize = 5;
pub const DEFAULT_ELITE_FRACTION: f64 = 0.4;
pub const DEFAULT_SIGMA_INIT: f64 = 0.3;
pub const DEFAULT_SIGMA_DECAY: f64 = 0.9;
pub const DEFAULT_SIGMA_FLOOR: f64 = 0.05;
pub const DEFAULT_STEP_SIZE: f64 = 0.1;

/// Knobs of a preference search.
#[derive(Debug, Clone)]
pub struct InferenceConfig {
    /// Total episode budget; the search runs ⌊budget / population⌋ full
    /// generations and leaves any remainder unspent.
    pub budget: usize,
    /// Candidates per generation.
    pub population: usize,
    /// Fraction of each generation (rounded up) whose mean becomes the
    /// elite estimate.
    pub elite_fraction: f64,
    pub sigma_init: f64,
    /// Multiplies σ after every generation.
    pub sigma_decay: f64,
    /// σ never decays below this.
    pub sigma_floor: f64,
    /// Weight of the score-function gradient step on μ.
    pub step_size: f64,
    pub seed: u64,
}

impl InferenceConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            population: DEFAULT_POPULATION,
            elite_fraction: DEFAULT_ELITE_FRACTION,
            sigma_init: DEFAULT_SIGMA_INIT,
            sigma_decay: DEFAULT_SIGMA_DECAY,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
            step_size: DEFAULT_STEP_SIZE,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population == 0 {
            return Err(Error::invalid("population must be at least 1"));
        }
        if self.budget < self.population {
            return Err(Error::invalid(format!(
                "budget {} cannot pay for one generation of {}",
                self.budget, self.population
            )));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "elite fraction {} outside (0, 1]",
                self.elite_fraction
            )));
        }
        if !(self.sigma_init > 0.0) || !self.sigma_init.is_finite() {
            return Err(Error::invalid(format!(
                "initial sigma {} must be positive and finite",
                self.sigma_init
            )));
        }
        if !(self.sigma_decay > 0.0 && self.sigma_decay <= 1.0) {
            return Err(Error::invalid(format!(
                "sigma decay {} outside (0, 1]",
                self.sigma_decay
            )));
        }
        if !(self.sigma_floor > 0.0 && self.sigma_floor <= self.sigma_init) {
            return Err(Error::invalid(format!(
                "sigma floor {} must be in (0, sigma_init]",
                self.sigma_floor
            )));
        }
        if !(self.step_size >= 0.0) || !self.step_size.is_finite() {
            return Err(Error::invalid(format!(
                "step size {} must be nonnegative and finite",
                self.step_size
            )));
        }
        Ok(())
    }
}

/// One generation of the search, as recorded in the history.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    /// Best scalar return among this generation's candidates.
    pub best_return: f64,
    /// Mean scalar return (the gradient estimator's baseline).
    pub mean_return: f64,
    /// The σ the candidates were drawn with (before this generation's decay).
    pub sigma: f64,
    /// μ after this generation's update.
    pub mu: Vec<f64>,
}

impl GenerationRecord {
    /// CSV header for an m-objective history:
    /// `generation,best_return,mean_return,sigma,mu0,…,mu{m-1}`.
    pub fn csv_header(m: usize) -> String {
        let mut header = String::from("generation,best_return,mean_return,sigma");
        for k in 0..m {
            header.push_str(&format!(",mu{k}"));
        }
        header
    }

    pub fn to_csv(&self, generation: usize) -> String {
        let mut line =
            format!("{generation},{},{},{}", self.best_return, self.mean_return, self.sigma);
        for w in &self.mu {
            line.push_str(&format!(",{w}"));
        }
        line
    }
}

/// What a preference search returns: the final estimate and the
/// per-generation trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub mu: Preference<f64>,
    pub history: Vec<GenerationRecord>,
}

/// Core search loop over an arbitrary scalar-return source.
///
/// `scalar_episode` spends one episode of the budget: it receives a
/// candidate preference, runs whatever rollout it wraps, and returns the
/// hidden scalar return. μ starts uniform. Per generation, `population`
/// candidates are drawn from a truncated Gaussian on the simplex around μ;
/// the new μ is ½·(elite mean) + ½·(μ + step·∇̂), where ∇̂ is the
/// score-function estimate mean[(G − Ḡ)(ω − μ)]/σ² and the result is
/// clamped to nonnegative and renormalized back onto the simplex.
pub fn search_preference<S>(
    mut scalar_episode: S,
    m: usize,
    config: &InferenceConfig,
) -> Result<Inference>
where
    S: FnMut(&Preference<f64>) -> Result<f64>,
{
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut mu = Preference::<f64>::uniform(m)?;
    let mut sigma = config.sigma_init;
    let generations = config.budget / config.population;
    let elite_count =
        ((config.elite_fraction * config.population as f64).ceil() as usize).max(1);
    let mut history = Vec::with_capacity(generations);

    for _ in 0..generations {
        let params = SimplexGaussianParams::new(mu.clone(), sigma)?;
        let mut scored: Vec<(Preference<f64>, f64)> = Vec::with_capacity(config.population);
        for _ in 0..config.population {
            let candidate = sample_truncated_gaussian_simplex(&params, &mut rng)?;
            let ret = scalar_episode(&candidate)?;
            if !ret.is_finite() {
                return Err(Error::NonFinite("scalar episode return".into()));
            }
            scored.push((candidate, ret));
        }
        let mean_return =
            scored.iter().map(|(_, g)| g).sum::<f64>() / config.population as f64;
        let best_return =
            scored.iter().map(|(_, g)| *g).fold(f64::NEG_INFINITY, f64::max);

        // Elite re-fit: componentwise mean of the top candidates (stable
        // sort, so earlier draws win ties).
        let mut order: Vec<usize> = (0..scored.len()).collect();
        order.sort_by(|&a, &b| scored[b].1.total_cmp(&scored[a].1));
        let mut elite_mean = vec![0.0f64; m];
        for &i in order.iter().take(elite_count) {
            for (acc, w) in elite_mean.iter_mut().zip(scored[i].0.weights()) {
                *acc += w;
            }
        }
        for w in &mut elite_mean {
            *w /= elite_count as f64;
        }

        // Score-function gradient of the expected return at μ, baselined by
        // the generation mean. The candidate weights sum to 1 just like μ,
        // so the step preserves total mass and only the clamp can disturb it.
        let mut blended = vec![0.0f64; m];
        for (k, slot) in blended.iter_mut().enumerate() {
            let grad: f64 = scored
                .iter()
                .map(|(w, g)| (g - mean_return) * (w.weights()[k] - mu.weights()[k]))
                .sum::<f64>()
                / (config.population as f64 * sigma * sigma);
            let stepped = mu.weights()[k] + config.step_size * grad;
            *slot = (0.5 * elite_mean[k] + 0.5 * stepped).max(0.0);
        }
        let total: f64 = blended.iter().sum();
        for w in &mut blended {
            *w /= total;
        }
        mu = Preference::new(blended)?;
        history.push(GenerationRecord {
            best_return,
            mean_return,
            sigma,
            mu: mu.weights().to_vec(),
        });
        sigma = (sigma * config.sigma_decay).max(config.sigma_floor);
    }

    Ok(Inference { mu, history })
}

/// Recovers the scalarizing preference a task hides behind scalar rewards.
///
/// Each candidate preference is rolled out greedily (ε = 0) through the
/// frozen model, and the rollout's vector return is scored by `hidden` —
/// which is exactly the scalar discounted return an opaque scalar-reward
/// environment would have emitted, since scalarization is linear. The model
/// is borrowed immutably; inference cannot touch a single parameter.
pub fn infer_preference<F: Real>(
    model: &MlpParams<F>,
    env: &mut Benchmark,
    hidden: &Preference<f64>,
    config: &InferenceConfig,
) -> Result<Inference> {
    let m = env.spec().objective_count;
    if hidden.dim() != m {
        return Err(Error::invalid(format!(
            "hidden preference has {} objectives, the task has {m}",
            hidden.dim()
        )));
    }
    search_preference(
        |candidate| {
            let ret = greedy_return(env, model, candidate)?;
            hidden.utility(&ret)
        },
        m,
        config,
    )
}
