//! Post-hoc evaluation of a preference-conditioned agent.
//!
//! Four quantities summarize a trained model against its task's oracle
//! frontier: *coverage ratio* (precision/recall/F1 of the solutions the
//! agent actually finds against the convex coverage set), *adaptation
//! error* (mean relative utility gap to the optimal control frontier over
//! sampled preferences), *adaptation quality* (a bounded rescaling of that
//! error), and *average utility*. Everything here is a pure computation
//! over rollouts of a frozen model — no learning, no mutation beyond
//! stepping the environment.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::envs::{rollout, Benchmark, VectorEnv};
use crate::learner::greedy_action;
use crate::nn::MlpParams;
use crate::oracle::{benchmark_ccs, optimal_control_frontier, CcsSet, SolutionSet};
use crate::pref::{sample_uniform_simplex, Preference};
use crate::real::Real;
use crate::{Error, Result};

/// Match tolerance for frontiers built from executed rollouts: returns are
/// replayed through the same accumulation as the oracle's, so matches are
/// exact.
pub const EXECUTED_FRONTIER_EPSILON: f64 = 0.0;

/// Match tolerance for frontiers read off the network's Q-values, which
/// approximate rather than replay.
pub const PREDICTED_FRONTIER_EPSILON: f64 = 0.2;

/// Adaptation-quality scale for the treasure-hunt task, whose utilities are
/// large and negative-prone.
pub const DST_ALPHA: f64 = 0.01;

/// Adaptation-quality scale for the tree task, whose relative errors are
/// tiny.
pub const FTN_ALPHA: f64 = 10.0;

/// Preferences sampled when building a frontier for coverage.
pub const CR_SAMPLE_COUNT: usize = 2000;

/// Preferences sampled when estimating adaptation error and utility.
pub const AE_SAMPLE_COUNT: usize = 5000;

/// Relative tolerance under which two frontier points count as one
/// solution.
pub const DEDUP_RELATIVE_TOLERANCE: f64 = 1e-9;

// Evaluation RNG streams, so the coverage samples and the adaptation
// samples are independent of each other's counts.
const STREAM_FRONTIER: u64 = 0;
const STREAM_ADAPTATION: u64 = 1;

fn eval_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn l1_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

fn l1_norm(x: &[f64]) -> f64 {
    x.iter().map(|a| a.abs()).sum()
}

/// Precision, recall and their harmonic mean, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageRatio {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Coverage of the optimal frontier by a found solution set.
///
/// A found point x matches a frontier point y when ‖x − y‖₁ ≤ ε‖y‖₁ — at
/// ε = 0, exact equality. Precision is the fraction of found points that
/// match some frontier point; recall is the fraction of frontier points
/// matched by some found point; F1 their harmonic mean (0 whenever either
/// is 0). An empty found set scores 0 across the board.
pub fn coverage_ratio(found: &SolutionSet, ccs: &CcsSet, epsilon: f64) -> Result<CoverageRatio> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid(format!("match tolerance {epsilon} must be finite and >= 0")));
    }
    if ccs.is_empty() {
        return Err(Error::invalid("coverage against an empty frontier is undefined"));
    }
    if found.objective_count() != ccs.objective_count() {
        return Err(Error::invalid(format!(
            "found set has {} objectives, frontier has {}",
            found.objective_count(),
            ccs.objective_count()
        )));
    }
    if found.is_empty() {
        return Ok(CoverageRatio { precision: 0.0, recall: 0.0, f1: 0.0 });
    }
    let close = |x: &[f64], y: &[f64]| l1_distance(x, y) <= epsilon * l1_norm(y);
    let matched_found = found
        .points()
        .iter()
        .filter(|x| ccs.points().iter().any(|y| close(x, y)))
        .count();
    let matched_frontier = ccs
        .points()
        .iter()
        .filter(|y| found.points().iter().any(|x| close(x, y)))
        .count();
    let precision = matched_found as f64 / found.len() as f64;
    let recall = matched_frontier as f64 / ccs.len() as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(CoverageRatio { precision, recall, f1 })
}

/// Drops points that sit within `rel_tol` (relative L1) of an
/// earlier-listed point: x duplicates a kept y when
/// ‖x − y‖₁ ≤ rel_tol · max(‖x‖₁, ‖y‖₁). First occurrence wins.
///
/// Frontiers are deduplicated before coverage so that rolling out the same
/// policy a thousand times cannot inflate precision.
pub fn dedup_relative(points: &[Vec<f64>], rel_tol: f64) -> Vec<Vec<f64>> {
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for p in points {
        let duplicate = kept
            .iter()
            .any(|q| l1_distance(p, q) <= rel_tol * l1_norm(p).max(l1_norm(q)));
        if !duplicate {
            kept.push(p.clone());
        }
    }
    kept
}

/// One evaluated preference: its weights, the utility the agent's greedy
/// rollout achieved under it, and the best utility any frontier point
/// offers.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefRow {
    pub weights: Vec<f64>,
    pub agent_utility: f64,
    pub optimal_utility: f64,
}

impl PrefRow {
    /// CSV header for a table of `m`-objective rows:
    /// `w0,…,w{m-1},agent_utility,optimal_utility`.
    pub fn csv_header(m: usize) -> String {
        let mut header = String::new();
        for k in 0..m {
            header.push_str(&format!("w{k},"));
        }
        header.push_str("agent_utility,optimal_utility");
        header
    }

    pub fn to_csv(&self) -> String {
        let mut line = String::new();
        for w in &self.weights {
            line.push_str(&format!("{w},"));
        }
        line.push_str(&format!("{},{}", self.agent_utility, self.optimal_utility));
        line
    }
}

/// Mean relative utility gap, plus how many samples were set aside because
/// their optimal utility was too close to zero to divide by.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptationError {
    pub mean: f64,
    pub excluded: usize,
}

/// Mean over samples of |C(ω) − C_opt(ω)| / |C_opt(ω)|, where C(ω) is the
/// agent's achieved utility and C_opt(ω) the frontier's best.
///
/// Samples with |C_opt(ω)| < 1e-9 are excluded from the mean (the ratio is
/// ill-posed there) and counted in the result. It is an error for every
/// sample to be excluded.
pub fn adaptation_error<A>(
    mut agent: A,
    ccs: &CcsSet,
    samples: &[Preference<f64>],
) -> Result<AdaptationError>
where
    A: FnMut(&Preference<f64>) -> Result<Vec<f64>>,
{
    if samples.is_empty() {
        return Err(Error::invalid("adaptation error needs at least one preference sample"));
    }
    let mut rows = Vec::with_capacity(samples.len());
    for pref in samples {
        let ret = agent(pref)?;
        rows.push(PrefRow {
            weights: pref.weights().to_vec(),
            agent_utility: pref.utility(&ret)?,
            optimal_utility: optimal_control_frontier(ccs, pref)?,
        });
    }
    adaptation_error_from_rows(&rows)
}

/// [`adaptation_error`] over an already-evaluated table.
pub fn adaptation_error_from_rows(rows: &[PrefRow]) -> Result<AdaptationError> {
    if rows.is_empty() {
        return Err(Error::invalid("adaptation error needs at least one evaluated row"));
    }
    let mut total = 0.0;
    let mut included = 0usize;
    for row in rows {
        if row.optimal_utility.abs() < 1e-9 {
            continue;
        }
        total += (row.agent_utility - row.optimal_utility).abs() / row.optimal_utility.abs();
        included += 1;
    }
    if included == 0 {
        return Err(Error::invalid(
            "every sampled preference had near-zero optimal utility; the relative error is undefined",
        ));
    }
    Ok(AdaptationError { mean: total / included as f64, excluded: rows.len() - included })
}

/// 1 / (1 + α·ae): 1 at zero error, decreasing toward 0 as error grows.
pub fn adaptation_quality(ae: f64, alpha: f64) -> Result<f64> {
    if !(ae >= 0.0) || !ae.is_finite() {
        return Err(Error::invalid(format!("adaptation error {ae} must be finite and >= 0")));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!("alpha {alpha} must be finite and > 0")));
    }
    Ok(1.0 / (1.0 + alpha * ae))
}

/// Mean achieved utility ω⊺r̂ over the sampled preferences.
pub fn average_utility<A>(mut agent: A, samples: &[Preference<f64>]) -> Result<f64>
where
    A: FnMut(&Preference<f64>) -> Result<Vec<f64>>,
{
    if samples.is_empty() {
        return Err(Error::invalid("average utility needs at least one preference sample"));
    }
    let mut total = 0.0;
    for pref in samples {
        let ret = agent(pref)?;
        total += pref.utility(&ret)?;
    }
    Ok(total / samples.len() as f64)
}

/// The per-task adaptation-quality scale.
pub fn default_alpha(env: &Benchmark) -> f64 {
    match env {
        Benchmark::Dst(_) => DST_ALPHA,
        Benchmark::Ftn(_) => FTN_ALPHA,
    }
}

fn check_model_matches<F: Real>(env: &Benchmark, model: &MlpParams<F>) -> Result<()> {
    let spec = env.spec();
    if model.state_dim() != spec.state_dim
        || model.objective_count() != spec.objective_count
        || model.action_count() != spec.action_count
    {
        return Err(Error::invalid(format!(
            "model is ({}, {}, {}) over (state, objectives, actions); the task wants ({}, {}, {})",
            model.state_dim(),
            model.objective_count(),
            model.action_count(),
            spec.state_dim,
            spec.objective_count,
            spec.action_count
        )));
    }
    Ok(())
}

/// Discounted return of the frozen model's greedy policy under `pref`,
/// accumulated in f64 through the same path as the oracle's returns.
pub fn greedy_return<F: Real>(
    env: &mut Benchmark,
    model: &MlpParams<F>,
    pref: &Preference<f64>,
) -> Result<Vec<f64>> {
    check_model_matches(env, model)?;
    let pref_f = Preference::new(
        pref.weights().iter().map(|w| F::from_f64_lossy(*w)).collect::<Vec<F>>(),
    )?;
    let gamma = env.spec().gamma;
    let outcome = rollout(env, gamma, |state: &[f64]| {
        let state_f: Vec<F> = state.iter().map(|x| F::from_f64_lossy(*x)).collect();
        greedy_action(model, &state_f, &pref_f).expect("dimensions were validated above")
    })?;
    Ok(outcome.ret)
}

/// The solutions the agent actually executes: greedy rollout returns over
/// `samples` preferences from the flat simplex distribution, deduplicated.
pub fn executed_frontier<F: Real>(
    env: &mut Benchmark,
    model: &MlpParams<F>,
    samples: usize,
    seed: u64,
) -> Result<SolutionSet> {
    if samples == 0 {
        return Err(Error::invalid("a frontier needs at least one preference sample"));
    }
    check_model_matches(env, model)?;
    let m = env.spec().objective_count;
    let mut rng = eval_rng(seed, STREAM_FRONTIER);
    let mut points = Vec::with_capacity(samples);
    for _ in 0..samples {
        let pref = sample_uniform_simplex::<f64>(m, &mut rng)?;
        points.push(greedy_return(env, model, &pref)?);
    }
    SolutionSet::new(dedup_relative(&points, DEDUP_RELATIVE_TOLERANCE))
}

/// The solutions the agent *predicts*: for each sampled preference, the
/// Q-vector at the initial state and the greedy action, deduplicated.
/// These approximate returns rather than replay them, so coverage against
/// them uses the looser [`PREDICTED_FRONTIER_EPSILON`].
pub fn predicted_frontier<F: Real>(
    env: &mut Benchmark,
    model: &MlpParams<F>,
    samples: usize,
    seed: u64,
) -> Result<SolutionSet> {
    if samples == 0 {
        return Err(Error::invalid("a frontier needs at least one preference sample"));
    }
    check_model_matches(env, model)?;
    let m = env.spec().objective_count;
    let mut rng = eval_rng(seed, STREAM_FRONTIER);
    let start: Vec<F> = env.reset().iter().map(|x| F::from_f64_lossy(*x)).collect();
    let mut points = Vec::with_capacity(samples);
    for _ in 0..samples {
        let pref = sample_uniform_simplex::<F>(m, &mut rng)?;
        let action = greedy_action(model, &start, &pref)?;
        let q = crate::nn::mlp_forward(model, &start, &pref)?;
        points.push((0..m).map(|k| q[[action, k]].to_f64_lossy()).collect());
    }
    SolutionSet::new(dedup_relative(&points, DEDUP_RELATIVE_TOLERANCE))
}

/// What [`evaluate_model`] computes and how.
#[derive(Debug, Clone)]
pub struct EvalConfig {
    /// Preferences sampled for the coverage frontier.
    pub cr_samples: usize,
    /// Preferences sampled for adaptation error and average utility.
    pub ae_samples: usize,
    /// Coverage match tolerance; `None` picks the default for the frontier
    /// kind (0 executed, 0.2 predicted).
    pub cr_epsilon: Option<f64>,
    /// Build the frontier from predicted Q-vectors instead of executed
    /// rollouts.
    pub predicted: bool,
    /// Adaptation-quality scale; `None` picks the task default.
    pub alpha: Option<f64>,
    pub seed: u64,
}

impl EvalConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            cr_samples: CR_SAMPLE_COUNT,
            ae_samples: AE_SAMPLE_COUNT,
            cr_epsilon: None,
            predicted: false,
            alpha: None,
            seed,
        }
    }
}

/// The full evaluation: coverage ratio, adaptation error and quality,
/// average utility, and the per-preference table behind the latter three.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub cr_f1: f64,
    pub ae: f64,
    /// Adaptation-error samples excluded for near-zero optimal utility.
    pub ae_excluded: usize,
    pub aq: f64,
    pub avg_utility: f64,
    pub table: Vec<PrefRow>,
}

/// Evaluates a frozen model against its task's oracle frontier.
///
/// Identical inputs give an identical report: the preference samples come
/// from fixed RNG streams under `config.seed`, rollouts are greedy, and the
/// oracle frontier is canonical.
pub fn evaluate_model<F: Real>(
    env: &mut Benchmark,
    model: &MlpParams<F>,
    config: &EvalConfig,
) -> Result<EvalReport> {
    if config.cr_samples == 0 || config.ae_samples == 0 {
        return Err(Error::invalid("evaluation needs at least one sample for each metric"));
    }
    check_model_matches(env, model)?;
    let (_, ccs) = benchmark_ccs(env)?;
    let alpha = config.alpha.unwrap_or_else(|| default_alpha(env));

    let frontier = if config.predicted {
        predicted_frontier(env, model, config.cr_samples, config.seed)?
    } else {
        executed_frontier(env, model, config.cr_samples, config.seed)?
    };
    let epsilon = config.cr_epsilon.unwrap_or(if config.predicted {
        PREDICTED_FRONTIER_EPSILON
    } else {
        EXECUTED_FRONTIER_EPSILON
    });
    let coverage = coverage_ratio(&frontier, &ccs, epsilon)?;

    let m = env.spec().objective_count;
    let mut rng = eval_rng(config.seed, STREAM_ADAPTATION);
    let mut table = Vec::with_capacity(config.ae_samples);
    for _ in 0..config.ae_samples {
        let pref = sample_uniform_simplex::<f64>(m, &mut rng)?;
        let ret = greedy_return(env, model, &pref)?;
        table.push(PrefRow {
            weights: pref.weights().to_vec(),
            agent_utility: pref.utility(&ret)?,
            optimal_utility: optimal_control_frontier(&ccs, &pref)?,
        });
    }
    let ae = adaptation_error_from_rows(&table)?;
    let avg_utility =
        table.iter().map(|r| r.agent_utility).sum::<f64>() / table.len() as f64;
    Ok(EvalReport {
        precision: coverage.precision,
        recall: coverage.recall,
        cr_f1: coverage.f1,
        ae: ae.mean,
        ae_excluded: ae.excluded,
        aq: adaptation_quality(ae.mean, alpha)?,
        avg_utility,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::ccs_extract;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn set(points: &[&[f64]]) -> SolutionSet {
        SolutionSet::new(points.iter().map(|p| p.to_vec()).collect()).unwrap()
    }

    /// Three hull vertices: (0,4), (2,3), (4,0).
    fn toy_ccs() -> CcsSet {
        let sols = set(&[&[0.0, 4.0], &[2.0, 3.0], &[4.0, 0.0], &[1.0, 1.0]]);
        let ccs = ccs_extract(&sols, &[Preference::uniform(2).unwrap()]).unwrap();
        assert_eq!(ccs.len(), 3);
        ccs
    }

    #[test]
    fn full_recovery_scores_perfectly() {
        let ccs = toy_ccs();
        let found = SolutionSet::new(ccs.points().to_vec()).unwrap();
        let cr = coverage_ratio(&found, &ccs, 0.0).unwrap();
        assert_eq!((cr.precision, cr.recall, cr.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn partial_recovery_splits_precision_and_recall() {
        // Half the frontier, found exactly. The points are strictly convex
        // so all four are hull vertices.
        let sols = set(&[&[0.0, 4.0], &[2.0, 3.5], &[3.5, 2.0], &[4.0, 0.0]]);
        let ccs = ccs_extract(&sols, &[Preference::uniform(2).unwrap()]).unwrap();
        assert_eq!(ccs.len(), 4);
        let found = set(&[&[0.0, 4.0], &[2.0, 3.5]]);
        let cr = coverage_ratio(&found, &ccs, 0.0).unwrap();
        assert_eq!(cr.precision, 1.0);
        assert_eq!(cr.recall, 0.5);
        assert_abs_diff_eq!(cr.f1, 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn empty_found_set_scores_zero() {
        let ccs = toy_ccs();
        let found = SolutionSet::empty(2).unwrap();
        let cr = coverage_ratio(&found, &ccs, 0.0).unwrap();
        assert_eq!((cr.precision, cr.recall, cr.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn coverage_validates_its_inputs() {
        let ccs = toy_ccs();
        let found = set(&[&[0.0, 4.0]]);
        assert!(coverage_ratio(&found, &ccs, -0.1).is_err());
        assert!(coverage_ratio(&found, &ccs, f64::NAN).is_err());
        let found3 = set(&[&[0.0, 4.0, 1.0]]);
        assert!(coverage_ratio(&found3, &ccs, 0.0).is_err());
    }

    #[test]
    fn match_tolerance_is_relative_and_inclusive() {
        let ccs = toy_ccs(); // contains (2, 3), ‖y‖₁ = 5
        // ε = 0.1 allows L1 distance up to 0.5 around (2, 3).
        let at_boundary = set(&[&[2.5, 3.0]]);
        let cr = coverage_ratio(&at_boundary, &ccs, 0.1).unwrap();
        assert_eq!(cr.precision, 1.0);
        let beyond = set(&[&[2.51, 3.0]]);
        let cr = coverage_ratio(&beyond, &ccs, 0.1).unwrap();
        assert_eq!(cr.precision, 0.0);
        assert_eq!(cr.f1, 0.0);
    }

    #[test]
    fn several_matches_of_one_point_do_not_inflate_recall() {
        let ccs = toy_ccs();
        // Two distinct found points, both within ε of (2, 3) only.
        let found = set(&[&[2.2, 3.0], &[1.8, 3.0]]);
        let cr = coverage_ratio(&found, &ccs, 0.1).unwrap();
        assert_eq!(cr.precision, 1.0);
        assert_abs_diff_eq!(cr.recall, 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn exact_coverage_equals_set_intersection_on_integer_points() {
        let sols = set(&[&[0.0, 4.0], &[2.0, 3.0], &[4.0, 0.0]]);
        let ccs = ccs_extract(&sols, &[Preference::uniform(2).unwrap()]).unwrap();
        let found = set(&[&[2.0, 3.0], &[4.0, 0.0], &[7.0, 7.0]]);
        let cr = coverage_ratio(&found, &ccs, 0.0).unwrap();
        assert_abs_diff_eq!(cr.precision, 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cr.recall, 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn dedup_collapses_near_copies_and_keeps_the_first() {
        let points = vec![
            vec![1.0, 2.0],
            vec![1.0 + 1e-12, 2.0], // within 1e-9 relative
            vec![1.0, 2.0],
            vec![1.5, 2.0],
        ];
        let kept = dedup_relative(&points, DEDUP_RELATIVE_TOLERANCE);
        assert_eq!(kept, vec![vec![1.0, 2.0], vec![1.5, 2.0]]);
        // Exactly at the tolerance collapses; just beyond survives.
        let tol = 0.1;
        let boundary = vec![vec![1.0, 0.0], vec![1.0 + 0.1 * 1.1, 0.0]];
        assert_eq!(dedup_relative(&boundary, tol).len(), 1);
        let beyond = vec![vec![1.0, 0.0], vec![1.0 + 0.1 * 1.2, 0.0]];
        assert_eq!(dedup_relative(&beyond, tol).len(), 2);
    }

    #[test]
    fn oracle_playing_agent_has_zero_adaptation_error() {
        let ccs = toy_ccs();
        let samples: Vec<Preference<f64>> = vec![
            Preference::new(vec![0.9, 0.1]).unwrap(),
            Preference::new(vec![0.5, 0.5]).unwrap(),
            Preference::new(vec![0.1, 0.9]).unwrap(),
        ];
        // The agent answers with whichever frontier point is best for ω.
        let ae = adaptation_error(
            |pref| {
                let best = ccs
                    .points()
                    .iter()
                    .max_by(|a, b| {
                        pref.utility(a).unwrap().total_cmp(&pref.utility(b).unwrap())
                    })
                    .unwrap();
                Ok(best.clone())
            },
            &ccs,
            &samples,
        )
        .unwrap();
        assert_eq!(ae.mean, 0.0);
        assert_eq!(ae.excluded, 0);
    }

    #[test]
    fn stubborn_agent_matches_the_hand_computed_gap() {
        // Frontier (0,1), (0.6,0.6), (1,0); the agent always answers (1,0).
        let sols = set(&[&[0.0, 1.0], &[0.6, 0.6], &[1.0, 0.0]]);
        let ccs = ccs_extract(&sols, &[Preference::uniform(2).unwrap()]).unwrap();
        assert_eq!(ccs.len(), 3);
        let samples = vec![
            Preference::new(vec![1.0, 0.0]).unwrap(), // C = 1,   C_opt = 1
            Preference::new(vec![0.5, 0.5]).unwrap(), // C = 0.5, C_opt = 0.6
            Preference::new(vec![0.0, 1.0]).unwrap(), // C = 0,   C_opt = 1
        ];
        let ae = adaptation_error(|_| Ok(vec![1.0, 0.0]), &ccs, &samples).unwrap();
        let expected = (0.0 + 0.1 / 0.6 + 1.0) / 3.0;
        assert_abs_diff_eq!(ae.mean, expected, epsilon = 1e-12);
        assert_eq!(ae.excluded, 0);
    }

    #[test]
    fn adaptation_error_is_scale_invariant() {
        let scale = 37.5;
        let sols = set(&[&[0.0, 1.0], &[0.6, 0.6], &[1.0, 0.0]]);
        let scaled_sols = SolutionSet::new(
            sols.points().iter().map(|p| p.iter().map(|x| x * scale).collect()).collect(),
        )
        .unwrap();
        let probes = [Preference::uniform(2).unwrap()];
        let ccs = ccs_extract(&sols, &probes).unwrap();
        let scaled_ccs = ccs_extract(&scaled_sols, &probes).unwrap();
        let samples = vec![
            Preference::new(vec![0.7, 0.3]).unwrap(),
            Preference::new(vec![0.2, 0.8]).unwrap(),
        ];
        let plain = adaptation_error(|_| Ok(vec![0.6, 0.6]), &ccs, &samples).unwrap();
        let scaled =
            adaptation_error(|_| Ok(vec![0.6 * scale, 0.6 * scale]), &scaled_ccs, &samples)
                .unwrap();
        assert_abs_diff_eq!(plain.mean, scaled.mean, epsilon = 1e-12);
    }

    #[test]
    fn zero_optimal_utility_is_excluded_not_divided() {
        // Under ω = (0.5, 0.5) both frontier points score exactly 0.
        let sols = set(&[&[1.0, -1.0], &[-1.0, 1.0]]);
        let ccs = ccs_extract(&sols, &[Preference::uniform(2).unwrap()]).unwrap();
        let samples = vec![
            Preference::new(vec![0.5, 0.5]).unwrap(),
            Preference::new(vec![1.0, 0.0]).unwrap(), // C_opt = 1
        ];
        let ae = adaptation_error(|_| Ok(vec![1.0, -1.0]), &ccs, &samples).unwrap();
        assert_eq!(ae.excluded, 1);
        assert_eq!(ae.mean, 0.0); // the included sample is answered optimally
        let only_zero = vec![Preference::new(vec![0.5, 0.5]).unwrap()];
        assert!(adaptation_error(|_| Ok(vec![1.0, -1.0]), &ccs, &only_zero).is_err());
        assert!(adaptation_error(|_| Ok(vec![1.0, -1.0]), &ccs, &[]).is_err());
    }

    #[test]
    fn adaptation_quality_rescales_error_into_the_unit_interval() {
        assert_eq!(adaptation_quality(0.0, 10.0).unwrap(), 1.0);
        assert_abs_diff_eq!(
            adaptation_quality(0.01, 10.0).unwrap(),
            1.0 / 1.1,
            epsilon = 1e-15
        );
        let mut previous = 1.0;
        for ae in [0.01, 0.1, 1.0, 10.0] {
            let aq = adaptation_quality(ae, 10.0).unwrap();
            assert!(aq < previous && aq > 0.0);
            previous = aq;
        }
        assert!(adaptation_quality(-0.1, 10.0).is_err());
        assert!(adaptation_quality(0.1, 0.0).is_err());
        assert!(adaptation_quality(f64::NAN, 10.0).is_err());
    }

    #[test]
    fn average_utility_of_the_oracle_is_the_mean_frontier_value() {
        let ccs = toy_ccs();
        let samples = vec![
            Preference::new(vec![0.8, 0.2]).unwrap(),
            Preference::new(vec![0.3, 0.7]).unwrap(),
        ];
        let expected: f64 = samples
            .iter()
            .map(|p| optimal_control_frontier(&ccs, p).unwrap())
            .sum::<f64>()
            / samples.len() as f64;
        let got = average_utility(
            |pref| {
                let best = ccs
                    .points()
                    .iter()
                    .max_by(|a, b| {
                        pref.utility(a).unwrap().total_cmp(&pref.utility(b).unwrap())
                    })
                    .unwrap();
                Ok(best.clone())
            },
            &samples,
        )
        .unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
        assert!(average_utility(|_| Ok(vec![0.0, 0.0]), &[]).is_err());
    }

    #[test]
    fn random_agent_utility_matches_the_closed_form() {
        // A random-action agent lands on a uniformly random leaf, and the
        // flat simplex distribution has E[ω_k] = 1/m, so the expected
        // utility is the grand mean of all leaf-return components.
        let mut env = Benchmark::ftn(5, 7, 0.99).unwrap();
        let leaves = crate::oracle::enumerate_returns(&env).unwrap();
        let m = leaves.objective_count();
        let closed_form: f64 = leaves
            .points()
            .iter()
            .flat_map(|p| p.iter())
            .sum::<f64>()
            / (leaves.len() * m) as f64;

        let mut pref_rng = ChaCha8Rng::seed_from_u64(1);
        let samples: Vec<Preference<f64>> = (0..10_000)
            .map(|_| sample_uniform_simplex(m, &mut pref_rng).unwrap())
            .collect();
        let mut action_rng = ChaCha8Rng::seed_from_u64(2);
        let got = average_utility(
            |_| Ok(rollout(&mut env, 0.99, |_| action_rng.gen_range(0..2))?.ret),
            &samples,
        )
        .unwrap();
        assert!(
            (got - closed_form).abs() < 0.02,
            "Monte Carlo {got} vs closed form {closed_form}"
        );
    }

    /// A network whose Q-values are the per-action bias vectors, everywhere.
    fn bias_net(action_values: &[[f64; 2]]) -> MlpParams<f64> {
        use ndarray::{Array1, Array2};
        let out = action_values.len() * 2;
        let mut b = Array1::zeros(out);
        for (a, vals) in action_values.iter().enumerate() {
            b[a * 2] = vals[0];
            b[a * 2 + 1] = vals[1];
        }
        let layer = crate::nn::DenseLayer { w: Array2::zeros((4, out)), b };
        MlpParams::new(2, 2, action_values.len(), vec![layer]).unwrap()
    }

    #[test]
    fn executed_frontier_points_are_real_returns() {
        // Whatever the policy does, on the tree task every executed
        // frontier point must equal some enumerated leaf return
        // bit-for-bit, because rollouts and the oracle share one
        // accumulation path.
        let mut env = Benchmark::ftn(5, 7, 0.99).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = MlpParams::<f64>::mqn(2, 6, 2, &mut rng).unwrap();
        let frontier = executed_frontier(&mut env, &model, 100, 3).unwrap();
        let leaves = crate::oracle::enumerate_returns(&env).unwrap();
        assert!(!frontier.is_empty());
        for point in frontier.points() {
            assert!(
                leaves.points().iter().any(|leaf| leaf == point),
                "frontier point {point:?} is not a leaf return"
            );
        }
    }

    #[test]
    fn predicted_frontier_reads_the_chosen_q_vector() {
        let mut env = Benchmark::ftn(5, 7, 0.99).unwrap();
        // m = 6 for this task — build a 6-objective bias net.
        use ndarray::{Array1, Array2};
        let mut b = Array1::zeros(12);
        for k in 0..6 {
            b[k] = if k == 0 { 1.0 } else { 0.0 }; // action 0 → e₁
            b[6 + k] = if k == 1 { 1.0 } else { 0.0 }; // action 1 → e₂
        }
        let layer = crate::nn::DenseLayer { w: Array2::zeros((8, 12)), b };
        let model = MlpParams::new(2, 6, 2, vec![layer]).unwrap();
        let frontier = predicted_frontier(&mut env, &model, 200, 4).unwrap();
        // Every sampled preference picks either e₁ or e₂; dedup leaves at
        // most those two points, each exactly a standard basis vector.
        assert!(frontier.len() <= 2);
        for point in frontier.points() {
            let ones = point.iter().filter(|x| **x == 1.0).count();
            let zeros = point.iter().filter(|x| **x == 0.0).count();
            assert_eq!((ones, zeros), (1, 5), "unexpected point {point:?}");
        }
    }

    #[test]
    fn evaluation_is_deterministic_and_well_formed() {
        let mut env = Benchmark::ftn(5, 7, 0.99).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = MlpParams::<f32>::mqn(2, 6, 2, &mut rng).unwrap();
        let config = EvalConfig {
            cr_samples: 40,
            ae_samples: 60,
            cr_epsilon: None,
            predicted: false,
            alpha: None,
            seed: 5,
        };
        let report = evaluate_model(&mut env, &model, &config).unwrap();
        assert_eq!(report.table.len(), 60);
        assert!((0.0..=1.0).contains(&report.precision));
        assert!((0.0..=1.0).contains(&report.recall));
        assert!((0.0..=1.0).contains(&report.cr_f1));
        assert!(report.ae >= 0.0);
        assert!(report.aq > 0.0 && report.aq <= 1.0);
        assert!(report.avg_utility.is_finite());
        // The untrained policy can't beat the frontier.
        for row in &report.table {
            assert!(row.agent_utility <= row.optimal_utility + 1e-9);
        }
        let again = evaluate_model(&mut env, &model, &config).unwrap();
        assert_eq!(report, again);

        // CSV plumbing for the table.
        assert_eq!(PrefRow::csv_header(2), "w0,w1,agent_utility,optimal_utility");
        let row = PrefRow { weights: vec![0.25, 0.75], agent_utility: 1.5, optimal_utility: 2.0 };
        assert_eq!(row.to_csv(), "0.25,0.75,1.5,2");
    }

    #[test]
    fn evaluation_rejects_mismatched_models() {
        let mut env = Benchmark::ftn(5, 7, 0.99).unwrap();
        let model = bias_net(&[[1.0, 0.0], [0.0, 1.0]]); // 2 objectives, task has 6
        assert!(evaluate_model(&mut env, &model, &EvalConfig::new(0)).is_err());
        assert!(executed_frontier(&mut env, &model, 10, 0).is_err());
        let ok_model = {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            MlpParams::<f64>::mqn(2, 6, 2, &mut rng).unwrap()
        };
        assert!(executed_frontier(&mut env, &ok_model, 0, 0).is_err());
    }
}
