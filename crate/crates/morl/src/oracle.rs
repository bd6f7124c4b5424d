//! Ground truth for the finite benchmarks: exhaustive return enumeration,
//! Pareto filtering, convex-coverage-set extraction, and the optimal
//! control frontier.
//!
//! Both benchmarks are small deterministic episodes, so every achievable
//! optimal return can be enumerated outright — by replaying each candidate
//! action sequence through the real environment step functions via
//! [`crate::envs::rollout`]. Because evaluation rollouts accumulate returns
//! through the same code path, an agent that executes an optimal action
//! sequence reproduces the oracle's return vector bit for bit, which is what
//! lets coverage be scored at tolerance zero.
//!
//! The convex coverage set (CCS) is the subset of returns that win the
//! scalarized comparison for at least one preference. Two extractors are
//! used: an exact convex-hull upper boundary for two objectives, and probing
//! against a dense preference grid for more.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::envs::{dst, ftn, replay_actions, Benchmark, DstMap, FruitTree, VectorEnv};
use crate::pref::{sample_uniform_simplex, Preference};
use crate::{Error, Result};

/// Seed of the flat-simplex portion of [`default_probe_grid`]; fixed so the
/// grid — and therefore every probed CCS — is one canonical object.
const PROBE_GRID_SEED: u64 = 0x6f7261;

/// How many flat-simplex probes [`default_probe_grid`] carries.
const PROBE_GRID_SAMPLES: usize = 100_000;

/// A finite set of discounted return vectors with a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionSet {
    points: Vec<Vec<f64>>,
    m: usize,
}

impl SolutionSet {
    /// Requires at least one point, consistent dimensions ≥ 2, finite entries.
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let m = points.first().map(|p| p.len()).unwrap_or(0);
        if m < 2 {
            return Err(Error::invalid("a solution set needs points with at least 2 objectives"));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != m {
                return Err(Error::invalid(format!(
                    "point {i} has {} objectives, expected {m}",
                    p.len()
                )));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("point {i} has a non-finite entry")));
            }
        }
        Ok(Self { points, m })
    }

    /// A set with no points. The dimension must still be declared, since
    /// every consumer validates against it.
    pub fn empty(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::invalid("a solution set needs points with at least 2 objectives"));
        }
        Ok(Self { points: Vec::new(), m })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn objective_count(&self) -> usize {
        self.m
    }
}

/// The convex-coverage subset of a [`SolutionSet`], remembering which parent
/// indices it kept.
#[derive(Debug, Clone, PartialEq)]
pub struct CcsSet {
    indices: Vec<usize>,
    points: Vec<Vec<f64>>,
    m: usize,
}

impl CcsSet {
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Indices into the parent set this CCS was extracted from, ascending.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains_index(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn objective_count(&self) -> usize {
        self.m
    }
}

/// Enumerates every optimal-candidate return of a benchmark by replaying
/// the relevant action sequences through the environment itself.
///
/// Deep Sea Treasure yields one return per treasure (its shortest path);
/// Fruit Tree Navigation yields one return per leaf.
pub fn enumerate_returns(bench: &Benchmark) -> Result<SolutionSet> {
    match bench {
        Benchmark::Dst(env) => dst_treasure_returns(env.map(), env.spec().gamma),
        Benchmark::Ftn(env) => ftn_leaf_returns(env.tree(), env.spec().gamma),
    }
}

/// Discounted return of each treasure's shortest path, in treasure order.
///
/// The shortest path to a treasure at (row, col) is col moves right along
/// the surface and row moves down — nothing on that path blocks, and no
/// shorter route exists since every move changes one coordinate by one.
/// Treasures whose shortest path exceeds the map's step bound are skipped.
pub fn dst_treasure_returns(map: &DstMap, gamma: f64) -> Result<SolutionSet> {
    let mut points = Vec::new();
    for t in map.treasures() {
        if t.row + t.col > map.spec().max_episode_steps {
            continue;
        }
        let mut actions = vec![dst::RIGHT; t.col];
        actions.extend(std::iter::repeat(dst::DOWN).take(t.row));
        let mut env = crate::envs::DstEnv::new(map.clone());
        points.push(replay_actions(&mut env, gamma, &actions)?.ret);
    }
    SolutionSet::new(points)
}

/// Discounted return of each leaf's path, in left-to-right leaf order.
pub fn ftn_leaf_returns(tree: &FruitTree, gamma: f64) -> Result<SolutionSet> {
    let depth = tree.depth();
    let mut points = Vec::with_capacity(1 << depth);
    for leaf in 0..1usize << depth {
        let actions: Vec<usize> = (0..depth).rev().map(|bit| (leaf >> bit) & 1).collect();
        let mut env = ftn::FtnEnv::new(tree.clone());
        points.push(replay_actions(&mut env, gamma, &actions)?.ret);
    }
    SolutionSet::new(points)
}

/// True when `a` dominates `b`: componentwise ≥ with at least one strict.
fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

/// Indices of the non-dominated points, ascending.
pub fn pareto_indices(points: &SolutionSet) -> Vec<usize> {
    let pts = points.points();
    (0..pts.len())
        .filter(|&i| pts.iter().all(|other| !dominates(other, &pts[i])))
        .collect()
}

/// The non-dominated subset: no other point is componentwise ≥ with at
/// least one coordinate strictly greater.
pub fn pareto_filter(points: &SolutionSet) -> SolutionSet {
    let keep = pareto_indices(points);
    let pts = keep.into_iter().map(|i| points.points()[i].clone()).collect();
    SolutionSet { points: pts, m: points.objective_count() }
}

/// Extracts the convex coverage set: points that attain the maximum
/// scalarized value for at least one preference.
///
/// Two objectives use an exact convex-hull upper boundary (only hull
/// vertices qualify; points on the interior of a hull edge are excluded).
/// Higher dimensions probe `probes` and keep, per probe, every point within
/// relative tolerance 1e-9 of that probe's maximum. Returned indices refer
/// to `points`. Duplicated points are counted once (lowest index wins).
pub fn ccs_extract(points: &SolutionSet, probes: &[Preference<f64>]) -> Result<CcsSet> {
    if probes.is_empty() {
        return Err(Error::invalid("CCS extraction needs a non-empty probe grid"));
    }
    if probes.iter().any(|p| p.dim() != points.objective_count()) {
        return Err(Error::invalid("probe dimension differs from the point dimension"));
    }
    // The CCS never contains a dominated point, and a dominated point tied in
    // utility with its dominator must not slip in through the tie tolerance —
    // so restrict attention to the Pareto subset up front.
    let mut candidates = pareto_indices(points);
    // One representative per distinct point.
    candidates.retain(|&i| {
        points.points()[..i].iter().all(|earlier| earlier != &points.points()[i])
    });

    let mut keep: Vec<usize> = if points.objective_count() == 2 {
        hull_upper_boundary(points, &candidates)
    } else {
        let mut marked = vec![false; candidates.len()];
        for probe in probes {
            let utilities: Vec<f64> = candidates
                .iter()
                .map(|&i| probe.utility(&points.points()[i]).expect("dims checked above"))
                .collect();
            let best = utilities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let tol = 1e-9 * best.abs();
            for (slot, &u) in utilities.iter().enumerate() {
                if u >= best - tol {
                    marked[slot] = true;
                }
            }
        }
        candidates.iter().zip(&marked).filter(|(_, &m)| m).map(|(&i, _)| i).collect()
    };
    keep.sort_unstable();
    let kept_points = keep.iter().map(|&i| points.points()[i].clone()).collect();
    Ok(CcsSet { indices: keep, points: kept_points, m: points.objective_count() })
}

/// Exact 2-objective CCS: vertices of the convex upper boundary of the
/// Pareto candidates, found by a monotone scan. Collinear interior points
/// are dropped (they never *strictly* win any preference a vertex doesn't).
fn hull_upper_boundary(points: &SolutionSet, candidates: &[usize]) -> Vec<usize> {
    let pts = points.points();
    let mut order: Vec<usize> = candidates.to_vec();
    // Pareto candidates have distinct first coordinates (equal x with
    // different y is a dominance; equal x and y was deduplicated).
    order.sort_by(|&a, &b| pts[a][0].total_cmp(&pts[b][0]));
    let cross = |a: &[f64], b: &[f64], c: &[f64]| -> f64 {
        (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
    };
    let mut chain: Vec<usize> = Vec::new();
    for &i in &order {
        while chain.len() >= 2
            && cross(&pts[chain[chain.len() - 2]], &pts[chain[chain.len() - 1]], &pts[i]) >= 0.0
        {
            chain.pop();
        }
        chain.push(i);
    }
    chain
}

/// The best scalarized value any CCS point achieves under `pref`.
pub fn optimal_control_frontier(ccs: &CcsSet, pref: &Preference<f64>) -> Result<f64> {
    if ccs.is_empty() {
        return Err(Error::invalid("optimal control frontier of an empty CCS"));
    }
    let mut best = f64::NEG_INFINITY;
    for p in ccs.points() {
        best = best.max(pref.utility(p)?);
    }
    Ok(best)
}

/// The canonical probe grid: 10^5 flat-simplex samples from a fixed seed,
/// all one-hot preferences, and all pairwise midpoints.
pub fn default_probe_grid(m: usize) -> Result<Vec<Preference<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_GRID_SEED);
    let mut probes = Vec::with_capacity(PROBE_GRID_SAMPLES + m + m * (m - 1) / 2);
    for _ in 0..PROBE_GRID_SAMPLES {
        probes.push(sample_uniform_simplex(m, &mut rng)?);
    }
    for i in 0..m {
        probes.push(Preference::one_hot(m, i)?);
        for j in i + 1..m {
            let mut w = vec![0.0; m];
            w[i] = 0.5;
            w[j] = 0.5;
            probes.push(Preference::new(w)?);
        }
    }
    Ok(probes)
}

/// Enumerates a benchmark's returns and extracts its CCS in one go.
///
/// For more than two objectives the default probe grid is augmented with
/// each nonnegative candidate's self-preference r/‖r‖₁ — for unit-norm
/// nonnegative returns (Fruit Tree leaves) that preference is a certificate
/// the point wins, so membership never hinges on probe density.
pub fn benchmark_ccs(bench: &Benchmark) -> Result<(SolutionSet, CcsSet)> {
    let sols = enumerate_returns(bench)?;
    let ccs = if sols.objective_count() == 2 {
        ccs_extract(&sols, &[Preference::uniform(2)?])?
    } else {
        let mut probes = default_probe_grid(sols.objective_count())?;
        for p in sols.points() {
            let sum: f64 = p.iter().sum();
            if p.iter().all(|x| *x >= 0.0) && sum > 0.0 {
                probes.push(Preference::new(p.iter().map(|x| x / sum).collect())?);
            }
        }
        ccs_extract(&sols, &probes)?
    };
    Ok((sols, ccs))
}
