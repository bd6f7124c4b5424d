//! Exact envelope Q-learning machinery on finite MOMDPs.
//!
//! Everything here operates on dense [`DiscreteMOQ`] tables over an explicit
//! preference grid, with no sampling and no approximation beyond the grid
//! itself: the optimality filter H, the optimality backup T, the policy
//! evaluation backup T_π, and value iteration driven by T. These are the
//! operators whose contraction and fixed-point behaviour the property tests
//! pin down, and the planner that the frontier oracle cross-checks.
//!
//! Conventions shared by all operators:
//!
//! - arg-max ties break to the lowest index — lowest action id first, then
//!   lowest preference-grid id — so every run is reproducible;
//! - a terminal successor contributes zero continuation, whatever its rows
//!   of the table happen to hold;
//! - value iteration starts from the zero table, which makes the geometric
//!   decay of successive distances directly checkable.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};

use crate::envs::{Benchmark, DstMap, FruitTree, VectorEnv};
use crate::moq::{pseudo_metric_d, DiscreteMOQ};
use crate::pref::Preference;
use crate::real::{dot, Real};
use crate::{Error, Result};

/// Stopping threshold for [`envelope_value_iteration`], in the units of
/// [`pseudo_metric_d`].
pub const DEFAULT_VI_TOLERANCE: f64 = 1e-8;

/// Sweep cap after which value iteration reports convergence failure.
pub const VI_SWEEP_CAP: usize = 100_000;

/// A finite MOMDP: tabular transition kernel, vector rewards, terminal
/// flags, and a discount.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMomdp<F> {
    // [state, action, next_state]
    transitions: Array3<F>,
    // [state, action, objective]
    rewards: Array3<F>,
    terminal: Vec<bool>,
    gamma: F,
}

impl<F: Real> FiniteMomdp<F> {
    /// Validates shapes, row-stochastic transitions, finite rewards, and
    /// γ ∈ [0, 1).
    pub fn new(
        transitions: Array3<F>,
        rewards: Array3<F>,
        terminal: Vec<bool>,
        gamma: F,
    ) -> Result<Self> {
        let (s_n, a_n, succ) = transitions.dim();
        let (rs, ra, m) = rewards.dim();
        if s_n == 0 || a_n == 0 {
            return Err(Error::invalid("an MOMDP needs at least one state and one action"));
        }
        if succ != s_n {
            return Err(Error::invalid(format!(
                "transition table maps {s_n} states onto {succ} successors"
            )));
        }
        if rs != s_n || ra != a_n {
            return Err(Error::invalid(format!(
                "reward table is {rs}×{ra}, transitions are {s_n}×{a_n}"
            )));
        }
        if m < 2 {
            return Err(Error::invalid("rewards need at least 2 objectives"));
        }
        if terminal.len() != s_n {
            return Err(Error::invalid(format!(
                "{} terminal flags for {s_n} states",
                terminal.len()
            )));
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::invalid("rewards must be finite"));
        }
        if !(gamma >= F::zero() && gamma < F::one()) {
            return Err(Error::invalid(format!("gamma must lie in [0,1), got {gamma}")));
        }
        // Same flavour of tolerance as preference normalization: absolute
        // 1e-9, widened when the scalar's epsilon makes that unattainable.
        let tol = F::from_f64_lossy(1e-9).max(
            F::epsilon() * F::from_f64_lossy(4.0 * s_n as f64),
        );
        for s in 0..s_n {
            for a in 0..a_n {
                let row = transitions.slice(ndarray::s![s, a, ..]);
                if row.iter().any(|p| !p.is_finite() || *p < F::zero()) {
                    return Err(Error::invalid(format!(
                        "transition row ({s},{a}) has a negative or non-finite entry"
                    )));
                }
                let sum: F = row.iter().copied().sum();
                if (sum - F::one()).abs() > tol {
                    return Err(Error::invalid(format!(
                        "transition row ({s},{a}) sums to {sum}, not 1"
                    )));
                }
            }
        }
        Ok(Self { transitions, rewards, terminal, gamma })
    }

    pub fn state_count(&self) -> usize {
        self.transitions.dim().0
    }

    pub fn action_count(&self) -> usize {
        self.transitions.dim().1
    }

    pub fn objective_count(&self) -> usize {
        self.rewards.dim().2
    }

    pub fn gamma(&self) -> F {
        self.gamma
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn transitions(&self) -> &Array3<F> {
        &self.transitions
    }

    pub fn rewards(&self) -> &Array3<F> {
        &self.rewards
    }

    /// Draws a random MOMDP: dense row-stochastic transitions, rewards
    /// uniform in [-1, 1), each state terminal with probability
    /// `terminal_prob`. All draws happen in `f64` and are cast, so a given
    /// rng stream yields the same MOMDP at every scalar type.
    pub fn random(
        state_count: usize,
        action_count: usize,
        objective_count: usize,
        gamma: F,
        terminal_prob: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut transitions = Array3::zeros((state_count, action_count, state_count));
        for s in 0..state_count {
            for a in 0..action_count {
                let raw: Vec<f64> = (0..state_count)
                    .map(|_| -(1.0 - rng.gen::<f64>()).ln())
                    .collect();
                let total: f64 = raw.iter().sum();
                for (s2, x) in raw.iter().enumerate() {
                    transitions[[s, a, s2]] = F::from_f64_lossy(x / total);
                }
            }
        }
        let rewards = Array3::from_shape_fn((state_count, action_count, objective_count), |_| {
            F::from_f64_lossy(rng.gen_range(-1.0..1.0))
        });
        let terminal = (0..state_count).map(|_| rng.gen::<f64>() < terminal_prob).collect();
        Self::new(transitions, rewards, terminal, gamma)
    }
}

/// Deep Sea Treasure as a finite MOMDP, plus the water-cell list mapping
/// state ids back to grid cells.
///
/// States are the water cells in row-major order, so the start cell (0, 0)
/// is always state 0. Treasure cells are terminal; their rows are absorbing
/// self-loops with zero reward.
pub fn dst_momdp<F: Real>(map: &DstMap) -> Result<(FiniteMomdp<F>, Vec<(usize, usize)>)> {
    let mut cells = Vec::new();
    for row in 0..map.grid_height() {
        for col in 0..map.grid_width() {
            if map.is_water(row, col) {
                cells.push((row, col));
            }
        }
    }
    let index =
        |cell: (usize, usize)| cells.iter().position(|c| *c == cell).expect("successor is water");
    let s_n = cells.len();
    let mut transitions = Array3::zeros((s_n, 4, s_n));
    let mut rewards = Array3::zeros((s_n, 4, 2));
    let mut terminal = vec![false; s_n];
    for (s, &(row, col)) in cells.iter().enumerate() {
        if map.treasure_value_at(row, col).is_some() {
            terminal[s] = true;
            for a in 0..4 {
                transitions[[s, a, s]] = F::one();
            }
            continue;
        }
        for a in 0..4 {
            let (next, reward, _) = map.step((row, col), a)?;
            transitions[[s, a, index(next)]] = F::one();
            rewards[[s, a, 0]] = F::from_f64_lossy(reward[0]);
            rewards[[s, a, 1]] = F::from_f64_lossy(reward[1]);
        }
    }
    let gamma = F::from_f64_lossy(map.spec().gamma);
    Ok((FiniteMomdp::new(transitions, rewards, terminal, gamma)?, cells))
}

/// Fruit Tree Navigation as a finite MOMDP, plus the node list mapping
/// state ids back to (row, col) tree coordinates.
///
/// States are tree nodes in breadth-first order — node (row, col) is state
/// 2^row − 1 + col, the root is state 0 — and leaves are terminal.
pub fn ftn_momdp<F: Real>(tree: &FruitTree) -> Result<(FiniteMomdp<F>, Vec<(usize, usize)>)> {
    let depth = tree.depth();
    let m = tree.spec().objective_count;
    let mut cells = Vec::new();
    for row in 0..=depth {
        for col in 0..1usize << row {
            cells.push((row, col));
        }
    }
    let index = |(row, col): (usize, usize)| (1usize << row) - 1 + col;
    let s_n = cells.len();
    let mut transitions = Array3::zeros((s_n, 2, s_n));
    let mut rewards = Array3::zeros((s_n, 2, m));
    let mut terminal = vec![false; s_n];
    for (s, &(row, col)) in cells.iter().enumerate() {
        if row == depth {
            terminal[s] = true;
            for a in 0..2 {
                transitions[[s, a, s]] = F::one();
            }
            continue;
        }
        for a in 0..2 {
            let (next, reward, _) = tree.step((row, col), a)?;
            transitions[[s, a, index(next)]] = F::one();
            for (k, r) in reward.iter().enumerate() {
                rewards[[s, a, k]] = F::from_f64_lossy(*r);
            }
        }
    }
    let gamma = F::from_f64_lossy(tree.spec().gamma);
    Ok((FiniteMomdp::new(transitions, rewards, terminal, gamma)?, cells))
}

/// Scan all (action, grid-preference) candidates at state `s` and return
/// the (action, pref) pair whose stored vector scalarizes best under
/// `weights`. Ties keep the first candidate in (action, pref) order.
fn best_candidate<F: Real>(q: &DiscreteMOQ<F>, s: usize, weights: &[F]) -> (usize, usize) {
    let mut best = (0usize, 0usize);
    let mut best_u = F::neg_infinity();
    for a in 0..q.action_count() {
        for j in 0..q.preference_set().len() {
            let row = q.values().slice(ndarray::s![s, a, j, ..]);
            let u = dot(weights, row.as_slice().expect("value table is contiguous"));
            if u > best_u {
                best_u = u;
                best = (a, j);
            }
        }
    }
    best
}

/// The optimality filter H: the stored return vector that scalarizes best
/// under `pref` among every (action, grid-preference) candidate at `s`.
///
/// The scalarizing preference may lie off the grid; the inner search always
/// ranges over the grid. Ties break to the lowest (action, pref) indices.
pub fn optimality_filter_h<F: Real>(
    q: &DiscreteMOQ<F>,
    s: usize,
    pref: &Preference<F>,
) -> Result<Vec<F>> {
    if s >= q.state_count() {
        return Err(Error::invalid(format!("state {s} out of range {}", q.state_count())));
    }
    if pref.dim() != q.objective_count() {
        return Err(Error::invalid(format!(
            "preference has {} objectives, table has {}",
            pref.dim(),
            q.objective_count()
        )));
    }
    let (a, j) = best_candidate(q, s, pref.weights());
    Ok(q.vector(s, a, j))
}

/// H applied across the whole grid: `out[[s, i, k]]` is objective k of
/// (H q)(s, ω_i).
fn filter_table<F: Real>(q: &DiscreteMOQ<F>) -> Array3<F> {
    let (s_n, _, p_n, m) = q.values().dim();
    let mut out = Array3::zeros((s_n, p_n, m));
    for s in 0..s_n {
        for (i, pref) in q.preference_set().iter().enumerate() {
            let (a, j) = best_candidate(q, s, pref.weights());
            for k in 0..m {
                out[[s, i, k]] = q.values()[[s, a, j, k]];
            }
        }
    }
    out
}

fn check_table_matches_mdp<F: Real>(q: &DiscreteMOQ<F>, mdp: &FiniteMomdp<F>) -> Result<()> {
    if q.state_count() != mdp.state_count()
        || q.action_count() != mdp.action_count()
        || q.objective_count() != mdp.objective_count()
    {
        return Err(Error::invalid(format!(
            "table shape ({}, {}, ·, {}) does not match the MOMDP's ({}, {}, ·, {})",
            q.state_count(),
            q.action_count(),
            q.objective_count(),
            mdp.state_count(),
            mdp.action_count(),
            mdp.objective_count()
        )));
    }
    Ok(())
}

/// The optimality backup T: out(s, a, ω) = r(s, a) + γ·E_{s′}[(H q)(s′, ω)],
/// with terminal successors contributing zero continuation.
pub fn apply_optimality_t<F: Real>(
    q: &DiscreteMOQ<F>,
    mdp: &FiniteMomdp<F>,
) -> Result<DiscreteMOQ<F>> {
    check_table_matches_mdp(q, mdp)?;
    let h = filter_table(q);
    backup_with_continuation(mdp, q.preference_set(), |s2, i, k| h[[s2, i, k]])
}

/// The evaluation backup T_π: out(s, a, ω_i) = r(s, a) +
/// γ·E_{s′}[q(s′, π(s′, ω_i), ω_i)], terminal successors contributing zero.
///
/// `policy[[s, i]]` is the action π takes at state s under grid preference i.
pub fn apply_evaluation_t_pi<F: Real>(
    q: &DiscreteMOQ<F>,
    mdp: &FiniteMomdp<F>,
    policy: &Array2<usize>,
) -> Result<DiscreteMOQ<F>> {
    check_table_matches_mdp(q, mdp)?;
    let p_n = q.preference_set().len();
    if policy.dim() != (q.state_count(), p_n) {
        return Err(Error::invalid(format!(
            "policy is {:?}, expected ({}, {p_n})",
            policy.dim(),
            q.state_count()
        )));
    }
    if policy.iter().any(|a| *a >= q.action_count()) {
        return Err(Error::invalid("policy picks an action outside the MOMDP"));
    }
    backup_with_continuation(mdp, q.preference_set(), |s2, i, k| {
        q.values()[[s2, policy[[s2, i]], i, k]]
    })
}

/// Shared Bellman arithmetic: reward plus discounted expected continuation,
/// where `continuation(s′, i, k)` supplies objective k of the follow-on
/// value at a *non-terminal* successor s′ under grid preference i.
fn backup_with_continuation<F: Real>(
    mdp: &FiniteMomdp<F>,
    prefs: &[Preference<F>],
    continuation: impl Fn(usize, usize, usize) -> F,
) -> Result<DiscreteMOQ<F>> {
    let (s_n, a_n, m) = (mdp.state_count(), mdp.action_count(), mdp.objective_count());
    let mut out = DiscreteMOQ::zeros(s_n, a_n, prefs.to_vec())?;
    for s in 0..s_n {
        for a in 0..a_n {
            for i in 0..prefs.len() {
                for k in 0..m {
                    let mut acc = mdp.rewards[[s, a, k]];
                    for s2 in 0..s_n {
                        let p = mdp.transitions[[s, a, s2]];
                        if p.is_zero() || mdp.terminal[s2] {
                            continue;
                        }
                        acc += mdp.gamma * p * continuation(s2, i, k);
                    }
                    out.values_mut()[[s, a, i, k]] = acc;
                }
            }
        }
    }
    Ok(out)
}

/// Greedy action per (state, grid preference): argmax_a ω_i⊺q(s, a, ω_i),
/// lowest action on ties. This is the execution policy a trained table
/// induces — no envelope, each preference trusts its own slot.
pub fn greedy_policy<F: Real>(q: &DiscreteMOQ<F>) -> Array2<usize> {
    let (s_n, a_n, p_n, _) = q.values().dim();
    Array2::from_shape_fn((s_n, p_n), |(s, i)| {
        let mut best = 0usize;
        let mut best_u = F::neg_infinity();
        for a in 0..a_n {
            let u = q.scalarized(s, a, i);
            if u > best_u {
                best_u = u;
                best = a;
            }
        }
        best
    })
}

/// A converged table together with the distance d(Q_{n+1}, Q_n) recorded at
/// every sweep — the sequence whose geometric decay realizes the
/// contraction argument.
#[derive(Debug, Clone)]
pub struct ValueIterationTrace<F> {
    pub q: DiscreteMOQ<F>,
    pub distances: Vec<F>,
}

/// Envelope value iteration: apply T from the zero table until successive
/// iterates are closer than `tol` in [`pseudo_metric_d`].
pub fn envelope_value_iteration<F: Real>(
    mdp: &FiniteMomdp<F>,
    grid: &[Preference<F>],
    tol: F,
) -> Result<DiscreteMOQ<F>> {
    Ok(envelope_value_iteration_traced(mdp, grid, tol)?.q)
}

/// [`envelope_value_iteration`], keeping the per-sweep distance sequence.
pub fn envelope_value_iteration_traced<F: Real>(
    mdp: &FiniteMomdp<F>,
    grid: &[Preference<F>],
    tol: F,
) -> Result<ValueIterationTrace<F>> {
    if !(tol > F::zero()) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let mut q = DiscreteMOQ::zeros(mdp.state_count(), mdp.action_count(), grid.to_vec())?;
    check_table_matches_mdp(&q, mdp)?;
    let mut distances = Vec::new();
    for _ in 0..VI_SWEEP_CAP {
        let next = apply_optimality_t(&q, mdp)?;
        let d = pseudo_metric_d(&next, &q)?;
        distances.push(d);
        q = next;
        if d < tol {
            return Ok(ValueIterationTrace { q, distances });
        }
    }
    Err(Error::ConvergenceFailure {
        iterations: VI_SWEEP_CAP,
        distance: distances.last().map(|d| d.to_f64_lossy()).unwrap_or(f64::NAN),
    })
}

/// The value of following the deterministic stationary policy
/// `policy[s]` from every state: `out[[s, k]]` is objective k of the
/// expected discounted return from s. Terminal states have value zero —
/// the episode is over there.
///
/// Solved exactly as m linear systems (I − γ P_π) v = r_π by Gaussian
/// elimination; with γ < 1 the matrix is strictly diagonally dominant, so
/// the solve cannot break down.
pub fn policy_value<F: Real>(mdp: &FiniteMomdp<F>, policy: &[usize]) -> Result<Array2<F>> {
    let (s_n, m) = (mdp.state_count(), mdp.objective_count());
    if policy.len() != s_n {
        return Err(Error::invalid(format!("{} policy entries for {s_n} states", policy.len())));
    }
    if policy.iter().any(|a| *a >= mdp.action_count()) {
        return Err(Error::invalid("policy picks an action outside the MOMDP"));
    }
    // Rows: identity for terminal states (value pinned to zero), Bellman
    // identity minus discounted transition row otherwise.
    let mut matrix = vec![vec![F::zero(); s_n]; s_n];
    for s in 0..s_n {
        if mdp.terminal[s] {
            matrix[s][s] = F::one();
            continue;
        }
        for s2 in 0..s_n {
            let delta = if s == s2 { F::one() } else { F::zero() };
            matrix[s][s2] = delta - mdp.gamma * mdp.transitions[[s, policy[s], s2]];
        }
    }
    let mut out = Array2::zeros((s_n, m));
    for k in 0..m {
        let rhs: Vec<F> = (0..s_n)
            .map(|s| if mdp.terminal[s] { F::zero() } else { mdp.rewards[[s, policy[s], k]] })
            .collect();
        let v = solve_linear(matrix.clone(), rhs)?;
        for (s, x) in v.into_iter().enumerate() {
            out[[s, k]] = x;
        }
    }
    Ok(out)
}

/// Gaussian elimination with partial pivoting.
fn solve_linear<F: Real>(mut a: Vec<Vec<F>>, mut b: Vec<F>) -> Result<Vec<F>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).expect("finite"))
            .expect("non-empty range");
        if a[pivot][col].abs() < F::epsilon() {
            return Err(Error::invalid("singular linear system in policy evaluation"));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor.is_zero() {
                continue;
            }
            for c in col..n {
                let sub = factor * a[col][c];
                a[row][c] -= sub;
            }
            let sub = factor * b[col];
            b[row] -= sub;
        }
    }
    let mut x = vec![F::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in row + 1..n {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Enumeration cap for [`exhaustive_fixed_point`]: actions^states beyond
/// this is declined rather than silently ground through.
const POLICY_ENUMERATION_CAP: u64 = 1 << 20;

/// The optimal table built by brute force, independent of the backup
/// operators: enumerate every deterministic stationary policy, evaluate
/// each exactly, and for every grid preference take the per-state best
/// policy value. The result satisfies d(T Q*, Q*) = 0 up to float noise,
/// which is how the fixed-point property is tested.
pub fn exhaustive_fixed_point<F: Real>(
    mdp: &FiniteMomdp<F>,
    grid: &[Preference<F>],
) -> Result<DiscreteMOQ<F>> {
    let (s_n, a_n, m) = (mdp.state_count(), mdp.action_count(), mdp.objective_count());
    if grid.is_empty() {
        return Err(Error::invalid("preference grid must be non-empty"));
    }
    if grid.iter().any(|p| p.dim() != m) {
        return Err(Error::invalid("grid objective count differs from the MOMDP's"));
    }
    let count = (a_n as u64).checked_pow(s_n as u32).filter(|c| *c <= POLICY_ENUMERATION_CAP);
    if count.is_none() {
        return Err(Error::invalid(format!(
            "policy enumeration of {a_n}^{s_n} exceeds the cap of {POLICY_ENUMERATION_CAP}"
        )));
    }

    // best[i][s] = the value vector, among all policies, with the largest
    // ω_i-utility at state s (first policy wins ties).
    let mut best: Vec<Vec<Vec<F>>> = vec![vec![vec![F::zero(); m]; s_n]; grid.len()];
    let mut best_u: Vec<Vec<F>> = vec![vec![F::neg_infinity(); s_n]; grid.len()];
    let mut policy = vec![0usize; s_n];
    loop {
        let values = policy_value(mdp, &policy)?;
        for (i, pref) in grid.iter().enumerate() {
            for s in 0..s_n {
                let row = values.slice(ndarray::s![s, ..]);
                let u = dot(pref.weights(), row.as_slice().expect("contiguous"));
                if u > best_u[i][s] {
                    best_u[i][s] = u;
                    best[i][s] = row.to_vec();
                }
            }
        }
        // Mixed-radix increment over policy space.
        let mut digit = 0;
        loop {
            if digit == s_n {
                let mut table = DiscreteMOQ::zeros(s_n, a_n, grid.to_vec())?;
                for s in 0..s_n {
                    for a in 0..a_n {
                        for i in 0..grid.len() {
                            for k in 0..m {
                                let mut acc = mdp.rewards[[s, a, k]];
                                for s2 in 0..s_n {
                                    let p = mdp.transitions[[s, a, s2]];
                                    if p.is_zero() || mdp.terminal[s2] {
                                        continue;
                                    }
                                    acc += mdp.gamma * p * best[i][s2][k];
                                }
                                table.values_mut()[[s, a, i, k]] = acc;
                            }
                        }
                    }
                }
                return Ok(table);
            }
            policy[digit] += 1;
            if policy[digit] < a_n {
                break;
            }
            policy[digit] = 0;
            digit += 1;
        }
    }
}

/// Seed of the random portion of [`preference_grid`].
pub const PREFERENCE_GRID_SEED: u64 = 0x677264;

/// Builds the canonical preference grid for exact planning.
///
/// Two objectives get `size` evenly spaced weights along the segment from
/// (1, 0) to (0, 1), endpoints included, so every winning interval of width
/// at least 1/(size−1) is guaranteed a grid point. Higher dimensions get the
/// `m` one-hot preferences plus `size − m` points sampled uniformly from the
/// simplex under [`PREFERENCE_GRID_SEED`]; the grid is the same on every
/// call with the same arguments.
pub fn preference_grid<F: Real>(m: usize, size: usize) -> Result<Vec<Preference<F>>> {
    if m < 2 {
        return Err(Error::invalid("preference grids need at least 2 objectives"));
    }
    if size < m {
        return Err(Error::invalid(format!(
            "grid size {size} cannot hold the {m} one-hot preferences"
        )));
    }
    let mut grid = Vec::with_capacity(size);
    if m == 2 {
        for i in 0..size {
            let t = i as f64 / (size - 1) as f64;
            grid.push(Preference::new(vec![
                F::from_f64_lossy(1.0 - t),
                F::from_f64_lossy(t),
            ])?);
        }
    } else {
        for k in 0..m {
            grid.push(Preference::one_hot(m, k)?);
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(PREFERENCE_GRID_SEED);
        for _ in m..size {
            grid.push(crate::pref::sample_uniform_simplex::<F>(m, &mut rng)?);
        }
    }
    Ok(grid)
}

/// Extracts a planner's frontier by greedy rollout in the real task.
///
/// `policy` is [`greedy_policy`] output (one action per state and grid
/// preference) and `coords` the state coordinates returned alongside the
/// MOMDP by [`dst_momdp`] or [`ftn_momdp`]. For each grid preference the
/// policy is followed from reset and the discounted return recorded, so the
/// resulting vectors are bitwise comparable with oracle enumeration — both
/// run the same accumulation in [`crate::envs::rollout`]. Returns one vector
/// per grid preference, not deduplicated.
pub fn greedy_rollout_returns(
    env: &mut Benchmark,
    policy: &Array2<usize>,
    coords: &[(usize, usize)],
) -> Result<Vec<Vec<f64>>> {
    if policy.nrows() != coords.len() {
        return Err(Error::invalid(format!(
            "policy covers {} states but the coordinate table has {}",
            policy.nrows(),
            coords.len()
        )));
    }
    let states: Vec<Vec<f64>> = match env {
        Benchmark::Dst(e) => coords.iter().map(|&c| e.map().normalized_state(c)).collect(),
        Benchmark::Ftn(e) => coords.iter().map(|&c| e.tree().normalized_state(c)).collect(),
    };
    let gamma = env.spec().gamma;
    let mut returns = Vec::with_capacity(policy.ncols());
    for i in 0..policy.ncols() {
        let outcome = crate::envs::rollout(env, gamma, |obs| {
            let s = states
                .iter()
                .position(|st| st.as_slice() == obs)
                .expect("observed a state missing from the planner's state table");
            policy[[s, i]]
        })?;
        returns.push(outcome.ret);
    }
    Ok(returns)
}
