//! Benchmark environments with vector-valued rewards.
//!
//! Two deterministic episodic tasks sit behind the [`VectorEnv`] interface:
//! Deep Sea Treasure ([`dst`]), a 10×11 gridworld trading time against
//! treasure value, and Fruit Tree Navigation ([`ftn`]), a full binary tree
//! whose leaves carry 6-dimensional rewards. Both expose their dynamics as
//! pure step functions so the planner, the oracle, and the episodic wrappers
//! all run identical arithmetic.
//!
//! All environment math is `f64`. Discounted returns are accumulated by one
//! shared routine, [`rollout`], so any two rollouts that execute the same
//! action sequence produce bitwise-identical return vectors — the property
//! that makes exact (ε = 0) frontier comparison meaningful.

pub mod dst;
pub mod ftn;

pub use dst::{DstEnv, DstMap};
pub use ftn::{FruitTree, FtnEnv};

use crate::{Error, Result};

/// Static description of an environment: dimensions, discount, and the
/// episode step bound.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_count: usize,
    pub objective_count: usize,
    pub gamma: f64,
    pub max_episode_steps: usize,
}

impl EnvSpec {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.state_dim == 0
            || self.action_count == 0
            || self.objective_count == 0
            || self.max_episode_steps == 0
        {
            return Err(Error::invalid("environment dimensions must all be at least 1"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("gamma must lie in [0,1), got {}", self.gamma)));
        }
        Ok(())
    }
}

/// One environment step: the state acted in, the action taken, the vector
/// reward received, the state arrived at, and how the episode stands.
///
/// `terminal` means the task itself ended here — the next state is absorbing
/// and contributes no continuation value to learning targets. `truncated`
/// means only the episode's step budget ran out: the position is an ordinary
/// state whose future value is still real, so targets keep bootstrapping
/// through it. Rollouts stop on either flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: Vec<f64>,
    pub next_state: Vec<f64>,
    pub terminal: bool,
    pub truncated: bool,
}

impl Transition {
    /// Whether the episode is over, for either reason.
    pub fn episode_over(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// An episodic environment emitting vector rewards.
///
/// Implementations are deterministic: identical action sequences from a
/// reset produce identical transitions. Instances own their episode state
/// and are not shared; run independent copies for parallel rollouts.
pub trait VectorEnv {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode and returns the initial state.
    fn reset(&mut self) -> Vec<f64>;

    /// Advances one step. Stepping a finished episode is a contract
    /// violation; call [`VectorEnv::reset`] first.
    fn step(&mut self, action: usize) -> Result<Transition>;
}

/// Either benchmark, for call sites that dispatch on the task at hand
/// (oracle enumeration, CLI argument handling).
#[derive(Debug, Clone)]
pub enum Benchmark {
    Dst(DstEnv),
    Ftn(FtnEnv),
}

impl Benchmark {
    /// The default Deep Sea Treasure task (committed map).
    pub fn dst_default() -> Self {
        Benchmark::Dst(DstEnv::new(DstMap::default_map()))
    }

    /// A Fruit Tree Navigation task generated from `seed`.
    pub fn ftn(depth: usize, seed: u64, gamma: f64) -> Result<Self> {
        Ok(Benchmark::Ftn(FtnEnv::new(FruitTree::generate(depth, seed, gamma)?)))
    }

    /// Builds a benchmark from key-value config text (see [`parse_env_config`]).
    pub fn from_config_str(text: &str) -> Result<Self> {
        parse_env_config(text)
    }

    pub fn from_config_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        parse_env_config(&text)
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Benchmark::Dst(_) => "dst",
            Benchmark::Ftn(_) => "ftn",
        }
    }

    pub fn objective_count(&self) -> usize {
        self.spec().objective_count
    }
}

impl VectorEnv for Benchmark {
    fn spec(&self) -> &EnvSpec {
        match self {
            Benchmark::Dst(e) => e.spec(),
            Benchmark::Ftn(e) => e.spec(),
        }
    }

    fn reset(&mut self) -> Vec<f64> {
        match self {
            Benchmark::Dst(e) => e.reset(),
            Benchmark::Ftn(e) => e.reset(),
        }
    }

    fn step(&mut self, action: usize) -> Result<Transition> {
        match self {
            Benchmark::Dst(e) => e.step(action),
            Benchmark::Ftn(e) => e.step(action),
        }
    }
}

/// Outcome of one full episode: the discounted return vector, the action
/// sequence executed, and the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutOutcome {
    pub ret: Vec<f64>,
    pub actions: Vec<usize>,
    pub steps: usize,
}

/// Runs one episode under `policy` and accumulates the discounted return.
///
/// This is the single accumulation path for every return the crate compares:
/// `ret[k] += disc * r[k]` then `disc *= gamma`, step by step. The discount
/// usually comes from the environment's spec, but is a parameter so undiscounted
/// (`gamma = 1`) sums remain expressible.
pub fn rollout<E, P>(env: &mut E, gamma: f64, mut policy: P) -> Result<RolloutOutcome>
where
    E: VectorEnv + ?Sized,
    P: FnMut(&[f64]) -> usize,
{
    let m = env.spec().objective_count;
    let step_cap = env.spec().max_episode_steps;
    let mut state = env.reset();
    let mut ret = vec![0.0f64; m];
    let mut disc = 1.0f64;
    let mut actions = Vec::new();
    for _ in 0..step_cap {
        let action = policy(&state);
        let tr = env.step(action)?;
        for (acc, r) in ret.iter_mut().zip(&tr.reward) {
            *acc += disc * r;
        }
        disc *= gamma;
        actions.push(action);
        let over = tr.episode_over();
        state = tr.next_state;
        if over {
            let steps = actions.len();
            return Ok(RolloutOutcome { ret, actions, steps });
        }
    }
    Err(Error::ContractViolation(format!(
        "episode exceeded the declared step bound {step_cap} without terminating"
    )))
}

/// Replays a fixed action sequence and returns its discounted return.
///
/// The sequence must end the episode on its final action.
pub fn replay_actions<E>(env: &mut E, gamma: f64, actions: &[usize]) -> Result<RolloutOutcome>
where
    E: VectorEnv + ?Sized,
{
    let mut it = actions.iter().copied();
    let outcome = rollout(env, gamma, |_| it.next().expect("action sequence ended mid-episode"))?;
    if outcome.steps != actions.len() {
        return Err(Error::invalid(format!(
            "action sequence of length {} terminated after {} steps",
            actions.len(),
            outcome.steps
        )));
    }
    Ok(outcome)
}

/// Parses a flat `key = value` environment config.
///
/// Lines are `key = value`, `#` starts a comment, blank lines are ignored.
/// `kind = dst` expects `grid_width`, `grid_height`, `gamma`, `time_penalty`,
/// `max_episode_steps`, and one `treasure = row,col,value` line per treasure.
/// `kind = ftn` expects `depth`, `seed`, and optionally `gamma` (default 0.99).
pub fn parse_env_config(text: &str) -> Result<Benchmark> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::parse("env config", format!("line {}", lineno + 1), "expected `key = value`")
        })?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }

    let take_one = |key: &str| -> Result<String> {
        let mut found = pairs.iter().filter(|(k, _)| k == key);
        let value = found
            .next()
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::parse("env config", key, "missing required key"))?;
        if found.next().is_some() {
            return Err(Error::parse("env config", key, "key given more than once"));
        }
        Ok(value)
    };
    let parse_num = |key: &str, v: &str| -> Result<f64> {
        v.parse::<f64>()
            .map_err(|e| Error::parse("env config", key, format!("bad number {v:?}: {e}")))
    };
    let parse_count = |key: &str, v: &str| -> Result<usize> {
        v.parse::<usize>()
            .map_err(|e| Error::parse("env config", key, format!("bad count {v:?}: {e}")))
    };

    let kind = take_one("kind")?;
    match kind.as_str() {
        "dst" => {
            let known = [
                "kind",
                "grid_width",
                "grid_height",
                "gamma",
                "time_penalty",
                "max_episode_steps",
                "treasure",
            ];
            for (k, _) in &pairs {
                if !known.contains(&k.as_str()) {
                    return Err(Error::parse("env config", k.clone(), "unknown key for kind=dst"));
                }
            }
            let mut treasures = Vec::new();
            for (_, v) in pairs.iter().filter(|(k, _)| k == "treasure") {
                let fields: Vec<&str> = v.split(',').map(str::trim).collect();
                if fields.len() != 3 {
                    return Err(Error::parse("env config", "treasure", "expected `row,col,value`"));
                }
                treasures.push((
                    parse_count("treasure row", fields[0])?,
                    parse_count("treasure col", fields[1])?,
                    parse_num("treasure value", fields[2])?,
                ));
            }
            let map = DstMap::new(
                parse_count("grid_width", &take_one("grid_width")?)?,
                parse_count("grid_height", &take_one("grid_height")?)?,
                treasures,
                parse_num("time_penalty", &take_one("time_penalty")?)?,
                parse_num("gamma", &take_one("gamma")?)?,
                parse_count("max_episode_steps", &take_one("max_episode_steps")?)?,
            )?;
            Ok(Benchmark::Dst(DstEnv::new(map)))
        }
        "ftn" => {
            for (k, _) in &pairs {
                if !["kind", "depth", "seed", "gamma"].contains(&k.as_str()) {
                    return Err(Error::parse("env config", k.clone(), "unknown key for kind=ftn"));
                }
            }
            let depth = parse_count("depth", &take_one("depth")?)?;
            let seed = take_one("seed")?
                .parse::<u64>()
                .map_err(|e| Error::parse("env config", "seed", format!("{e}")))?;
            let gamma = match pairs.iter().find(|(k, _)| k == "gamma") {
                Some((_, v)) => parse_num("gamma", v)?,
                None => 0.99,
            };
            Benchmark::ftn(depth, seed, gamma)
        }
        other => Err(Error::parse("env config", "kind", format!("unknown kind {other:?}"))),
    }
}
