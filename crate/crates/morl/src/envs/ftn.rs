//! Fruit Tree Navigation: a full binary tree whose leaves carry
//! 6-dimensional nutrient rewards.
//!
//! An episode starts at the root and descends one level per step, choosing
//! the left or right child. Interior moves pay the zero vector; arriving at
//! a leaf pays its reward and ends the episode, so every episode lasts
//! exactly `depth` steps. Leaf rewards are nonnegative unit vectors
//! (elementwise |v|/‖v‖₂ of a standard normal draw), which puts every leaf
//! on the convex frontier of the leaf set: each is the unique best answer
//! for the preference proportional to itself.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{EnvSpec, Transition, VectorEnv};
use crate::{Error, Result};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// The tree: depth, leaf rewards (left to right), and the discount used
/// when it is rolled out.
#[derive(Debug, Clone, PartialEq)]
pub struct FruitTree {
    depth: usize,
    // leaves[i] is the reward of the i-th leaf in left-to-right order;
    // descending by bits of i (most significant first) reaches it.
    leaves: Vec<Vec<f64>>,
    spec: EnvSpec,
}

impl FruitTree {
    /// Samples a tree of 2^depth leaves reproducibly from `seed`.
    ///
    /// Each leaf reward is |v| / ‖v‖₂ for v a 6-dimensional standard normal
    /// draw: nonnegative, unit L2 norm.
    pub fn generate(depth: usize, seed: u64, gamma: f64) -> Result<Self> {
        if depth == 0 {
            return Err(Error::invalid("tree depth must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut leaves = Vec::with_capacity(1 << depth);
        for _ in 0..1usize << depth {
            let reward = loop {
                let v: Vec<f64> = (0..6).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    break v.into_iter().map(|x| x.abs() / norm).collect::<Vec<f64>>();
                }
            };
            leaves.push(reward);
        }
        Self::from_leaves(depth, leaves, gamma)
    }

    /// Builds a tree from explicit leaf rewards (tests and custom tasks).
    ///
    /// Requires 2^depth leaves of a common dimension ≥ 2 with finite,
    /// nonnegative entries. Unit norm is not required here; only
    /// [`FruitTree::generate`] guarantees it.
    pub fn from_leaves(depth: usize, leaves: Vec<Vec<f64>>, gamma: f64) -> Result<Self> {
        if depth == 0 {
            return Err(Error::invalid("tree depth must be at least 1"));
        }
        if leaves.len() != 1usize << depth {
            return Err(Error::invalid(format!(
                "a depth-{depth} tree needs {} leaves, got {}",
                1usize << depth,
                leaves.len()
            )));
        }
        let m = leaves[0].len();
        if m < 2 {
            return Err(Error::invalid("leaf rewards need at least 2 objectives"));
        }
        for (i, leaf) in leaves.iter().enumerate() {
            if leaf.len() != m {
                return Err(Error::invalid(format!(
                    "leaf {i} has {} objectives, expected {m}",
                    leaf.len()
                )));
            }
            if leaf.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::invalid(format!(
                    "leaf {i} has a negative or non-finite entry"
                )));
            }
        }
        let spec = EnvSpec {
            state_dim: 2,
            action_count: 2,
            objective_count: m,
            gamma,
            max_episode_steps: depth,
        };
        spec.validate()?;
        Ok(Self { depth, leaves, spec })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn leaves(&self) -> &[Vec<f64>] {
        &self.leaves
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// One move of the tree dynamics: descend to a child of `(row, col)`.
    ///
    /// Leaves are terminal; stepping from one is a contract violation.
    pub fn step(
        &self,
        (row, col): (usize, usize),
        action: usize,
    ) -> Result<((usize, usize), Vec<f64>, bool)> {
        if row > self.depth || col >= (1usize << row) {
            return Err(Error::invalid(format!("({row},{col}) is not a node of this tree")));
        }
        if row == self.depth {
            return Err(Error::ContractViolation(format!(
                "({row},{col}) is a leaf; the episode is over"
            )));
        }
        if action > 1 {
            return Err(Error::invalid(format!("action {action} is not left (0) or right (1)")));
        }
        let next = (row + 1, 2 * col + action);
        if next.0 == self.depth {
            Ok((next, self.leaves[next.1].clone(), true))
        } else {
            Ok((next, vec![0.0; self.spec.objective_count], false))
        }
    }

    /// Node coordinates scaled into [0,1]²: level fraction and position
    /// within the level.
    pub fn normalized_state(&self, (row, col): (usize, usize)) -> Vec<f64> {
        let row_span = self.depth as f64;
        let col_span = ((1usize << row) - 1).max(1) as f64;
        vec![row as f64 / row_span, col as f64 / col_span]
    }
}

/// Episodic wrapper over a [`FruitTree`].
#[derive(Debug, Clone)]
pub struct FtnEnv {
    tree: FruitTree,
    node: (usize, usize),
    done: bool,
}

impl FtnEnv {
    pub fn new(tree: FruitTree) -> Self {
        Self { tree, node: (0, 0), done: false }
    }

    pub fn tree(&self) -> &FruitTree {
        &self.tree
    }
}

impl VectorEnv for FtnEnv {
    fn spec(&self) -> &EnvSpec {
        self.tree.spec()
    }

    fn reset(&mut self) -> Vec<f64> {
        self.node = (0, 0);
        self.done = false;
        self.tree.normalized_state(self.node)
    }

    fn step(&mut self, action: usize) -> Result<Transition> {
        if self.done {
            return Err(Error::ContractViolation(
                "stepping a finished episode; reset the environment first".into(),
            ));
        }
        let state = self.tree.normalized_state(self.node);
        let (next, reward, terminal) = self.tree.step(self.node, action)?;
        self.node = next;
        self.done = terminal;
        Ok(Transition {
            state,
            action,
            reward,
            next_state: self.tree.normalized_state(self.node),
            terminal,
            // Every walk reaches a leaf in exactly `depth` steps, so the
            // budget never runs out first.
            truncated: false,
        })
    }
}
