//! Deterministic, seedable continuous-control environments: the shared MDP
//! machinery (initial-state distributions, termination sets, transitions)
//! plus the two built-in tasks.

pub mod cartpole;
mod dist;
pub mod pointmass;

pub use cartpole::CartpoleParams;
pub use dist::GaussianDist;
pub use pointmass::PointMassParams;

use crate::error::{Error, Result};
use crate::policy::ValueFunction;
use crate::rng::Rng;
use serde::{Deserialize, Serialize};

/// Why a rollout ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminalCause {
    Failure,
    ValueThreshold,
    Timeout,
}

impl std::fmt::Display for TerminalCause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TerminalCause::Failure => "failure",
            TerminalCause::ValueThreshold => "value_threshold",
            TerminalCause::Timeout => "timeout",
        };
        f.write_str(s)
    }
}

/// One environment step as recorded by the rollout engine.
#[derive(Clone, Debug)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Set only on the last transition of a trajectory.
    pub cause: Option<TerminalCause>,
}

/// Named state predicates that end a rollout as a failure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FailurePredicate {
    /// |theta| > pi/2 with theta = state[0] measured from upright.
    PoleBelowHorizontal,
    /// Any of the listed dims leaves [-half_width, half_width].
    OutOfArena { dims: Vec<usize>, half_width: f64 },
}

impl FailurePredicate {
    pub fn fires(&self, state: &[f64]) -> bool {
        match self {
            FailurePredicate::PoleBelowHorizontal => {
                state[0].abs() > std::f64::consts::FRAC_PI_2
            }
            FailurePredicate::OutOfArena { dims, half_width } => {
                dims.iter().any(|&d| state[d].abs() > *half_width)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FailurePredicate::PoleBelowHorizontal => "pole-below-horizontal",
            FailurePredicate::OutOfArena { .. } => "out-of-arena",
        }
    }
}

/// A value-function cutoff attached during chain construction: the rollout
/// ends (cause `ValueThreshold`) once the bound value function exceeds the
/// threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct ValuePredicate {
    pub vf: ValueFunction,
    pub threshold: f64,
}

/// Termination conditions of one subtask.
///
/// Evaluation yields at most one cause per state, with precedence
/// failure > value_threshold > timeout.
#[derive(Clone, Debug, PartialEq)]
pub struct TerminationSet {
    pub max_steps: usize,
    pub failures: Vec<FailurePredicate>,
    pub value_predicate: Option<ValuePredicate>,
}

impl TerminationSet {
    pub fn new(max_steps: usize, failures: Vec<FailurePredicate>) -> Self {
        assert!(max_steps >= 1, "termination horizon must be at least 1");
        TerminationSet {
            max_steps,
            failures,
            value_predicate: None,
        }
    }

    /// The same conditions without the value predicate (Algorithm 2 rolls
    /// calibration episodes under this base set).
    pub fn base(&self) -> TerminationSet {
        TerminationSet {
            max_steps: self.max_steps,
            failures: self.failures.clone(),
            value_predicate: None,
        }
    }
}

/// Evaluate a termination set on a state reached after `step_count` steps.
pub fn check_termination(
    set: &TerminationSet,
    state: &[f64],
    step_count: usize,
) -> Option<TerminalCause> {
    if set.failures.iter().any(|p| p.fires(state)) {
        return Some(TerminalCause::Failure);
    }
    if let Some(vp) = &set.value_predicate {
        if vp.vf.value(state) > vp.threshold {
            return Some(TerminalCause::ValueThreshold);
        }
    }
    if step_count >= set.max_steps {
        return Some(TerminalCause::Timeout);
    }
    None
}

/// Static description of one task, kept for reports and the graph file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_bound: f64,
    pub timestep: f64,
    pub frame_skip: usize,
    pub alive_bonus: f64,
    pub action_penalty: f64,
}

/// A built-in environment with its physical constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Env {
    Cartpole(CartpoleParams),
    PointMass(PointMassParams),
}

impl Env {
    pub fn name(&self) -> &'static str {
        match self {
            Env::Cartpole(_) => "cartpole",
            Env::PointMass(_) => "pointmass",
        }
    }

    pub fn state_dim(&self) -> usize {
        4
    }

    pub fn action_dim(&self) -> usize {
        match self {
            Env::Cartpole(_) => 1,
            Env::PointMass(_) => 2,
        }
    }

    pub fn action_bound(&self) -> f64 {
        match self {
            Env::Cartpole(p) => p.force_bound,
            Env::PointMass(p) => p.force_bound,
        }
    }

    pub fn spec(&self) -> EnvSpec {
        let (alive, penalty) = match self {
            Env::Cartpole(p) => (p.alive_bonus, p.torque_penalty),
            Env::PointMass(p) => (p.alive_bonus, p.action_penalty),
        };
        let (dt, skip) = match self {
            Env::Cartpole(p) => (p.timestep, p.frame_skip),
            Env::PointMass(p) => (p.timestep, p.frame_skip),
        };
        EnvSpec {
            name: self.name().to_string(),
            state_dim: self.state_dim(),
            action_dim: self.action_dim(),
            action_bound: self.action_bound(),
            timestep: dt,
            frame_skip: skip,
            alive_bonus: alive,
            action_penalty: penalty,
        }
    }

    /// Advance one control step; returns `(next_state, reward)` where the
    /// reward is evaluated on the pre-step state and the applied action.
    pub fn step(&self, state: &[f64], action: &[f64]) -> Result<(Vec<f64>, f64)> {
        if state.len() != self.state_dim() || action.len() != self.action_dim() {
            return Err(Error::ShapeMismatch(format!(
                "{}: state {} / action {}",
                self.name(),
                state.len(),
                action.len()
            )));
        }
        if state.iter().chain(action.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("environment step input".into()));
        }
        let (next, reward) = match self {
            Env::Cartpole(p) => (
                cartpole::step(p, state, action[0]).to_vec(),
                cartpole::reward(p, state, action[0]),
            ),
            Env::PointMass(p) => (
                pointmass::step(p, state, action).to_vec(),
                pointmass::reward(p, state, action),
            ),
        };
        if next.iter().any(|v| !v.is_finite()) || !reward.is_finite() {
            return Err(Error::NonFinite("environment step result".into()));
        }
        Ok((next, reward))
    }

    pub fn reward(&self, state: &[f64], action: &[f64]) -> f64 {
        match self {
            Env::Cartpole(p) => cartpole::reward(p, state, action[0]),
            Env::PointMass(p) => pointmass::reward(p, state, action),
        }
    }

    /// Task constraint slack C(s): nonnegative on valid states.
    pub fn constraint(&self, state: &[f64]) -> f64 {
        match self {
            Env::Cartpole(p) => p.track_half_width - state[2].abs(),
            Env::PointMass(p) => {
                p.arena_half_width - state[0].abs().max(state[1].abs())
            }
        }
    }

    /// Generous state-validity box used to clamp sampled states and
    /// optimizer iterates.
    pub fn state_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Env::Cartpole(_) => {
                let b = [1.5 * std::f64::consts::PI, 12.0, 5.0, 12.0];
                (b.iter().map(|x| -x).collect(), b.to_vec())
            }
            Env::PointMass(p) => {
                let b = [p.arena_half_width + 1.0, p.arena_half_width + 1.0, 8.0, 8.0];
                (b.iter().map(|x| -x).collect(), b.to_vec())
            }
        }
    }

    /// Validity box intersected with C(s) >= 0; clamping to this box keeps
    /// an iterate feasible for both.
    pub fn feasible_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let (mut lo, mut hi) = self.state_bounds();
        match self {
            Env::Cartpole(p) => {
                lo[2] = -p.track_half_width;
                hi[2] = p.track_half_width;
            }
            Env::PointMass(p) => {
                for d in 0..2 {
                    lo[d] = -p.arena_half_width;
                    hi[d] = p.arena_half_width;
                }
            }
        }
        (lo, hi)
    }

    pub fn clamp_to_box(&self, state: &mut [f64]) {
        let (lo, hi) = self.state_bounds();
        for ((s, l), h) in state.iter_mut().zip(&lo).zip(&hi) {
            *s = s.clamp(*l, *h);
        }
    }

    /// The base termination set of a subtask on this environment. The root
    /// subtask additionally fails when the pole drops below the horizontal;
    /// leaving the arena fails every subtask.
    pub fn base_termination(&self, root: bool, max_steps: usize) -> TerminationSet {
        let mut failures = Vec::new();
        match self {
            Env::Cartpole(p) => {
                if root {
                    failures.push(FailurePredicate::PoleBelowHorizontal);
                }
                failures.push(FailurePredicate::OutOfArena {
                    dims: vec![2],
                    half_width: p.track_half_width,
                });
            }
            Env::PointMass(p) => {
                failures.push(FailurePredicate::OutOfArena {
                    dims: vec![0, 1],
                    half_width: p.arena_half_width,
                });
            }
        }
        TerminationSet::new(max_steps, failures)
    }
}

/// Draw an initial state from `N(mean, inflation * var)`, clamped to the
/// validity box, rejecting draws that violate C(s) >= 0.
pub fn sample_initial(
    env: &Env,
    dist: &GaussianDist,
    inflation: f64,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    assert!(inflation > 0.0, "inflation must be positive");
    if dist.dim() != env.state_dim() {
        return Err(Error::ShapeMismatch(format!(
            "distribution dim {} vs state dim {}",
            dist.dim(),
            env.state_dim()
        )));
    }
    const MAX_TRIES: usize = 100;
    for _ in 0..MAX_TRIES {
        let mut s = dist.sample_raw(inflation, rng);
        env.clamp_to_box(&mut s);
        if env.constraint(&s) >= 0.0 {
            return Ok(s);
        }
    }
    Err(Error::InfeasibleDistribution(MAX_TRIES))
}
