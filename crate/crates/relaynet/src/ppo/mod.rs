//! Policy search: rollout collection under a subtask, generalized advantage
//! estimation, and proximal-style clipped policy/value updates, with the
//! relay bonus injected at value-threshold terminations.

mod gae;
mod rollout;
mod update;

pub use gae::compute_gae;
pub use rollout::{collect_rollouts, rollout_one, StepRecord, Trajectory};
pub use update::{ppo_update, PolicyOptimizer, UpdateBatch, UpdateCfg, UpdateDiagnostics};

use crate::env::{Env, GaussianDist, TerminalCause, TerminationSet};
use crate::error::Result;
use crate::policy::{GaussianPolicy, ValueFunction};
use crate::rng::RngBundle;

/// Policies act in normalized units; the rollout engine rescales to the
/// environment's physical action bounds.
pub const POLICY_ACTION_BOUND: f64 = 1.0;

/// Subtask objective: the plain discounted return, or the relay variant
/// that adds `alpha * gamma^t_f * V_parent(s_f)` when a rollout ends by
/// crossing the parent's value threshold.
#[derive(Clone, Debug)]
pub enum Objective {
    Root,
    Relay {
        parent_vf: ValueFunction,
        parent_threshold: f64,
        alpha: f64,
    },
}

/// One MDP in the chain: the shared environment plus this subtask's initial
/// distribution, termination conditions, and objective variant.
#[derive(Clone, Debug)]
pub struct SubtaskSpec {
    pub env: Env,
    pub rho: GaussianDist,
    pub termination: TerminationSet,
    pub objective: Objective,
    pub gamma: f64,
    /// Constant positive factor applied to rewards during training; a pure
    /// rescaling of the objective that keeps value targets O(1).
    pub reward_scale: f64,
}

impl SubtaskSpec {
    pub fn is_relay(&self) -> bool {
        matches!(self.objective, Objective::Relay { .. })
    }
}

/// What counts as a successful deterministic evaluation rollout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SuccessKind {
    /// Reaches the horizon without a failure termination (root subtasks).
    SurviveHorizon,
    /// Ends by crossing the parent's value threshold (relay subtasks).
    RelayToParent,
}

/// Hyperparameters of one policy-search run.
#[derive(Clone, Debug)]
pub struct SearchCfg {
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub entropy_coef: f64,
    pub kl_cap: f64,
    pub hidden: Vec<usize>,
    pub eval_episodes: usize,
    pub success_rate: f64,
    pub confirm_iters: usize,
}

impl Default for SearchCfg {
    fn default() -> Self {
        SearchCfg {
            lambda: 0.95,
            clip: 0.2,
            epochs: 10,
            minibatch: 256,
            batch_size: 4096,
            step_size: 3e-4,
            entropy_coef: 0.0,
            kl_cap: 0.05,
            hidden: vec![32, 32],
            eval_episodes: 20,
            success_rate: 0.9,
            confirm_iters: 5,
        }
    }
}

/// Per-iteration diagnostics of a search run.
#[derive(Clone, Debug)]
pub struct IterationRow {
    pub iteration: usize,
    pub samples_after: u64,
    /// Mean undiscounted env return of the training rollouts (original
    /// reward units, relay bonus excluded).
    pub mean_return: f64,
    /// Mean discounted subtask objective of the training rollouts (original
    /// reward units, relay bonus included).
    pub mean_objective: f64,
    /// Mean discounted objective of the deterministic evaluation episodes.
    pub eval_objective: f64,
    pub success_rate: f64,
}

#[derive(Clone, Debug, Default)]
pub struct PolicySearchReport {
    pub iterations: usize,
    pub samples: u64,
    pub rows: Vec<IterationRow>,
}

/// Event handed to the caller after every iteration (testing-curve hook).
pub struct IterationEvent<'a> {
    pub row: &'a IterationRow,
    pub policy: &'a GaussianPolicy,
    pub vf: &'a ValueFunction,
}

/// Deterministic evaluation: success rate and mean discounted objective
/// over fresh episodes from the subtask's own initial distribution.
pub fn evaluate_subtask(
    spec: &SubtaskSpec,
    policy: &GaussianPolicy,
    success: SuccessKind,
    episodes: usize,
    rng: &mut crate::rng::Rng,
) -> Result<(f64, f64)> {
    let mut successes = 0usize;
    let mut sum_obj = 0.0;
    for _ in 0..episodes {
        let traj = rollout_one(spec, policy, None, 1.0, true, rng, None)?;
        let ok = match success {
            SuccessKind::SurviveHorizon => traj.cause == TerminalCause::Timeout,
            SuccessKind::RelayToParent => traj.cause == TerminalCause::ValueThreshold,
        };
        if ok {
            successes += 1;
        }
        sum_obj += traj.discounted_return(spec.gamma) / spec.reward_scale;
    }
    let n = episodes.max(1) as f64;
    Ok((successes as f64 / n, sum_obj / n))
}

/// The PolicySearch procedure: collect -> estimate advantages -> update,
/// until the sample budget is exhausted or the success criterion holds for
/// `confirm_iters` consecutive iterations. Returns the best-by-evaluation
/// policy with its value function.
pub fn policy_search(
    spec: &SubtaskSpec,
    warm_start: Option<(GaussianPolicy, ValueFunction)>,
    budget: u64,
    success: SuccessKind,
    cfg: &SearchCfg,
    rngs: &mut RngBundle,
    mut on_iteration: impl FnMut(IterationEvent<'_>),
) -> Result<(GaussianPolicy, ValueFunction, PolicySearchReport)> {
    assert!(budget > 0, "search budget must be positive");
    assert!(
        cfg.batch_size >= spec.termination.max_steps,
        "batch must fit at least one full episode"
    );
    let state_dim = spec.env.state_dim();
    let action_dim = spec.env.action_dim();
    let (mut policy, mut vf) = match warm_start {
        Some((p, v)) => (p, v),
        None => (
            GaussianPolicy::new(
                state_dim,
                action_dim,
                &cfg.hidden,
                POLICY_ACTION_BOUND,
                &mut rngs.init,
            )?,
            ValueFunction::new(state_dim, &cfg.hidden, &mut rngs.init)?,
        ),
    };
    let mut opt = PolicyOptimizer::new(&policy, &vf, cfg.step_size);
    let update_cfg = UpdateCfg {
        clip: cfg.clip,
        epochs: cfg.epochs,
        minibatch: cfg.minibatch,
        entropy_coef: cfg.entropy_coef,
        kl_cap: cfg.kl_cap,
    };

    let mut report = PolicySearchReport::default();
    let mut best: Option<(f64, GaussianPolicy, ValueFunction)> = None;
    let mut streak = 0usize;
    let mut iteration = 0usize;
    while report.samples < budget {
        iteration += 1;
        let trajs = collect_rollouts(spec, &policy, &vf, cfg.batch_size, rngs)?;
        let n_steps: usize = trajs.iter().map(|t| t.len()).sum();
        report.samples += n_steps as u64;

        let mean_return = mean(trajs.iter().map(|t| t.undiscounted_env_return(spec.reward_scale)));
        let mean_objective = mean(
            trajs
                .iter()
                .map(|t| t.discounted_return(spec.gamma) / spec.reward_scale),
        );

        let batch = UpdateBatch::from_trajectories(&trajs, spec.gamma, cfg.lambda);
        ppo_update(&mut policy, &mut vf, &mut opt, &batch, &update_cfg, &mut rngs.action)?;

        let (success_rate, eval_objective) =
            evaluate_subtask(spec, &policy, success, cfg.eval_episodes, &mut rngs.eval)?;
        if best.as_ref().map_or(true, |(b, _, _)| eval_objective > *b) {
            best = Some((eval_objective, policy.clone(), vf.clone()));
        }
        if success_rate >= cfg.success_rate {
            streak += 1;
        } else {
            streak = 0;
        }

        let row = IterationRow {
            iteration,
            samples_after: report.samples,
            mean_return,
            mean_objective,
            eval_objective,
            success_rate,
        };
        on_iteration(IterationEvent {
            row: &row,
            policy: &policy,
            vf: &vf,
        });
        report.rows.push(row);
        report.iterations = iteration;

        if streak >= cfg.confirm_iters {
            break;
        }
    }
    let (_, best_policy, best_vf) = best.expect("at least one iteration ran");
    Ok((best_policy, best_vf, report))
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for x in it {
        sum += x;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
