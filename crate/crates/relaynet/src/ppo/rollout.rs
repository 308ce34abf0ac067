use super::{Objective, SubtaskSpec};
use crate::env::{check_termination, sample_initial, TerminalCause, Transition};
use crate::error::Result;
use crate::policy::{GaussianPolicy, ValueFunction};
use crate::rng::Rng;

/// One step as stored in a trajectory: the environment transition plus the
/// behavior log-density and the critic's value estimate at the pre-step
/// state. Rewards are in training units (scaled; relay bonus folded into the
/// final step's reward).
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub transition: Transition,
    pub log_prob: f64,
    pub value: f64,
}

/// A complete rollout with its terminal bookkeeping.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    pub cause: TerminalCause,
    /// Value of the final state when the cause is a timeout, else 0; used to
    /// bootstrap advantage estimation on truncated episodes.
    pub bootstrap_value: f64,
    /// Discounted relay bonus `alpha * gamma^t_f * V_parent(s_f)`; nonzero
    /// only when the bonus was granted.
    pub relay_bonus: f64,
    /// The undiscounted amount folded into the final step's reward.
    pub(crate) bonus_undiscounted: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        &self.steps.last().expect("nonempty trajectory").transition.next_state
    }

    /// Discounted sum of stored rewards (training units; relay bonus
    /// included via the folded final reward).
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let mut acc = 0.0;
        let mut disc = 1.0;
        for s in &self.steps {
            acc += disc * s.transition.reward;
            disc *= gamma;
        }
        acc
    }

    /// Undiscounted environment return in original reward units, with the
    /// relay bonus excluded.
    pub fn undiscounted_env_return(&self, reward_scale: f64) -> f64 {
        let total: f64 = self.steps.iter().map(|s| s.transition.reward).sum();
        (total - self.bonus_undiscounted) / reward_scale
    }

    pub fn bonus_granted(&self) -> bool {
        self.bonus_undiscounted != 0.0
    }
}

/// Grant the relay bonus for a finished rollout: `alpha * V_parent(s_f)` is
/// added to the final step's reward so the `gamma^t_f` factor emerges from
/// ordinary return computation. Failed rollouts receive nothing.
pub(crate) fn apply_relay_bonus(
    steps: &mut [StepRecord],
    cause: TerminalCause,
    final_state: &[f64],
    objective: &Objective,
    gamma: f64,
    reward_scale: f64,
) -> (f64, f64) {
    if let Objective::Relay {
        parent_vf,
        parent_threshold,
        alpha,
    } = objective
    {
        if cause != TerminalCause::Failure && !steps.is_empty() {
            let v_parent = parent_vf.value(final_state);
            if v_parent > *parent_threshold {
                // parent_vf already operates in scaled units; only alpha
                // weights it against the scaled reward stream.
                let _ = reward_scale;
                let undiscounted = alpha * v_parent;
                steps.last_mut().expect("nonempty").transition.reward += undiscounted;
                let t_f = (steps.len() - 1) as i32;
                return (gamma.powi(t_f) * undiscounted, undiscounted);
            }
        }
    }
    (0.0, 0.0)
}

/// Roll out one episode from the subtask's initial distribution.
///
/// `inflation` widens the reset distribution (1.0 for training, 1.5 for
/// threshold calibration). Deterministic mode takes mean actions and records
/// a log-density of 0.
pub fn rollout_one(
    spec: &SubtaskSpec,
    policy: &GaussianPolicy,
    vf: Option<&ValueFunction>,
    inflation: f64,
    deterministic: bool,
    reset_rng: &mut Rng,
    mut action_rng: Option<&mut Rng>,
) -> Result<Trajectory> {
    let mut state = sample_initial(&spec.env, &spec.rho, inflation, reset_rng)?;
    let action_scale = spec.env.action_bound();
    let mut steps: Vec<StepRecord> = Vec::new();
    let cause = loop {
        let (action, log_prob) = if deterministic {
            (policy.mean_action(&state)?, 0.0)
        } else {
            let rng = action_rng
                .as_deref_mut()
                .expect("stochastic rollout needs an action rng");
            policy.sample_action(&state, rng)?
        };
        let value = vf.map_or(0.0, |v| v.value(&state));
        let physical: Vec<f64> = action.iter().map(|a| a * action_scale).collect();
        let (next_state, env_reward) = spec.env.step(&state, &physical)?;
        let cause = check_termination(&spec.termination, &next_state, steps.len() + 1);
        steps.push(StepRecord {
            transition: Transition {
                state: std::mem::replace(&mut state, next_state.clone()),
                action,
                reward: env_reward * spec.reward_scale,
                next_state,
                cause,
            },
            log_prob,
            value,
        });
        if let Some(c) = cause {
            break c;
        }
    };

    let final_state = steps.last().expect("nonempty").transition.next_state.clone();
    let (relay_bonus, bonus_undiscounted) = apply_relay_bonus(
        &mut steps,
        cause,
        &final_state,
        &spec.objective,
        spec.gamma,
        spec.reward_scale,
    );
    let bootstrap_value = if cause == TerminalCause::Timeout {
        vf.map_or(0.0, |v| v.value(&final_state))
    } else {
        0.0
    };
    Ok(Trajectory {
        steps,
        cause,
        bootstrap_value,
        relay_bonus,
        bonus_undiscounted,
    })
}

/// Collect stochastic rollouts until at least `batch_size` environment steps
/// have been gathered; the last trajectory always runs to termination.
pub fn collect_rollouts(
    spec: &SubtaskSpec,
    policy: &GaussianPolicy,
    vf: &ValueFunction,
    batch_size: usize,
    rngs: &mut crate::rng::RngBundle,
) -> Result<Vec<Trajectory>> {
    assert!(
        batch_size >= spec.termination.max_steps,
        "batch must fit at least one full episode"
    );
    let mut out = Vec::new();
    let mut total = 0usize;
    while total < batch_size {
        let traj = rollout_one(
            spec,
            policy,
            Some(vf),
            1.0,
            false,
            &mut rngs.reset,
            Some(&mut rngs.action),
        )?;
        total += traj.len();
        out.push(traj);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{CartpoleParams, Env, GaussianDist, PointMassParams, TerminationSet, ValuePredicate};
    use crate::nn::{MlpParams, Tensor};
    use crate::policy::ValueFunction;
    use crate::rng::RngBundle;

    /// Value net that outputs a constant everywhere.
    fn const_vf(c: f64, dim: usize) -> ValueFunction {
        let w = Tensor::zeros(vec![dim, 1]);
        let bias = Tensor::from_vec(vec![c]).unwrap();
        let net = MlpParams::from_parts(vec![dim, 1], vec![w], vec![bias]).unwrap();
        ValueFunction::from_net(net).unwrap()
    }

    fn pointmass_spec(objective: Objective, max_steps: usize) -> SubtaskSpec {
        let env = Env::PointMass(PointMassParams::default());
        SubtaskSpec {
            rho: GaussianDist::new(vec![1.0, 0.0, 0.0, 0.0], vec![0.0; 4]).unwrap(),
            termination: env.base_termination(false, max_steps),
            env,
            objective,
            gamma: 0.99,
            reward_scale: 1.0,
        }
    }

    fn zero_policy(action_dim: usize) -> GaussianPolicy {
        let net = MlpParams::zeros(vec![4, action_dim]).unwrap();
        GaussianPolicy::from_parts(net, vec![-3.0; action_dim], 1.0).unwrap()
    }

    #[test]
    fn relay_bonus_matches_direct_formula() {
        // 11 transitions, final state valued 5 by the parent, threshold 3,
        // alpha 30, gamma 0.99: bonus = 30 * 0.99^10 * 5.
        let objective = Objective::Relay {
            parent_vf: const_vf(5.0, 4),
            parent_threshold: 3.0,
            alpha: 30.0,
        };
        let mut steps: Vec<StepRecord> = (0..11)
            .map(|i| StepRecord {
                transition: Transition {
                    state: vec![0.0; 4],
                    action: vec![0.0],
                    reward: 1.0,
                    next_state: vec![0.0; 4],
                    cause: if i == 10 {
                        Some(TerminalCause::ValueThreshold)
                    } else {
                        None
                    },
                },
                log_prob: 0.0,
                value: 0.0,
            })
            .collect();
        let (bonus, undisc) = apply_relay_bonus(
            &mut steps,
            TerminalCause::ValueThreshold,
            &[0.0; 4],
            &objective,
            0.99,
            1.0,
        );
        let expect = 30.0 * 0.99_f64.powi(10) * 5.0;
        assert!((bonus - expect).abs() < 1e-9, "{bonus} vs {expect}");
        assert!((expect - 135.66588).abs() < 1e-4);
        assert!((undisc - 150.0).abs() < 1e-12);
        assert!((steps[10].transition.reward - 151.0).abs() < 1e-12);
    }

    #[test]
    fn failure_termination_grants_no_bonus() {
        let objective = Objective::Relay {
            parent_vf: const_vf(5.0, 4),
            parent_threshold: 3.0,
            alpha: 30.0,
        };
        let mut steps = vec![StepRecord {
            transition: Transition {
                state: vec![0.0; 4],
                action: vec![0.0],
                reward: 1.0,
                next_state: vec![0.0; 4],
                cause: Some(TerminalCause::Failure),
            },
            log_prob: 0.0,
            value: 0.0,
        }];
        let (bonus, undisc) = apply_relay_bonus(
            &mut steps,
            TerminalCause::Failure,
            &[0.0; 4],
            &objective,
            0.99,
            1.0,
        );
        assert_eq!(bonus, 0.0);
        assert_eq!(undisc, 0.0);
        assert_eq!(steps[0].transition.reward, 1.0);
    }

    #[test]
    fn alpha_zero_reduces_to_plain_objective() {
        let mut spec = pointmass_spec(
            Objective::Relay {
                parent_vf: const_vf(5.0, 4),
                parent_threshold: 3.0,
                alpha: 0.0,
            },
            20,
        );
        spec.termination.value_predicate = Some(ValuePredicate {
            vf: const_vf(5.0, 4),
            threshold: 3.0,
        });
        let policy = zero_policy(2);
        let mut rngs = RngBundle::new(1, "t");
        let traj = rollout_one(&spec, &policy, None, 1.0, true, &mut rngs.reset, None).unwrap();
        assert_eq!(traj.cause, TerminalCause::ValueThreshold);
        // Bonus of alpha = 0 adds nothing: discounted return equals the
        // plain discounted env-reward sum.
        let plain: f64 = traj
            .steps
            .iter()
            .enumerate()
            .map(|(t, s)| 0.99_f64.powi(t as i32) * s.transition.reward)
            .sum();
        assert!((traj.discounted_return(0.99) - plain).abs() < 1e-12);
        assert_eq!(traj.relay_bonus, 0.0);
    }

    #[test]
    fn value_threshold_rollout_gets_bonus_and_no_bootstrap() {
        let parent = const_vf(5.0, 4);
        let mut spec = pointmass_spec(
            Objective::Relay {
                parent_vf: parent.clone(),
                parent_threshold: 3.0,
                alpha: 30.0,
            },
            20,
        );
        // Predicate fires on the first reached state.
        spec.termination.value_predicate = Some(ValuePredicate {
            vf: parent,
            threshold: 3.0,
        });
        let policy = zero_policy(2);
        let own_vf = const_vf(7.0, 4);
        let mut rngs = RngBundle::new(2, "t");
        let traj = rollout_one(
            &spec,
            &policy,
            Some(&own_vf),
            1.0,
            false,
            &mut rngs.reset,
            Some(&mut rngs.action),
        )
        .unwrap();
        assert_eq!(traj.cause, TerminalCause::ValueThreshold);
        assert_eq!(traj.len(), 1);
        assert!((traj.relay_bonus - 150.0).abs() < 1e-12); // gamma^0 * 30 * 5
        assert_eq!(traj.bootstrap_value, 0.0);
        assert!(traj.bonus_granted());
    }

    #[test]
    fn timeout_bootstraps_with_own_value() {
        let spec = pointmass_spec(Objective::Root, 5);
        let policy = zero_policy(2);
        let own_vf = const_vf(7.0, 4);
        let mut rngs = RngBundle::new(3, "t");
        let traj = rollout_one(
            &spec,
            &policy,
            Some(&own_vf),
            1.0,
            false,
            &mut rngs.reset,
            Some(&mut rngs.action),
        )
        .unwrap();
        assert_eq!(traj.cause, TerminalCause::Timeout);
        assert_eq!(traj.len(), 5);
        assert_eq!(traj.bootstrap_value, 7.0);
        assert_eq!(traj.relay_bonus, 0.0);
        // Only the last transition carries a cause.
        for s in &traj.steps[..4] {
            assert!(s.transition.cause.is_none());
        }
        assert_eq!(traj.steps[4].transition.cause, Some(TerminalCause::Timeout));
    }

    #[test]
    fn collect_gathers_at_least_the_batch() {
        let spec = pointmass_spec(Objective::Root, 10);
        let policy = zero_policy(2);
        let vf = const_vf(0.0, 4);
        let mut rngs = RngBundle::new(4, "t");
        let trajs = collect_rollouts(&spec, &policy, &vf, 25, &mut rngs).unwrap();
        let total: usize = trajs.iter().map(|t| t.len()).sum();
        assert!(total >= 25);
        assert_eq!(total % 10, 0); // every episode ran to its timeout
        // Bit-exact reproducibility under the same seeds.
        let mut rngs2 = RngBundle::new(4, "t");
        let trajs2 = collect_rollouts(&spec, &policy, &vf, 25, &mut rngs2).unwrap();
        assert_eq!(trajs.len(), trajs2.len());
        for (a, b) in trajs.iter().zip(&trajs2) {
            for (x, y) in a.steps.iter().zip(&b.steps) {
                assert_eq!(x.transition.state, y.transition.state);
                assert_eq!(x.transition.action, y.transition.action);
                assert_eq!(x.transition.reward, y.transition.reward);
            }
        }
    }

    #[test]
    fn cartpole_reward_scaling_is_applied() {
        let env = Env::Cartpole(CartpoleParams::default());
        let spec = SubtaskSpec {
            rho: GaussianDist::new(vec![0.0; 4], vec![0.0; 4]).unwrap(),
            termination: env.base_termination(true, 3),
            env,
            objective: Objective::Root,
            gamma: 0.99,
            reward_scale: 0.01,
        };
        let policy = zero_policy(1);
        let mut rngs = RngBundle::new(5, "t");
        let traj = rollout_one(&spec, &policy, None, 1.0, true, &mut rngs.reset, None).unwrap();
        // Upright start, zero mean action: env reward 3.0 scaled to 0.03.
        assert!((traj.steps[0].transition.reward - 0.03).abs() < 1e-9);
        assert!((traj.undiscounted_env_return(0.01) - 9.0).abs() < 1e-6);
    }
}
