use super::{compute_gae, Trajectory};
use crate::error::Result;
use crate::nn::{AdamState, Tensor};
use crate::policy::{log_prob_given_mean, GaussianPolicy, ValueFunction};
use crate::rng::Rng;
use rand::seq::SliceRandom;

/// Flattened training batch. Advantages are normalized to zero mean and
/// unit variance across the whole batch.
#[derive(Clone, Debug)]
pub struct UpdateBatch {
    pub n: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub value_targets: Vec<f64>,
}

impl UpdateBatch {
    pub fn from_trajectories(trajs: &[Trajectory], gamma: f64, lambda: f64) -> Self {
        let n: usize = trajs.iter().map(|t| t.len()).sum();
        assert!(n > 0, "empty batch");
        let state_dim = trajs[0].steps[0].transition.state.len();
        let action_dim = trajs[0].steps[0].transition.action.len();
        let mut batch = UpdateBatch {
            n,
            state_dim,
            action_dim,
            states: Vec::with_capacity(n * state_dim),
            actions: Vec::with_capacity(n * action_dim),
            old_log_probs: Vec::with_capacity(n),
            advantages: Vec::with_capacity(n),
            value_targets: Vec::with_capacity(n),
        };
        for traj in trajs {
            let (adv, targets) = compute_gae(traj, gamma, lambda);
            for (step, (a, t)) in traj.steps.iter().zip(adv.iter().zip(&targets)) {
                batch.states.extend_from_slice(&step.transition.state);
                batch.actions.extend_from_slice(&step.transition.action);
                batch.old_log_probs.push(step.log_prob);
                batch.advantages.push(*a);
                batch.value_targets.push(*t);
            }
        }
        batch.normalize_advantages();
        batch
    }

    fn normalize_advantages(&mut self) {
        let n = self.advantages.len() as f64;
        let mean = self.advantages.iter().sum::<f64>() / n;
        let var = self
            .advantages
            .iter()
            .map(|a| (a - mean) * (a - mean))
            .sum::<f64>()
            / n;
        let std = var.sqrt().max(1e-8);
        for a in &mut self.advantages {
            *a = (*a - mean) / std;
        }
    }
}

/// Adam states for the three parameter blocks of an actor-critic pair.
#[derive(Clone, Debug)]
pub struct PolicyOptimizer {
    pub mean_net: AdamState,
    pub log_std: AdamState,
    pub value_net: AdamState,
}

impl PolicyOptimizer {
    pub fn new(policy: &GaussianPolicy, vf: &ValueFunction, step_size: f64) -> Self {
        PolicyOptimizer {
            mean_net: AdamState::for_mlp(policy.mean_net(), step_size),
            log_std: AdamState::new(policy.log_std().len(), step_size),
            value_net: AdamState::for_mlp(vf.net(), step_size),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct UpdateCfg {
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub entropy_coef: f64,
    /// Mean |old - new| log-density per epoch above this stops further
    /// epochs (diagnostic, not a failure).
    pub kl_cap: f64,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct UpdateDiagnostics {
    pub epochs_run: usize,
    pub approx_kl: f64,
    pub value_loss: f64,
    pub clip_fraction: f64,
}

/// Clipped-surrogate policy update plus squared-loss value regression over
/// shuffled minibatches.
pub fn ppo_update(
    policy: &mut GaussianPolicy,
    vf: &mut ValueFunction,
    opt: &mut PolicyOptimizer,
    batch: &UpdateBatch,
    cfg: &UpdateCfg,
    rng: &mut Rng,
) -> Result<UpdateDiagnostics> {
    let n = batch.n;
    let (sd, ad) = (batch.state_dim, batch.action_dim);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut diag = UpdateDiagnostics::default();

    for epoch in 0..cfg.epochs {
        indices.shuffle(rng);
        let mut kl_sum = 0.0;
        let mut clip_count = 0usize;
        let mut vloss_sum = 0.0;
        let mut mb_count = 0usize;
        for chunk in indices.chunks(cfg.minibatch.max(1)) {
            let m = chunk.len();
            // Gather the minibatch.
            let mut xs = Vec::with_capacity(m * sd);
            let mut acts = Vec::with_capacity(m * ad);
            for &i in chunk {
                xs.extend_from_slice(&batch.states[i * sd..(i + 1) * sd]);
                acts.extend_from_slice(&batch.actions[i * ad..(i + 1) * ad]);
            }
            let xs = Tensor::new(vec![m, sd], xs)?;

            // Policy pass.
            let sigmas = policy.sigmas();
            let trace = policy.mean_net().forward_cached(&xs)?;
            let means = trace.output().data();
            let mut d_mean = vec![0.0; m * ad];
            let mut d_log_std = vec![0.0; ad];
            for (row, &i) in chunk.iter().enumerate() {
                let mean_row = &means[row * ad..(row + 1) * ad];
                let act_row = &acts[row * ad..(row + 1) * ad];
                let new_lp = log_prob_given_mean(mean_row, &sigmas, act_row);
                let old_lp = batch.old_log_probs[i];
                let adv = batch.advantages[i];
                let ratio = (new_lp - old_lp).exp();
                let unclipped = ratio * adv;
                let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * adv;
                // Gradient of min(unclipped, clipped) w.r.t. the log-density:
                // zero once the clipped branch is the smaller one.
                let gate = if unclipped <= clipped { unclipped } else { 0.0 };
                let coef = -gate / m as f64; // maximize: descend on -surrogate
                for j in 0..ad {
                    let z = (act_row[j] - mean_row[j]) / sigmas[j];
                    d_mean[row * ad + j] = coef * z / sigmas[j];
                    d_log_std[j] += coef * (z * z - 1.0);
                }
                kl_sum += old_lp - new_lp;
                if (ratio - 1.0).abs() > cfg.clip {
                    clip_count += 1;
                }
            }
            for d in &mut d_log_std {
                *d -= cfg.entropy_coef;
            }
            let d_mean = Tensor::new(vec![m, ad], d_mean)?;
            let (pgrads, _) = policy.mean_net().backprop_cached(&trace, &d_mean)?;
            opt.mean_net.step_mlp(policy.mean_net_mut(), &pgrads)?;
            opt.log_std.step_vec(policy.log_std_mut(), &d_log_std)?;
            policy.clamp_log_std();

            // Value regression toward the batch targets.
            let vtrace = vf.net().forward_cached(&xs)?;
            let vout = vtrace.output().data().to_vec();
            let mut d_v = vec![0.0; m];
            let mut vloss = 0.0;
            for (row, &i) in chunk.iter().enumerate() {
                let err = vout[row] - batch.value_targets[i];
                vloss += err * err;
                d_v[row] = 2.0 * err / m as f64;
            }
            vloss_sum += vloss / m as f64;
            mb_count += 1;
            let d_v = Tensor::new(vec![m, 1], d_v)?;
            let (vgrads, _) = vf.net().backprop_cached(&vtrace, &d_v)?;
            opt.value_net.step_mlp(vf.net_mut(), &vgrads)?;
        }
        diag.epochs_run = epoch + 1;
        diag.approx_kl = kl_sum / n as f64;
        diag.value_loss = vloss_sum / mb_count.max(1) as f64;
        diag.clip_fraction = clip_count as f64 / n as f64;
        if diag.approx_kl.abs() > cfg.kl_cap {
            break;
        }
    }
    Ok(diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::MlpParams;
    use crate::rng::stream;

    fn small_policy(seed: u64) -> (GaussianPolicy, ValueFunction) {
        let mut rng = stream(seed, "upd");
        let p = GaussianPolicy::new(3, 2, &[8], 1.0, &mut rng).unwrap();
        let v = ValueFunction::new(3, &[8], &mut rng).unwrap();
        (p, v)
    }

    fn batch_with(
        policy: &GaussianPolicy,
        n: usize,
        adv: f64,
        lp_shift: f64,
        seed: u64,
    ) -> UpdateBatch {
        let mut rng = stream(seed, "batch");
        let mut b = UpdateBatch {
            n,
            state_dim: 3,
            action_dim: 2,
            states: Vec::new(),
            actions: Vec::new(),
            old_log_probs: Vec::new(),
            advantages: vec![adv; n],
            value_targets: vec![0.5; n],
        };
        for _ in 0..n {
            let s: Vec<f64> = (0..3).map(|_| crate::rng::normal(&mut rng)).collect();
            let (a, lp) = policy.sample_action(&s, &mut rng).unwrap();
            b.states.extend_from_slice(&s);
            b.actions.extend_from_slice(&a);
            b.old_log_probs.push(lp + lp_shift);
        }
        b
    }

    #[test]
    fn zero_advantages_leave_policy_unchanged() {
        let (mut policy, mut vf) = small_policy(1);
        let before = policy.clone();
        let batch = batch_with(&policy, 16, 0.0, 0.0, 2);
        let mut opt = PolicyOptimizer::new(&policy, &vf, 1e-3);
        let cfg = UpdateCfg {
            clip: 0.2,
            epochs: 3,
            minibatch: 8,
            entropy_coef: 0.0,
            kl_cap: 1e9,
        };
        let mut rng = stream(3, "upd");
        ppo_update(&mut policy, &mut vf, &mut opt, &batch, &cfg, &mut rng).unwrap();
        assert_eq!(policy, before);
    }

    #[test]
    fn clipped_ratio_contributes_no_policy_gradient() {
        // Shift old log-probs so the ratio is ~1.3 with positive advantages:
        // the clipped branch is active and the policy must not move.
        let (mut policy, mut vf) = small_policy(4);
        let before = policy.clone();
        let shift = -(1.3_f64.ln());
        let batch = batch_with(&policy, 8, 1.0, shift, 5);
        let mut opt = PolicyOptimizer::new(&policy, &vf, 1e-3);
        let cfg = UpdateCfg {
            clip: 0.2,
            epochs: 1,
            minibatch: 8,
            entropy_coef: 0.0,
            kl_cap: 1e9,
        };
        let mut rng = stream(6, "upd");
        let diag = ppo_update(&mut policy, &mut vf, &mut opt, &batch, &cfg, &mut rng).unwrap();
        assert_eq!(policy, before);
        assert!(diag.clip_fraction > 0.99, "clip fraction {}", diag.clip_fraction);
    }

    #[test]
    fn value_loss_decreases_over_epochs_on_fixed_batch() {
        let (mut policy, mut vf) = small_policy(7);
        let batch = batch_with(&policy, 64, 0.0, 0.0, 8);
        let mut opt = PolicyOptimizer::new(&policy, &vf, 1e-3);
        let mut rng = stream(9, "upd");
        let mut losses = Vec::new();
        for _ in 0..6 {
            let cfg = UpdateCfg {
                clip: 0.2,
                epochs: 1,
                minibatch: 64,
                entropy_coef: 0.0,
                kl_cap: 1e9,
            };
            let d = ppo_update(&mut policy, &mut vf, &mut opt, &batch, &cfg, &mut rng).unwrap();
            losses.push(d.value_loss);
        }
        for w in losses.windows(2) {
            assert!(w[1] < w[0], "value loss should strictly decrease: {losses:?}");
        }
    }

    #[test]
    fn positive_advantages_raise_chosen_action_density() {
        let (mut policy, mut vf) = small_policy(10);
        let batch = batch_with(&policy, 64, 1.0, 0.0, 11);
        let before = policy.clone();
        let mut opt = PolicyOptimizer::new(&policy, &vf, 3e-4);
        let cfg = UpdateCfg {
            clip: 0.2,
            epochs: 4,
            minibatch: 16,
            entropy_coef: 0.0,
            kl_cap: 1e9,
        };
        let mut rng = stream(12, "upd");
        ppo_update(&mut policy, &mut vf, &mut opt, &batch, &cfg, &mut rng).unwrap();
        let mut improved = 0;
        for i in 0..batch.n {
            let s = &batch.states[i * 3..(i + 1) * 3];
            let a = &batch.actions[i * 2..(i + 1) * 2];
            let lp_new = policy.log_prob(s, a).unwrap();
            let lp_old = before.log_prob(s, a).unwrap();
            if lp_new > lp_old {
                improved += 1;
            }
        }
        assert!(
            improved as f64 > 0.8 * batch.n as f64,
            "only {improved}/{} actions got likelier",
            batch.n
        );
    }

    #[test]
    fn kl_cap_stops_epochs_early() {
        let (mut policy, mut vf) = small_policy(13);
        let batch = batch_with(&policy, 64, 5.0, 0.0, 14);
        let mut opt = PolicyOptimizer::new(&policy, &vf, 5e-2);
        let cfg = UpdateCfg {
            clip: 10.0, // effectively unclipped so the policy moves fast
            epochs: 50,
            minibatch: 64,
            entropy_coef: 0.0,
            kl_cap: 1e-4,
        };
        let mut rng = stream(15, "upd");
        let diag = ppo_update(&mut policy, &mut vf, &mut opt, &batch, &cfg, &mut rng).unwrap();
        assert!(diag.epochs_run < 50, "ran {} epochs", diag.epochs_run);
    }

    #[test]
    fn normalization_gives_zero_mean_unit_variance() {
        let (policy, _) = small_policy(16);
        let mut rngs = crate::rng::RngBundle::new(17, "nb");
        let spec = {
            use crate::env::{Env, GaussianDist, PointMassParams};
            use crate::ppo::{Objective, SubtaskSpec};
            let env = Env::PointMass(PointMassParams::default());
            SubtaskSpec {
                rho: GaussianDist::new(vec![1.0, 1.0, 0.0, 0.0], vec![0.01; 4]).unwrap(),
                termination: env.base_termination(false, 30),
                env,
                objective: Objective::Root,
                gamma: 0.99,
                reward_scale: 1.0,
            }
        };
        let p2 = {
            let net = MlpParams::zeros(vec![4, 2]).unwrap();
            GaussianPolicy::from_parts(net, vec![0.0; 2], 1.0).unwrap()
        };
        let _ = policy;
        let vf = ValueFunction::from_net(MlpParams::zeros(vec![4, 1]).unwrap()).unwrap();
        let trajs = super::super::collect_rollouts(&spec, &p2, &vf, 120, &mut rngs).unwrap();
        let batch = UpdateBatch::from_trajectories(&trajs, 0.99, 0.95);
        let mean: f64 = batch.advantages.iter().sum::<f64>() / batch.n as f64;
        let var: f64 =
            batch.advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / batch.n as f64;
        assert!(mean.abs() < 1e-10);
        assert!((var - 1.0).abs() < 1e-10);
    }
}
