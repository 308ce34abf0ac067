use super::Trajectory;

/// Generalized advantage estimation over one trajectory.
///
/// `delta_t = r_t + gamma * V(s_{t+1}) - V(s_t)` with the trailing value
/// replaced by the trajectory's bootstrap (0 on failure and value-threshold
/// ends, V(s_T) on timeout); advantages are the `(gamma * lambda)`-weighted
/// tail sums of the deltas. Returns `(advantages, value_targets)` with
/// `target_t = A_t + V(s_t)`.
pub fn compute_gae(traj: &Trajectory, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    assert!((0.0..=1.0).contains(&lambda), "lambda must be in [0, 1]");
    let n = traj.len();
    let mut advantages = vec![0.0; n];
    let mut targets = vec![0.0; n];
    let mut gae = 0.0;
    let mut next_value = traj.bootstrap_value;
    for t in (0..n).rev() {
        let r = traj.steps[t].transition.reward;
        let v = traj.steps[t].value;
        let delta = r + gamma * next_value - v;
        gae = delta + gamma * lambda * gae;
        advantages[t] = gae;
        targets[t] = gae + v;
        next_value = v;
    }
    (advantages, targets)
}
