//! Planar point-mass reaching: double-integrator dynamics toward a goal
//! inside a bounded arena. State is `(px, py, vx, vy)`, action a 2-D force.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointMassParams {
    pub goal: [f64; 2],
    pub force_bound: f64,
    /// Arena constraint: |p_i| <= arena_half_width is C(s) >= 0.
    pub arena_half_width: f64,
    pub timestep: f64,
    pub frame_skip: usize,
    pub alive_bonus: f64,
    pub action_penalty: f64,
}

impl Default for PointMassParams {
    fn default() -> Self {
        PointMassParams {
            goal: [0.0, 0.0],
            force_bound: 5.0,
            arena_half_width: 5.0,
            timestep: 0.002,
            frame_skip: 5,
            alive_bonus: 1.0,
            action_penalty: 0.001,
        }
    }
}

fn clamp_action(p: &PointMassParams, action: &[f64]) -> [f64; 2] {
    [
        action[0].clamp(-p.force_bound, p.force_bound),
        action[1].clamp(-p.force_bound, p.force_bound),
    ]
}

/// Advance one control step. The double integrator is linear, so RK4 over
/// the substeps reproduces the closed-form motion exactly.
pub fn step(p: &PointMassParams, state: &[f64], action: &[f64]) -> [f64; 4] {
    let a = clamp_action(p, action);
    let mut s = [state[0], state[1], state[2], state[3]];
    let dt = p.timestep;
    for _ in 0..p.frame_skip {
        let deriv = |s: &[f64; 4]| [s[2], s[3], a[0], a[1]];
        let add = |x: &[f64; 4], d: &[f64; 4], h: f64| {
            [x[0] + h * d[0], x[1] + h * d[1], x[2] + h * d[2], x[3] + h * d[3]]
        };
        let k1 = deriv(&s);
        let k2 = deriv(&add(&s, &k1, dt / 2.0));
        let k3 = deriv(&add(&s, &k2, dt / 2.0));
        let k4 = deriv(&add(&s, &k3, dt));
        for i in 0..4 {
            s[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    s
}

/// -(distance to goal) - action_penalty * |a|^2 + alive_bonus.
pub fn reward(p: &PointMassParams, state: &[f64], action: &[f64]) -> f64 {
    let a = clamp_action(p, action);
    let dx = state[0] - p.goal[0];
    let dy = state[1] - p.goal[1];
    -(dx * dx + dy * dy).sqrt() - p.action_penalty * (a[0] * a[0] + a[1] * a[1]) + p.alive_bonus
}
