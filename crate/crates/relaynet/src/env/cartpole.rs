//! Frictionless cart-pole swing-up. State is `(theta, theta_dot, x, x_dot)`
//! with the pole angle measured from upright; the single action is a
//! horizontal force on the cart.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CartpoleParams {
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Distance from the pivot to the pole's point mass.
    pub pole_half_length: f64,
    pub gravity: f64,
    pub force_bound: f64,
    /// Track constraint: |x| <= track_half_width is C(s) >= 0.
    pub track_half_width: f64,
    pub timestep: f64,
    pub frame_skip: usize,
    pub alive_bonus: f64,
    pub torque_penalty: f64,
}

impl Default for CartpoleParams {
    fn default() -> Self {
        CartpoleParams {
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_half_length: 0.5,
            gravity: 9.81,
            force_bound: 40.0,
            track_half_width: 3.0,
            timestep: 0.002,
            frame_skip: 5,
            alive_bonus: 2.0,
            torque_penalty: 0.01,
        }
    }
}

/// Time derivative of the state under force `f`.
///
/// Point-mass pole on a frictionless cart, from the Lagrangian:
///   x_dd = (f + m_p sin(th) (l th_d^2 - g cos(th))) / (m_c + m_p sin^2(th))
///   th_dd = (g sin(th) - x_dd cos(th)) / l
fn deriv(p: &CartpoleParams, s: &[f64; 4], f: f64) -> [f64; 4] {
    let (th, th_d) = (s[0], s[1]);
    let x_d = s[3];
    let (sin, cos) = th.sin_cos();
    let l = p.pole_half_length;
    let x_dd = (f + p.pole_mass * sin * (l * th_d * th_d - p.gravity * cos))
        / (p.cart_mass + p.pole_mass * sin * sin);
    let th_dd = (p.gravity * sin - x_dd * cos) / l;
    [th_d, th_dd, x_d, x_dd]
}

fn rk4_substep(p: &CartpoleParams, s: &[f64; 4], f: f64, dt: f64) -> [f64; 4] {
    let add = |a: &[f64; 4], b: &[f64; 4], h: f64| {
        [a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2], a[3] + h * b[3]]
    };
    let k1 = deriv(p, s, f);
    let k2 = deriv(p, &add(s, &k1, dt / 2.0), f);
    let k3 = deriv(p, &add(s, &k2, dt / 2.0), f);
    let k4 = deriv(p, &add(s, &k3, dt), f);
    let mut out = *s;
    for i in 0..4 {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Advance one control step: `frame_skip` RK4 substeps of `timestep` under a
/// constant (clamped) force.
pub fn step(p: &CartpoleParams, state: &[f64], force: f64) -> [f64; 4] {
    let f = force.clamp(-p.force_bound, p.force_bound);
    let mut s = [state[0], state[1], state[2], state[3]];
    for _ in 0..p.frame_skip {
        s = rk4_substep(p, &s, f, p.timestep);
    }
    s
}

/// cos(theta) - x^2 - torque_penalty * f^2 + alive_bonus.
pub fn reward(p: &CartpoleParams, state: &[f64], force: f64) -> f64 {
    let f = force.clamp(-p.force_bound, p.force_bound);
    state[0].cos() - state[2] * state[2] - p.torque_penalty * f * f + p.alive_bonus
}

/// Total mechanical energy; conserved under zero force.
pub fn energy(p: &CartpoleParams, s: &[f64]) -> f64 {
    let (th, th_d, _x, x_d) = (s[0], s[1], s[2], s[3]);
    let l = p.pole_half_length;
    let kinetic = 0.5 * p.cart_mass * x_d * x_d
        + 0.5
            * p.pole_mass
            * (x_d * x_d + 2.0 * l * th_d * x_d * th.cos() + l * l * th_d * th_d);
    let potential = p.pole_mass * p.gravity * l * th.cos();
    kinetic + potential
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilibria_have_zero_acceleration() {
        let p = CartpoleParams::default();
        for th in [0.0, std::f64::consts::PI] {
            let d = deriv(&p, &[th, 0.0, 0.0, 0.0], 0.0);
            assert!(d.iter().all(|&v| v.abs() < 1e-12), "theta={th}: {d:?}");
        }
    }

    #[test]
    fn zero_force_conserves_energy() {
        let p = CartpoleParams::default();
        let starts = [
            [2.5, 0.0, 0.0, 0.0],
            [0.3, 1.0, 0.5, -0.5],
            [std::f64::consts::PI - 0.4, 3.0, -1.0, 1.0],
            [1.0, -5.0, 2.0, 2.0],
        ];
        for s0 in starts {
            let mut s = s0.to_vec();
            let mut e_prev = energy(&p, &s);
            for _ in 0..200 {
                s = step(&p, &s, 0.0).to_vec();
                let e = energy(&p, &s);
                let rel = (e - e_prev).abs() / e_prev.abs().max(1.0);
                assert!(rel < 1e-6, "drift {rel} from {s0:?}");
                e_prev = e;
            }
        }
    }

    #[test]
    fn reward_matches_formula() {
        let p = CartpoleParams::default();
        assert!((reward(&p, &[0.0, 0.0, 0.0, 0.0], 0.0) - 3.0).abs() < 1e-12);
        assert!((reward(&p, &[std::f64::consts::PI, 0.0, 0.0, 0.0], 0.0) - 1.0).abs() < 1e-12);
        assert!((reward(&p, &[0.0, 0.0, 1.0, 0.0], 10.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn force_is_clamped_to_bound() {
        let p = CartpoleParams::default();
        let a = step(&p, &[0.1, 0.0, 0.0, 0.0], 1e9);
        let b = step(&p, &[0.1, 0.0, 0.0, 0.0], p.force_bound);
        assert_eq!(a, b);
    }
}
