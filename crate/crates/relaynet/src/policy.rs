//! Gaussian stochastic policy and scalar value function over environment
//! states.

use crate::error::{Error, Result};
use crate::nn::{InitScheme, MlpParams, Tensor};
use crate::rng::{self, Rng};

/// Standard deviations are floored at 1e-8.
pub const LOG_STD_FLOOR: f64 = -18.420680743952367; // ln(1e-8)

const LN_2PI: f64 = 1.8378770664093453;

/// Diagonal-Gaussian policy: an MLP maps state to the action mean, with one
/// learned log standard deviation per action dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicy {
    mean_net: MlpParams,
    log_std: Vec<f64>,
    action_bound: f64,
}

impl GaussianPolicy {
    /// Fresh policy: orthogonal-init mean net with a small output gain,
    /// log_std starting at 0 (sigma = 1).
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        action_bound: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim);
        Ok(GaussianPolicy {
            mean_net: MlpParams::new(sizes, InitScheme::policy_mean(), rng)?,
            log_std: vec![0.0; action_dim],
            action_bound,
        })
    }

    pub fn from_parts(mean_net: MlpParams, log_std: Vec<f64>, action_bound: f64) -> Result<Self> {
        if mean_net.output_dim() != log_std.len() {
            return Err(Error::ShapeMismatch(format!(
                "mean net outputs {} dims, log_std has {}",
                mean_net.output_dim(),
                log_std.len()
            )));
        }
        let mut p = GaussianPolicy {
            mean_net,
            log_std,
            action_bound,
        };
        p.clamp_log_std();
        Ok(p)
    }

    pub fn mean_net(&self) -> &MlpParams {
        &self.mean_net
    }

    pub fn mean_net_mut(&mut self) -> &mut MlpParams {
        &mut self.mean_net
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    pub fn log_std_mut(&mut self) -> &mut [f64] {
        &mut self.log_std
    }

    /// Re-apply the log_std floor; call after optimizer updates.
    pub fn clamp_log_std(&mut self) {
        for ls in &mut self.log_std {
            *ls = ls.max(LOG_STD_FLOOR);
        }
    }

    pub fn action_bound(&self) -> f64 {
        self.action_bound
    }

    pub fn state_dim(&self) -> usize {
        self.mean_net.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.log_std.iter().map(|ls| ls.exp().max(1e-8)).collect()
    }

    fn mean_raw(&self, state: &[f64]) -> Result<Vec<f64>> {
        let out = self
            .mean_net
            .forward(&Tensor::from_vec(state.to_vec())?)?;
        Ok(out.data().to_vec())
    }

    /// Deterministic evaluation action: the mean, clamped to bounds.
    pub fn mean_action(&self, state: &[f64]) -> Result<Vec<f64>> {
        let mut m = self.mean_raw(state)?;
        for a in &mut m {
            *a = a.clamp(-self.action_bound, self.action_bound);
        }
        Ok(m)
    }

    /// Draw an action. The log density is evaluated on the unclamped draw so
    /// the surrogate ratio stays consistent; the returned action is clamped.
    pub fn sample_action(&self, state: &[f64], rng: &mut Rng) -> Result<(Vec<f64>, f64)> {
        let mean = self.mean_raw(state)?;
        let sigmas = self.sigmas();
        let mut action = Vec::with_capacity(mean.len());
        let mut log_prob = 0.0;
        for (&m, &s) in mean.iter().zip(&sigmas) {
            let z = rng::normal(rng);
            let a = m + s * z;
            log_prob += -0.5 * z * z - s.ln() - 0.5 * LN_2PI;
            action.push(a.clamp(-self.action_bound, self.action_bound));
        }
        if !log_prob.is_finite() {
            return Err(Error::NonFinite("policy sample log-prob".into()));
        }
        Ok((action, log_prob))
    }

    /// Diagonal-Gaussian log density of `action` at `state`.
    pub fn log_prob(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        let mean = self.mean_raw(state)?;
        Ok(log_prob_given_mean(&mean, &self.sigmas(), action))
    }

    /// Closed-form entropy: sum(ln sigma) + d/2 (1 + ln 2pi).
    pub fn entropy(&self) -> f64 {
        let d = self.log_std.len() as f64;
        self.sigmas().iter().map(|s| s.ln()).sum::<f64>() + 0.5 * d * (1.0 + LN_2PI)
    }
}

/// Log density with a precomputed mean (used by the batched update path).
pub fn log_prob_given_mean(mean: &[f64], sigmas: &[f64], action: &[f64]) -> f64 {
    let mut lp = 0.0;
    for ((&m, &s), &a) in mean.iter().zip(sigmas).zip(action) {
        let z = (a - m) / s;
        lp += -0.5 * z * z - s.ln() - 0.5 * LN_2PI;
    }
    lp
}

/// Scalar state-value network.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueFunction {
    net: MlpParams,
}

impl ValueFunction {
    pub fn new(state_dim: usize, hidden: &[usize], rng: &mut Rng) -> Result<Self> {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Ok(ValueFunction {
            net: MlpParams::new(sizes, InitScheme::value(), rng)?,
        })
    }

    pub fn from_net(net: MlpParams) -> Result<Self> {
        if net.output_dim() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "value net must output a scalar, got {}",
                net.output_dim()
            )));
        }
        Ok(ValueFunction { net })
    }

    pub fn net(&self) -> &MlpParams {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut MlpParams {
        &mut self.net
    }

    pub fn state_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn value(&self, state: &[f64]) -> f64 {
        let t = Tensor::from_vec(state.to_vec()).expect("finite state");
        self.net.forward(&t).expect("value forward on finite state").data()[0]
    }

    /// Gradient of the value with respect to the state.
    pub fn input_gradient(&self, state: &[f64]) -> Result<Vec<f64>> {
        let input = Tensor::from_vec(state.to_vec())?;
        let seed = Tensor::from_vec(vec![1.0])?;
        let (_, dx) = self.net.backprop(&input, &seed)?;
        Ok(dx.data().to_vec())
    }
}
