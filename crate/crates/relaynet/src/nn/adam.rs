use super::{MlpGrads, MlpParams};
use crate::error::{Error, Result};

/// Adaptive-moment optimizer state for one parameter set.
///
/// Moment accumulators are stored flat but always mirror the parameter
/// layout they were created for; the step counter is monotone.
#[derive(Clone, Debug)]
pub struct AdamState {
    step_size: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(param_count: usize, step_size: f64) -> Self {
        AdamState {
            step_size,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn for_mlp(params: &MlpParams, step_size: f64) -> Self {
        AdamState::new(params.param_count(), step_size)
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    /// One update over an MLP's parameters. Rejects the whole update if any
    /// gradient entry is non-finite; the step counter then stays unchanged.
    pub fn step_mlp(&mut self, params: &mut MlpParams, grads: &MlpGrads) -> Result<()> {
        let total: usize = grads
            .weights
            .iter()
            .chain(grads.biases.iter())
            .map(|t| t.len())
            .sum();
        if total != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "optimizer state holds {} parameters, gradients hold {}",
                self.m.len(),
                total
            )));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("adam gradient".into()));
        }
        self.t += 1;
        let mut offset = 0;
        let n_layers = grads.weights.len();
        let blocks = params.blocks_mut();
        debug_assert_eq!(blocks.len(), 2 * n_layers);
        for (l, block) in blocks.into_iter().enumerate() {
            let g = if l % 2 == 0 {
                grads.weights[l / 2].data()
            } else {
                grads.biases[l / 2].data()
            };
            if g.len() != block.len() {
                return Err(Error::ShapeMismatch(format!(
                    "gradient block {} has {} entries, parameters have {}",
                    l,
                    g.len(),
                    block.len()
                )));
            }
            self.update_block(offset, block, g);
            offset += block.len();
        }
        Ok(())
    }

    /// One update over a flat parameter vector (used for log-std vectors).
    pub fn step_vec(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "optimizer state holds {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("adam gradient".into()));
        }
        self.t += 1;
        self.update_block(0, params, grads);
        Ok(())
    }

    fn update_block(&mut self, offset: usize, params: &mut [f64], grads: &[f64]) {
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.m[offset + i];
            let v = &mut self.v[offset + i];
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.step_size * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{InitScheme, Tensor};
    use crate::rng::stream;

    fn scalar_net() -> MlpParams {
        // Single 1x1 linear layer.
        MlpParams::from_parts(
            vec![1, 1],
            vec![Tensor::new(vec![1, 1], vec![0.5]).unwrap()],
            vec![Tensor::zeros(vec![1])],
        )
        .unwrap()
    }

    fn grad_of(net: &MlpParams, w: f64, b: f64) -> MlpGrads {
        let mut g = MlpGrads::zeros_like(net);
        g.weights[0].data_mut()[0] = w;
        g.biases[0].data_mut()[0] = b;
        g
    }

    #[test]
    fn zero_gradient_leaves_fresh_params_unchanged() {
        let mut net = scalar_net();
        let mut adam = AdamState::for_mlp(&net, 1e-3);
        let zero = grad_of(&net, 0.0, 0.0);
        adam.step_mlp(&mut net, &zero).unwrap();
        assert_eq!(net.weights()[0].data()[0], 0.5);
        assert_eq!(adam.steps_taken(), 1);
    }

    #[test]
    fn first_step_magnitude_is_about_step_size() {
        let mut net = scalar_net();
        let mut adam = AdamState::for_mlp(&net, 1e-3);
        let one = grad_of(&net, 1.0, 0.0);
        adam.step_mlp(&mut net, &one).unwrap();
        let moved = (net.weights()[0].data()[0] - 0.5).abs();
        assert!((moved - 1e-3).abs() < 1e-8, "moved {moved}");
    }

    #[test]
    fn update_magnitude_decays_on_zero_gradients() {
        let mut net = scalar_net();
        let mut adam = AdamState::for_mlp(&net, 1e-3);
        let one = grad_of(&net, 1.0, 0.0);
        let zero = grad_of(&net, 0.0, 0.0);
        adam.step_mlp(&mut net, &one).unwrap();
        let w1 = net.weights()[0].data()[0];
        adam.step_mlp(&mut net, &zero).unwrap();
        let w2 = net.weights()[0].data()[0];
        adam.step_mlp(&mut net, &zero).unwrap();
        let w3 = net.weights()[0].data()[0];
        let d1 = (w2 - w1).abs();
        let d2 = (w3 - w2).abs();
        assert!(d1 > 0.0 && d2 > 0.0);
        assert!(d2 < d1, "update magnitude should strictly decrease: {d1} then {d2}");
    }

    #[test]
    fn non_finite_gradient_rejects_update() {
        let mut net = scalar_net();
        let mut adam = AdamState::for_mlp(&net, 1e-3);
        let mut g = grad_of(&net, 1.0, 0.0);
        g.weights[0].data_mut()[0] = f64::NAN;
        assert!(adam.step_mlp(&mut net, &g).is_err());
        assert_eq!(net.weights()[0].data()[0], 0.5);
        assert_eq!(adam.steps_taken(), 0);
    }

    #[test]
    fn shape_mismatch_is_detected() {
        let mut rng = stream(2, "adam");
        let mut net = MlpParams::new(vec![2, 3, 1], InitScheme::value(), &mut rng).unwrap();
        let other = MlpParams::zeros(vec![2, 4, 1]).unwrap();
        let mut adam = AdamState::for_mlp(&other, 1e-3);
        let g = MlpGrads::zeros_like(&other);
        assert!(adam.step_mlp(&mut net, &g).is_err());
    }
}
