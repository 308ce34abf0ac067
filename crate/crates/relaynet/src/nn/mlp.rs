use super::Tensor;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use serde::{Deserialize, Serialize};

/// Fully connected network: tanh on hidden layers, identity on the output.
///
/// Weight matrices are `[n_in, n_out]` row-major; layer `l` maps
/// `layer_sizes[l]` to `layer_sizes[l + 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
}

/// Weight initialization for a fresh network.
#[derive(Clone, Copy, Debug)]
pub struct InitScheme {
    /// Gain applied to hidden-layer weights.
    pub hidden_gain: f64,
    /// Gain applied to the output layer (small values stabilize early policy
    /// updates).
    pub output_gain: f64,
}

impl InitScheme {
    pub fn policy_mean() -> Self {
        InitScheme {
            hidden_gain: std::f64::consts::SQRT_2,
            output_gain: 0.01,
        }
    }

    pub fn value() -> Self {
        InitScheme {
            hidden_gain: std::f64::consts::SQRT_2,
            output_gain: 1.0,
        }
    }
}

/// Parameter-shaped gradient (or moment) storage.
#[derive(Clone, Debug)]
pub struct MlpGrads {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        MlpGrads {
            weights: params
                .weights
                .iter()
                .map(|w| Tensor::zeros(w.shape().to_vec()))
                .collect(),
            biases: params
                .biases
                .iter()
                .map(|b| Tensor::zeros(b.shape().to_vec()))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .all(|t| t.data().iter().all(|x| x.is_finite()))
    }
}

/// Activations recorded by a forward pass, consumed by the backward pass.
pub struct ForwardTrace {
    /// `activations[0]` is the input; `activations[l + 1]` the output of
    /// layer `l` (post-tanh for hidden layers).
    activations: Vec<Tensor>,
    rows: usize,
}

impl ForwardTrace {
    pub fn output(&self) -> &Tensor {
        self.activations.last().expect("trace has layers")
    }
}

impl MlpParams {
    /// Randomly initialized network. Weights are orthogonalized Gaussian
    /// draws scaled per layer; biases start at zero.
    pub fn new(layer_sizes: Vec<usize>, init: InitScheme, rng: &mut Rng) -> Result<Self> {
        check_layer_sizes(&layer_sizes)?;
        let n_layers = layer_sizes.len() - 1;
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (n_in, n_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let gain = if l + 1 == n_layers {
                init.output_gain
            } else {
                init.hidden_gain
            };
            weights.push(orthogonal(n_in, n_out, gain, rng));
            biases.push(Tensor::zeros(vec![n_out]));
        }
        Ok(MlpParams {
            layer_sizes,
            weights,
            biases,
        })
    }

    pub fn zeros(layer_sizes: Vec<usize>) -> Result<Self> {
        check_layer_sizes(&layer_sizes)?;
        let n_layers = layer_sizes.len() - 1;
        let weights = (0..n_layers)
            .map(|l| Tensor::zeros(vec![layer_sizes[l], layer_sizes[l + 1]]))
            .collect();
        let biases = (0..n_layers)
            .map(|l| Tensor::zeros(vec![layer_sizes[l + 1]]))
            .collect();
        Ok(MlpParams {
            layer_sizes,
            weights,
            biases,
        })
    }

    /// Reassemble a network from serialized parts, re-checking every shape.
    pub fn from_parts(
        layer_sizes: Vec<usize>,
        weights: Vec<Tensor>,
        biases: Vec<Tensor>,
    ) -> Result<Self> {
        check_layer_sizes(&layer_sizes)?;
        let n_layers = layer_sizes.len() - 1;
        if weights.len() != n_layers || biases.len() != n_layers {
            return Err(Error::ShapeMismatch(format!(
                "expected {} weight/bias pairs, got {}/{}",
                n_layers,
                weights.len(),
                biases.len()
            )));
        }
        for l in 0..n_layers {
            let want_w = [layer_sizes[l], layer_sizes[l + 1]];
            if weights[l].shape() != want_w {
                return Err(Error::ShapeMismatch(format!(
                    "layer {} weights: expected {:?}, got {:?}",
                    l,
                    want_w,
                    weights[l].shape()
                )));
            }
            if biases[l].shape() != [layer_sizes[l + 1]] {
                return Err(Error::ShapeMismatch(format!(
                    "layer {} bias: expected [{}], got {:?}",
                    l,
                    layer_sizes[l + 1],
                    biases[l].shape()
                )));
            }
        }
        Ok(MlpParams {
            layer_sizes,
            weights,
            biases,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layer sizes")
    }

    pub fn weights(&self) -> &[Tensor] {
        &self.weights
    }

    pub fn biases(&self) -> &[Tensor] {
        &self.biases
    }

    /// Total parameter count: sum over layers of `(n_in + 1) * n_out`.
    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    /// Mutable views of every parameter block, weights then bias per layer.
    pub(crate) fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.data_mut(), b.data_mut()])
            .collect()
    }

    /// Forward pass. Accepts a single state (1-D) or a batch (`[rows, in]`).
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.forward_cached(input)?.output().clone())
    }

    /// Forward pass retaining per-layer activations for `backprop_cached`.
    pub fn forward_cached(&self, input: &Tensor) -> Result<ForwardTrace> {
        let (rows, cols) = input.rows_cols()?;
        if cols != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input width {} does not match first layer size {}",
                cols,
                self.input_dim()
            )));
        }
        input.ensure_finite("mlp forward input")?;

        let n_layers = self.weights.len();
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(input.clone());
        for l in 0..n_layers {
            let n_in = self.layer_sizes[l];
            let n_out = self.layer_sizes[l + 1];
            let prev = activations[l].data();
            let w = self.weights[l].data();
            let b = self.biases[l].data();
            let mut out = vec![0.0; rows * n_out];
            for r in 0..rows {
                let x = &prev[r * n_in..(r + 1) * n_in];
                let y = &mut out[r * n_out..(r + 1) * n_out];
                y.copy_from_slice(b);
                for (i, &xi) in x.iter().enumerate() {
                    let wrow = &w[i * n_out..(i + 1) * n_out];
                    for (yj, &wij) in y.iter_mut().zip(wrow) {
                        *yj += xi * wij;
                    }
                }
                if l + 1 < n_layers {
                    for yj in y.iter_mut() {
                        *yj = yj.tanh();
                    }
                }
            }
            let shape = if input.shape().len() == 1 {
                vec![n_out]
            } else {
                vec![rows, n_out]
            };
            activations.push(Tensor::new(shape, out)?);
        }
        Ok(ForwardTrace { activations, rows })
    }

    /// Gradients of `sum(output * output_grad)` with respect to parameters
    /// and input.
    pub fn backprop(&self, input: &Tensor, output_grad: &Tensor) -> Result<(MlpGrads, Tensor)> {
        let trace = self.forward_cached(input)?;
        self.backprop_cached(&trace, output_grad)
    }

    /// Backward pass over a recorded forward trace.
    pub fn backprop_cached(
        &self,
        trace: &ForwardTrace,
        output_grad: &Tensor,
    ) -> Result<(MlpGrads, Tensor)> {
        let rows = trace.rows;
        let n_layers = self.weights.len();
        if output_grad.len() != rows * self.output_dim() {
            return Err(Error::ShapeMismatch(format!(
                "output_grad has {} elements, expected {} x {}",
                output_grad.len(),
                rows,
                self.output_dim()
            )));
        }
        output_grad.ensure_finite("backprop seed")?;

        let mut grads = MlpGrads::zeros_like(self);
        let mut delta = output_grad.data().to_vec();
        for l in (0..n_layers).rev() {
            let n_in = self.layer_sizes[l];
            let n_out = self.layer_sizes[l + 1];
            // Chain through tanh for hidden-layer outputs.
            if l + 1 < n_layers {
                let a = trace.activations[l + 1].data();
                for (d, &ai) in delta.iter_mut().zip(a) {
                    *d *= 1.0 - ai * ai;
                }
            }
            let prev = trace.activations[l].data();
            let dw = grads.weights[l].data_mut();
            let db = grads.biases[l].data_mut();
            for r in 0..rows {
                let x = &prev[r * n_in..(r + 1) * n_in];
                let d = &delta[r * n_out..(r + 1) * n_out];
                for (j, &dj) in d.iter().enumerate() {
                    db[j] += dj;
                }
                for (i, &xi) in x.iter().enumerate() {
                    let wrow = &mut dw[i * n_out..(i + 1) * n_out];
                    for (wij, &dj) in wrow.iter_mut().zip(d) {
                        *wij += xi * dj;
                    }
                }
            }
            // Propagate to the previous activations (yields the input
            // gradient once l == 0).
            let w = self.weights[l].data();
            let mut prev_delta = vec![0.0; rows * n_in];
            for r in 0..rows {
                let d = &delta[r * n_out..(r + 1) * n_out];
                let pd = &mut prev_delta[r * n_in..(r + 1) * n_in];
                for (i, pdi) in pd.iter_mut().enumerate() {
                    let wrow = &w[i * n_out..(i + 1) * n_out];
                    let mut acc = 0.0;
                    for (&wij, &dj) in wrow.iter().zip(d) {
                        acc += wij * dj;
                    }
                    *pdi = acc;
                }
            }
            delta = prev_delta;
        }
        if !grads.is_finite() || delta.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("backprop result".into()));
        }
        let shape = if output_grad.shape().len() == 1 {
            vec![self.input_dim()]
        } else {
            vec![rows, self.input_dim()]
        };
        Ok((grads, Tensor::new(shape, delta)?))
    }
}

fn check_layer_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
        return Err(Error::ShapeMismatch(format!(
            "layer sizes must list at least input and output, all nonzero: {sizes:?}"
        )));
    }
    Ok(())
}

/// Orthogonalized Gaussian init: draw a Gaussian matrix and run modified
/// Gram-Schmidt along the shorter axis, then scale by `gain`.
fn orthogonal(n_in: usize, n_out: usize, gain: f64, rng: &mut Rng) -> Tensor {
    let (tall, short) = (n_in.max(n_out), n_in.min(n_out));
    // columns[k] is a vector of length `tall`.
    let mut cols: Vec<Vec<f64>> = (0..short)
        .map(|_| (0..tall).map(|_| rng::normal(rng)).collect())
        .collect();
    for k in 0..short {
        for j in 0..k {
            let dot: f64 = cols[k].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
            for i in 0..tall {
                cols[k][i] -= dot * cols[j][i];
            }
        }
        let norm: f64 = cols[k].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for x in cols[k].iter_mut() {
                *x /= norm;
            }
        } else {
            // Degenerate draw; fall back to a unit basis vector.
            cols[k].iter_mut().for_each(|x| *x = 0.0);
            cols[k][k % tall] = 1.0;
        }
    }
    let mut data = vec![0.0; n_in * n_out];
    for i in 0..n_in {
        for j in 0..n_out {
            let v = if n_in >= n_out {
                cols[j][i] // columns of W are orthonormal
            } else {
                cols[i][j] // rows of W are orthonormal
            };
            data[i * n_out + j] = gain * v;
        }
    }
    Tensor::new(vec![n_in, n_out], data).expect("orthogonal init produces finite values")
}
