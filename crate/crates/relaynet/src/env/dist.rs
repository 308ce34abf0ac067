use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use serde::{Deserialize, Serialize};

/// Diagonal Gaussian over states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianDist {
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl GaussianDist {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(Error::ShapeMismatch(format!(
                "mean has {} dims, variances {}",
                mean.len(),
                var.len()
            )));
        }
        if var.iter().any(|&v| v < 0.0 || !v.is_finite()) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("gaussian distribution parameters".into()));
        }
        Ok(GaussianDist { mean, var })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    /// Replace the mean, keeping the covariance.
    pub fn with_mean(&self, mean: Vec<f64>) -> Result<Self> {
        GaussianDist::new(mean, self.var.clone())
    }

    /// Unconstrained draw from `N(mean, inflation * var)`.
    pub fn sample_raw(&self, inflation: f64, rng: &mut Rng) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.var)
            .map(|(&m, &v)| m + (inflation * v).sqrt() * rng::normal(rng))
            .collect()
    }
}
