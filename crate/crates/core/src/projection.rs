//! Random feature expansion `h(x) = g(x W)` shared by every group.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }
}

/// Frozen L x M Gaussian projection followed by an elementwise activation.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomProjection {
    weights: DMatrix<f64>,
    activation: Activation,
    seed: u64,
}

impl RandomProjection {
    /// Samples W with i.i.d. standard normal entries from a ChaCha8 stream
    /// seeded by `seed`, filled row by row.
    pub fn new(input_dim: usize, output_dim: usize, seed: u64, activation: Activation) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::arg(format!("projection dimensions must be positive, got {input_dim}x{output_dim}")));
        }
        if output_dim < input_dim {
            log::warn!("projection shrinks features: {input_dim} -> {output_dim}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..input_dim * output_dim).map(|_| rng.sample(StandardNormal)).collect();
        let weights = DMatrix::from_row_slice(input_dim, output_dim, &data);
        Ok(RandomProjection { weights, activation, seed })
    }

    pub fn from_weights(weights: DMatrix<f64>, activation: Activation, seed: u64) -> Result<Self> {
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(Error::arg("projection weights must be non-empty"));
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("projection weights contain non-finite values".into()));
        }
        Ok(RandomProjection { weights, activation, seed })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn expand(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        Ok(self
            .weights
            .column_iter()
            .map(|col| self.activation.apply(col.iter().zip(x).map(|(w, v)| w * v).sum()))
            .collect())
    }

    /// Expands every row of `rows` (N x L) into an N x M matrix.
    pub fn expand_batch(&self, rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.input_dim(), rows.ncols())?;
        let mut out = rows * &self.weights;
        if self.activation != Activation::Identity {
            out.apply(|v| *v = self.activation.apply(*v));
        }
        Ok(out)
    }
}
