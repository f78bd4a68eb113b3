//! Loss landscapes with exact derivatives up to the Hessian trace.
//!
//! Parameters are always one flat `f64` vector. Layouts:
//!
//! * valleys: `(u_1, ..., u_d, v)`
//! * quadratic regression: `w`
//! * matrix sensing: `U` in row-major order (`U[a][b]` at `a * n + b`)

pub(crate) mod dataset;
mod matrix_sensing;
mod quad_regression;
mod quadratic;
mod valley;

pub use dataset::{DatasetMetadata, DATASET_METADATA_FILE};
pub use matrix_sensing::{MatrixSensing, MatrixSensingParams};
pub use quad_regression::{QuadRegression, QuadRegressionParams};
pub use quadratic::Quadratic;
pub use valley::{SparseValley, WideningValley};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Capabilities {
    pub has_per_example: bool,
    pub has_model_outputs: bool,
    pub has_test_set: bool,
}

pub trait Landscape: Send + Sync {
    fn name(&self) -> &'static str;

    fn dim(&self) -> usize;

    /// Number of training examples; 1 for purely analytic losses.
    fn n_examples(&self) -> usize {
        1
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::default()
    }

    fn loss(&self, w: &[f64]) -> Result<f64>;

    fn grad(&self, w: &[f64]) -> Result<Vec<f64>>;

    fn hessian_trace(&self, w: &[f64]) -> Result<f64>;

    /// Gradient of `w -> tr(Hessian(w))`, when known in closed form.
    fn hessian_trace_grad(&self, _w: &[f64]) -> Result<Option<Vec<f64>>> {
        Ok(None)
    }

    /// Gradient of the mean loss over the examples in `batch`.
    fn per_example_grad(&self, _w: &[f64], _batch: &[usize]) -> Result<Vec<f64>> {
        Err(self.unsupported("per_example_grad"))
    }

    fn test_loss(&self, _w: &[f64]) -> Result<Option<f64>> {
        Ok(None)
    }

    /// `sum_i grad_w f_w(x_i)` over the training inputs.
    fn output_grad_sum(&self, _w: &[f64]) -> Result<Vec<f64>> {
        Err(self.unsupported("output_grad_sum"))
    }

    /// `L(w) + xi * sum_i f_w(x_i)`. Its gradient `grad L + xi * sum_i grad f_w(x_i)`
    /// is the label-noise gradient with one scalar draw shared by all examples.
    fn label_noise_loss(&self, _w: &[f64], _xi: f64) -> Result<f64> {
        Err(self.unsupported("label_noise_loss"))
    }

    /// Squared norm of the valley coordinate block, for valley landscapes.
    fn u_sqnorm(&self, _w: &[f64]) -> Option<f64> {
        None
    }

    fn check_dim(&self, w: &[f64]) -> Result<()> {
        if w.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: w.len(),
            })
        }
    }

    fn unsupported(&self, op: &'static str) -> Error {
        Error::Unsupported {
            op,
            landscape: self.name(),
        }
    }
}

pub(crate) fn check_batch(batch: &[usize], len: usize) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    match batch.iter().find(|&&i| i >= len) {
        Some(&index) => Err(Error::IndexOutOfRange { index, len }),
        None => Ok(()),
    }
}
