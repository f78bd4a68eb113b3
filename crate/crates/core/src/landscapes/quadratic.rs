use serde::{Deserialize, Serialize};

use super::Landscape;
use crate::error::{Error, Result};
use crate::linalg::sqnorm;

/// Isotropic quadratic `L(w) = 1/2 lambda |w|^2`. With `lambda = 0` this is
/// the flat landscape `L = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quadratic {
    pub dim: usize,
    pub curvature: f64,
}

impl Quadratic {
    pub fn new(dim: usize, curvature: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("quadratic needs dim >= 1"));
        }
        if !curvature.is_finite() {
            return Err(Error::NonFinite("quadratic curvature"));
        }
        Ok(Self { dim, curvature })
    }

    pub fn zero(dim: usize) -> Result<Self> {
        Self::new(dim, 0.0)
    }
}

impl Landscape for Quadratic {
    fn name(&self) -> &'static str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn loss(&self, w: &[f64]) -> Result<f64> {
        self.check_dim(w)?;
        Ok(0.5 * self.curvature * sqnorm(w))
    }

    fn grad(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(w)?;
        Ok(w.iter().map(|x| self.curvature * x).collect())
    }

    fn hessian_trace(&self, w: &[f64]) -> Result<f64> {
        self.check_dim(w)?;
        Ok(self.curvature * self.dim as f64)
    }

    fn hessian_trace_grad(&self, w: &[f64]) -> Result<Option<Vec<f64>>> {
        self.check_dim(w)?;
        Ok(Some(vec![0.0; self.dim]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values() {
        let q = Quadratic::new(2, 3.0).unwrap();
        assert_eq!(q.loss(&[1.0, 2.0]).unwrap(), 7.5);
        assert_eq!(q.grad(&[1.0, 2.0]).unwrap(), vec![3.0, 6.0]);
        assert_eq!(q.hessian_trace(&[1.0, 2.0]).unwrap(), 6.0);
        let z = Quadratic::zero(3).unwrap();
        assert_eq!(z.grad(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 3]);
        assert!(Quadratic::new(0, 1.0).is_err());
    }
}
