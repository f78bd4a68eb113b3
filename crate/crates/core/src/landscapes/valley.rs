use serde::{Deserialize, Serialize};

use super::Landscape;
use crate::error::{Error, Result};
use crate::linalg::{dot, sqnorm};

/// `L(u, v) = 1/2 v^2 |u|^2` with `u` in `R^d`.
///
/// Every point with `v = 0` is a global minimum and the Hessian trace there
/// is `|u|^2`, so flatness along the valley floor is controlled by `|u|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WideningValley {
    pub d: usize,
}

impl WideningValley {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("widening valley needs d >= 1"));
        }
        Ok(Self { d })
    }

    /// Flat point `(u, v)`.
    pub fn point(u: &[f64], v: f64) -> Vec<f64> {
        let mut w = u.to_vec();
        w.push(v);
        w
    }
}

impl Landscape for WideningValley {
    fn name(&self) -> &'static str {
        "widening_valley"
    }

    fn dim(&self) -> usize {
        self.d + 1
    }

    fn loss(&self, w: &[f64]) -> Result<f64> {
        self.check_dim(w)?;
        let (u, v) = (&w[..self.d], w[self.d]);
        Ok(0.5 * v * v * sqnorm(u))
    }

    fn grad(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(w)?;
        let (u, v) = (&w[..self.d], w[self.d]);
        let v2 = v * v;
        let mut g: Vec<f64> = u.iter().map(|x| v2 * x).collect();
        g.push(sqnorm(u) * v);
        Ok(g)
    }

    fn hessian_trace(&self, w: &[f64]) -> Result<f64> {
        self.check_dim(w)?;
        let (u, v) = (&w[..self.d], w[self.d]);
        Ok(self.d as f64 * v * v + sqnorm(u))
    }

    fn hessian_trace_grad(&self, w: &[f64]) -> Result<Option<Vec<f64>>> {
        self.check_dim(w)?;
        let (u, v) = (&w[..self.d], w[self.d]);
        let mut g: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
        g.push(2.0 * self.d as f64 * v);
        Ok(Some(g))
    }

    fn u_sqnorm(&self, w: &[f64]) -> Option<f64> {
        (w.len() == self.dim()).then(|| sqnorm(&w[..self.d]))
    }
}

/// One-hidden-unit linear network on isotropic sparse data, reduced to
/// population form:
///
/// `L(u, v) = 1/2 v^2 |u|^2 - 2 v <u_{1:m}, b> + 2 |b|^2`
///
/// with `u` in `R^{m+d}`. The first `m` coordinates are informative, the
/// remaining `d` are spurious. The constant `2|b|^2` is the smallest shift
/// that keeps the loss nonnegative; it does not affect gradients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseValley {
    pub m: usize,
    pub d: usize,
    pub b: Vec<f64>,
}

impl SparseValley {
    pub fn new(d: usize, b: Vec<f64>) -> Result<Self> {
        if b.is_empty() || d == 0 {
            return Err(Error::invalid("sparse valley needs m >= 1 and d >= 1"));
        }
        if !b.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("sparse valley b"));
        }
        Ok(Self { m: b.len(), d, b })
    }

    fn split<'a>(&self, w: &'a [f64]) -> (&'a [f64], &'a [f64], f64) {
        let k = self.m + self.d;
        (&w[..self.m], &w[self.m..k], w[k])
    }

    pub fn spurious_block<'a>(&self, w: &'a [f64]) -> &'a [f64] {
        &w[self.m..self.m + self.d]
    }
}

impl Landscape for SparseValley {
    fn name(&self) -> &'static str {
        "sparse_valley"
    }

    fn dim(&self) -> usize {
        self.m + self.d + 1
    }

    fn loss(&self, w: &[f64]) -> Result<f64> {
        self.check_dim(w)?;
        let (inf, spur, v) = self.split(w);
        let u2 = sqnorm(inf) + sqnorm(spur);
        Ok(0.5 * v * v * u2 - 2.0 * v * dot(inf, &self.b) + 2.0 * sqnorm(&self.b))
    }

    fn grad(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(w)?;
        let (inf, spur, v) = self.split(w);
        let v2 = v * v;
        let mut g = Vec::with_capacity(self.dim());
        g.extend(inf.iter().zip(&self.b).map(|(u, b)| v2 * u - 2.0 * v * b));
        g.extend(spur.iter().map(|u| v2 * u));
        g.push(v * (sqnorm(inf) + sqnorm(spur)) - 2.0 * dot(inf, &self.b));
        Ok(g)
    }

    fn hessian_trace(&self, w: &[f64]) -> Result<f64> {
        self.check_dim(w)?;
        let (inf, spur, v) = self.split(w);
        Ok((self.m + self.d) as f64 * v * v + sqnorm(inf) + sqnorm(spur))
    }

    fn hessian_trace_grad(&self, w: &[f64]) -> Result<Option<Vec<f64>>> {
        self.check_dim(w)?;
        let k = self.m + self.d;
        let mut g: Vec<f64> = w[..k].iter().map(|x| 2.0 * x).collect();
        g.push(2.0 * k as f64 * w[k]);
        Ok(Some(g))
    }

    /// Squared norm of the spurious block only.
    fn u_sqnorm(&self, w: &[f64]) -> Option<f64> {
        (w.len() == self.dim()).then(|| sqnorm(self.spurious_block(w)))
    }
}
