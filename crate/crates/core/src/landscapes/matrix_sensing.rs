use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::dataset::{self, DatasetMetadata};
use super::{check_batch, Capabilities, Landscape};
use crate::error::{Error, Result};
use crate::noise::SeededRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatrixSensingParams {
    pub n: usize,
    pub r: usize,
    pub m: usize,
    pub noise_std: f64,
    pub m_test: usize,
    pub seed: u64,
}

impl Default for MatrixSensingParams {
    fn default() -> Self {
        Self {
            n: 20,
            r: 5,
            m: 100,
            noise_std: 0.01,
            m_test: 100,
            seed: 0,
        }
    }
}

/// Symmetric low-rank matrix sensing with an `n x n` factor `U`:
///
/// `L(U) = (1/M) sum_i 1/2 (y_i - <A_i, U U^T>)^2`
///
/// For symmetric `A_i` and residual `r_i`, the per-example gradient is
/// `-2 r_i A_i U` and the Hessian diagonal entry at `(a, b)` is
/// `4 (A_i U)_{ab}^2 - 2 r_i (A_i)_{aa}`, so
///
/// `tr = (1/M) sum_i [4 |A_i U|_F^2 - 2 n r_i tr(A_i)]`.
///
/// The sums over `i` collapse into two precomputed matrices,
/// `Q = sum_i A_i^2` and `T = sum_i tr(A_i) A_i`.
#[derive(Clone, Debug)]
pub struct MatrixSensing {
    n: usize,
    a: Vec<DMatrix<f64>>,
    y: Vec<f64>,
    a_test: Vec<DMatrix<f64>>,
    y_test: Vec<f64>,
    x_star: DMatrix<f64>,
    tr_a: Vec<f64>,
    sum_a_sq: DMatrix<f64>,
    sum_tr_a: DMatrix<f64>,
}

impl MatrixSensing {
    pub fn from_data(
        a: Vec<DMatrix<f64>>,
        y: Vec<f64>,
        a_test: Vec<DMatrix<f64>>,
        y_test: Vec<f64>,
        x_star: DMatrix<f64>,
    ) -> Result<Self> {
        let n = x_star.nrows();
        if n == 0 || !x_star.is_square() {
            return Err(Error::invalid("ground truth must be a non-empty square matrix"));
        }
        if a.is_empty() {
            return Err(Error::invalid("at least one measurement is required"));
        }
        if a.len() != y.len() || a_test.len() != y_test.len() {
            return Err(Error::invalid("measurement count does not match label count"));
        }
        for m in a.iter().chain(&a_test) {
            if m.shape() != (n, n) {
                return Err(Error::invalid("measurement matrix has the wrong shape"));
            }
            if (m - m.transpose()).amax() > 0.0 {
                return Err(Error::invalid("measurement matrices must be symmetric"));
            }
        }
        let tr_a: Vec<f64> = a.iter().map(|m| m.trace()).collect();
        let mut sum_a_sq = DMatrix::zeros(n, n);
        let mut sum_tr_a = DMatrix::zeros(n, n);
        for (m, t) in a.iter().zip(&tr_a) {
            sum_a_sq += m * m;
            sum_tr_a += m * *t;
        }
        Ok(Self {
            n,
            a,
            y,
            a_test,
            y_test,
            x_star,
            tr_a,
            sum_a_sq,
            sum_tr_a,
        })
    }

    /// `X* = V V^T / |V V^T|_2` with `V` standard normal `n x r`; each `A_i`
    /// is the symmetric part of a standard normal matrix. Training labels
    /// carry `noise_std` Gaussian noise, test labels are exact.
    pub fn generate(p: &MatrixSensingParams) -> Result<Self> {
        if p.n == 0 || p.r == 0 || p.r > p.n {
            return Err(Error::invalid(format!(
                "need 1 <= r <= n, got r = {}, n = {}",
                p.r, p.n
            )));
        }
        if p.m == 0 {
            return Err(Error::invalid("m must be positive"));
        }
        if !(p.noise_std >= 0.0 && p.noise_std.is_finite()) {
            return Err(Error::invalid("noise_std must be finite and nonnegative"));
        }
        let mut rng = SeededRng::new(p.seed);
        let v_data: Vec<f64> = (0..p.n * p.r).map(|_| rng.normal()).collect();
        let v = DMatrix::from_row_slice(p.n, p.r, &v_data);
        let vvt = &v * v.transpose();
        let top = SymmetricEigen::new(vvt.clone()).eigenvalues.max();
        let x_star = vvt / top;

        let a: Vec<DMatrix<f64>> = (0..p.m).map(|_| sym_normal(&mut rng, p.n)).collect();
        let y: Vec<f64> = a
            .iter()
            .map(|m| frob(m, &x_star) + p.noise_std * rng.normal())
            .collect();
        let a_test: Vec<DMatrix<f64>> = (0..p.m_test).map(|_| sym_normal(&mut rng, p.n)).collect();
        let y_test: Vec<f64> = a_test.iter().map(|m| frob(m, &x_star)).collect();
        Self::from_data(a, y, a_test, y_test, x_star)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn x_star(&self) -> &DMatrix<f64> {
        &self.x_star
    }

    pub fn measurements(&self) -> &[DMatrix<f64>] {
        &self.a
    }

    pub fn labels(&self) -> &[f64] {
        &self.y
    }

    pub fn test_measurements(&self) -> &[DMatrix<f64>] {
        &self.a_test
    }

    /// A flat factor `U` with `U U^T = X*`, built from the eigendecomposition.
    pub fn ground_truth_factor(&self) -> Vec<f64> {
        let eig = SymmetricEigen::new(self.x_star.clone());
        let mut u = eig.eigenvectors.clone();
        for (mut col, lam) in u.column_iter_mut().zip(eig.eigenvalues.iter()) {
            col *= lam.max(0.0).sqrt();
        }
        to_flat(&u)
    }

    fn factor(&self, w: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, w)
    }

    fn residuals(set: &[DMatrix<f64>], labels: &[f64], g: &DMatrix<f64>) -> Vec<f64> {
        set.iter().zip(labels).map(|(a, y)| y - frob(a, g)).collect()
    }

    fn weighted_grad<'a>(
        &self,
        u: &DMatrix<f64>,
        terms: impl Iterator<Item = (&'a DMatrix<f64>, f64)>,
        count: usize,
    ) -> Vec<f64> {
        let mut s = DMatrix::zeros(self.n, self.n);
        for (a, r) in terms {
            s += a * r;
        }
        to_flat(&((s * u) * (-2.0 / count as f64)))
    }

    pub fn save(&self, dir: &Path, meta: &DatasetMetadata) -> Result<()> {
        dataset::ensure_dir(dir)?;
        dataset::write_rows(&dir.join("A.csv"), self.a.iter().map(to_flat))?;
        dataset::write_vector(&dir.join("y.csv"), &self.y)?;
        dataset::write_rows(&dir.join("A_test.csv"), self.a_test.iter().map(to_flat))?;
        dataset::write_vector(&dir.join("y_test.csv"), &self.y_test)?;
        dataset::write_matrix(&dir.join("X_star.csv"), &self.x_star)?;
        meta.write(dir)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let x_star = dataset::read_matrix(&dir.join("X_star.csv"))?;
        let n = x_star.nrows();
        let unflatten = |rows: Vec<Vec<f64>>| -> Result<Vec<DMatrix<f64>>> {
            rows.into_iter()
                .map(|r| {
                    if r.len() != n * n {
                        Err(Error::DimensionMismatch {
                            expected: n * n,
                            got: r.len(),
                        })
                    } else {
                        Ok(DMatrix::from_row_slice(n, n, &r))
                    }
                })
                .collect()
        };
        let a = unflatten(dataset::read_rows(&dir.join("A.csv"))?)?;
        let a_test = unflatten(dataset::read_rows(&dir.join("A_test.csv"))?)?;
        let y = dataset::read_vector(&dir.join("y.csv"))?;
        let y_test = dataset::read_vector(&dir.join("y_test.csv"))?;
        Self::from_data(a, y, a_test, y_test, x_star)
    }
}

fn sym_normal(rng: &mut SeededRng, n: usize) -> DMatrix<f64> {
    let data: Vec<f64> = (0..n * n).map(|_| rng.normal()).collect();
    let g = DMatrix::from_row_slice(n, n, &data);
    (&g + g.transpose()) * 0.5
}

fn frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

/// Row-major flattening.
fn to_flat(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl Landscape for MatrixSensing {
    fn name(&self) -> &'static str {
        "matrix_sensing"
    }

    fn dim(&self) -> usize {
        self.n * self.n
    }

    fn n_examples(&self) -> usize {
        self.a.len()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            has_per_example: true,
            has_model_outputs: false,
            has_test_set: !self.a_test.is_empty(),
        }
    }

    fn loss(&self, w: &[f64]) -> Result<f64> {
        self.check_dim(w)?;
        let u = self.factor(w);
        let r = Self::residuals(&self.a, &self.y, &(&u * u.transpose()));
        Ok(0.5 * r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64)
    }

    fn grad(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(w)?;
        let u = self.factor(w);
        let r = Self::residuals(&self.a, &self.y, &(&u * u.transpose()));
        Ok(self.weighted_grad(&u, self.a.iter().zip(r), self.a.len()))
    }

    fn hessian_trace(&self, w: &[f64]) -> Result<f64> {
        self.check_dim(w)?;
        let u = self.factor(w);
        let r = Self::residuals(&self.a, &self.y, &(&u * u.transpose()));
        let gauss_newton = frob(&(&self.sum_a_sq * &u), &u);
        let curvature: f64 = r.iter().zip(&self.tr_a).map(|(ri, t)| ri * t).sum();
        let m = self.a.len() as f64;
        Ok((4.0 * gauss_newton - 2.0 * self.n as f64 * curvature) / m)
    }

    fn hessian_trace_grad(&self, w: &[f64]) -> Result<Option<Vec<f64>>> {
        self.check_dim(w)?;
        let u = self.factor(w);
        let m = self.a.len() as f64;
        let g = (&self.sum_a_sq * 8.0 + &self.sum_tr_a * (4.0 * self.n as f64)) * &u / m;
        Ok(Some(to_flat(&g)))
    }

    fn per_example_grad(&self, w: &[f64], batch: &[usize]) -> Result<Vec<f64>> {
        self.check_dim(w)?;
        check_batch(batch, self.a.len())?;
        let u = self.factor(w);
        let g = &u * u.transpose();
        let terms = batch.iter().map(|&i| (&self.a[i], self.y[i] - frob(&self.a[i], &g)));
        Ok(self.weighted_grad(&u, terms, batch.len()))
    }

    fn test_loss(&self, w: &[f64]) -> Result<Option<f64>> {
        self.check_dim(w)?;
        if self.a_test.is_empty() {
            return Ok(None);
        }
        let u = self.factor(w);
        let r = Self::residuals(&self.a_test, &self.y_test, &(&u * u.transpose()));
        Ok(Some(
            0.5 * r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(noise_std: f64) -> MatrixSensing {
        MatrixSensing::generate(&MatrixSensingParams {
            n: 5,
            r: 2,
            m: 12,
            noise_std,
            m_test: 7,
            seed: 4,
        })
        .unwrap()
    }

    #[test]
    fn ground_truth_has_zero_gradient_without_noise() {
        let l = small(0.0);
        let u = l.ground_truth_factor();
        assert!(l.loss(&u).unwrap() < 1e-25);
        assert!(l.grad(&u).unwrap().iter().all(|g| g.abs() < 1e-12));
        assert!(l.test_loss(&u).unwrap().unwrap() < 1e-25);
    }

    #[test]
    fn ground_truth_is_unit_norm_with_requested_rank() {
        let l = MatrixSensing::generate(&MatrixSensingParams::default()).unwrap();
        let eig = SymmetricEigen::new(l.x_star().clone()).eigenvalues;
        assert!((eig.max() - 1.0).abs() < 1e-12);
        let rank = eig.iter().filter(|&&e| e > 1e-10).count();
        assert_eq!(rank, 5);
        assert!(eig.iter().all(|&e| e > -1e-12));
        assert_eq!(l.measurements().len(), 100);
        assert!(l
            .measurements()
            .iter()
            .all(|a| a.shape() == (20, 20) && a == &a.transpose()));
    }

    #[test]
    fn full_batch_matches_grad() {
        let l = small(0.01);
        let mut rng = SeededRng::new(3);
        let w: Vec<f64> = (0..25).map(|_| rng.normal()).collect();
        let all: Vec<usize> = (0..12).collect();
        let full = l.grad(&w).unwrap();
        let batch = l.per_example_grad(&w, &all).unwrap();
        for (a, b) in full.iter().zip(&batch) {
            assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn invalid_sizes() {
        let p = MatrixSensingParams {
            r: 21,
            ..Default::default()
        };
        assert!(MatrixSensing::generate(&p).is_err());
        let p = MatrixSensingParams {
            m: 0,
            ..Default::default()
        };
        assert!(MatrixSensing::generate(&p).is_err());
    }
}
