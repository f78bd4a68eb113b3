use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::dataset::{self, DatasetMetadata};
use super::{check_batch, Capabilities, Landscape};
use crate::error::{Error, Result};
use crate::noise::SeededRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadRegressionParams {
    pub d: usize,
    pub m: usize,
    pub n_nonzero: usize,
    pub m_test: usize,
    pub seed: u64,
}

impl Default for QuadRegressionParams {
    fn default() -> Self {
        Self {
            d: 100,
            m: 40,
            n_nonzero: 10,
            m_test: 100,
            seed: 0,
        }
    }
}

/// Regression through a squared reparametrization,
/// `L(w) = 1/(4M) |X (w * w) - y|^2`, with model `f_w(x) = x . (w * w)`.
#[derive(Clone, Debug)]
pub struct QuadRegression {
    x: DMatrix<f64>,
    y: DVector<f64>,
    x_test: DMatrix<f64>,
    y_test: DVector<f64>,
    w_star: Vec<f64>,
    col_sqnorm: DVector<f64>,
    col_sum: DVector<f64>,
    // X^T (X 1), the gradient of sum_j (X^T r)_j with respect to w*w.
    xt_row_sum: DVector<f64>,
}

impl QuadRegression {
    pub fn from_data(
        x: DMatrix<f64>,
        y: DVector<f64>,
        x_test: DMatrix<f64>,
        y_test: DVector<f64>,
        w_star: Vec<f64>,
    ) -> Result<Self> {
        let (m, d) = x.shape();
        if m == 0 || d == 0 {
            return Err(Error::invalid("design matrix must be non-empty"));
        }
        if y.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: y.len(),
            });
        }
        if x_test.ncols() != d || x_test.nrows() != y_test.len() {
            return Err(Error::invalid("test set shape does not match training set"));
        }
        if w_star.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: w_star.len(),
            });
        }
        let col_sqnorm = DVector::from_iterator(d, x.column_iter().map(|c| c.norm_squared()));
        let col_sum = DVector::from_iterator(d, x.column_iter().map(|c| c.sum()));
        let row_sum = &x * DVector::from_element(d, 1.0);
        let xt_row_sum = x.tr_mul(&row_sum);
        Ok(Self {
            x,
            y,
            x_test,
            y_test,
            w_star,
            col_sqnorm,
            col_sum,
            xt_row_sum,
        })
    }

    /// Standard normal designs (train and test), `w_star` with `n_nonzero`
    /// leading ones, and noiseless targets `y = X (w_star * w_star)`.
    pub fn generate(p: &QuadRegressionParams) -> Result<Self> {
        if p.d == 0 || p.m == 0 || p.m_test == 0 {
            return Err(Error::invalid("d, m and m_test must be positive"));
        }
        if p.n_nonzero > p.d {
            return Err(Error::invalid(format!(
                "n_nonzero = {} exceeds d = {}",
                p.n_nonzero, p.d
            )));
        }
        let mut rng = SeededRng::new(p.seed);
        let x = normal_matrix(&mut rng, p.m, p.d);
        let x_test = normal_matrix(&mut rng, p.m_test, p.d);
        let w_star: Vec<f64> = (0..p.d)
            .map(|j| if j < p.n_nonzero { 1.0 } else { 0.0 })
            .collect();
        let w2 = squared(&w_star);
        let y = &x * &w2;
        let y_test = &x_test * &w2;
        Self::from_data(x, y, x_test, y_test, w_star)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x_test(&self) -> &DMatrix<f64> {
        &self.x_test
    }

    pub fn y_test(&self) -> &DVector<f64> {
        &self.y_test
    }

    pub fn w_star(&self) -> &[f64] {
        &self.w_star
    }

    fn residual(&self, w: &[f64]) -> DVector<f64> {
        &self.x * squared(w) - &self.y
    }

    pub fn save(&self, dir: &Path, meta: &DatasetMetadata) -> Result<()> {
        dataset::ensure_dir(dir)?;
        dataset::write_matrix(&dir.join("X.csv"), &self.x)?;
        dataset::write_vector(&dir.join("y.csv"), self.y.as_slice())?;
        dataset::write_matrix(&dir.join("X_test.csv"), &self.x_test)?;
        dataset::write_vector(&dir.join("y_test.csv"), self.y_test.as_slice())?;
        dataset::write_vector(&dir.join("w_star.csv"), &self.w_star)?;
        meta.write(dir)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let x = dataset::read_matrix(&dir.join("X.csv"))?;
        let y = DVector::from_vec(dataset::read_vector(&dir.join("y.csv"))?);
        let x_test = dataset::read_matrix(&dir.join("X_test.csv"))?;
        let y_test = DVector::from_vec(dataset::read_vector(&dir.join("y_test.csv"))?);
        let w_star = dataset::read_vector(&dir.join("w_star.csv"))?;
        Self::from_data(x, y, x_test, y_test, w_star)
    }
}

fn normal_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> DMatrix<f64> {
    // Row-major fill so the draw order reads like the CSV layout.
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.normal()).collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

fn squared(w: &[f64]) -> DVector<f64> {
    DVector::from_iterator(w.len(), w.iter().map(|x| x * x))
}

impl Landscape for QuadRegression {
    fn name(&self) -> &'static str {
        "quad_regression"
    }

    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn n_examples(&self) -> usize {
        self.x.nrows()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            has_per_example: true,
            has_model_outputs: true,
            has_test_set: true,
        }
    }

    fn loss(&self, w: &[f64]) -> Result<f64> {
        self.check_dim(w)?;
        let m = self.n_examples() as f64;
        Ok(self.residual(w).norm_squared() / (4.0 * m))
    }

    fn grad(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(w)?;
        let m = self.n_examples() as f64;
        let xtr = self.x.tr_mul(&self.residual(w));
        Ok(w.iter().zip(xtr.iter()).map(|(wj, g)| g * wj / m).collect())
    }

    /// `(2/M) sum_j w_j^2 |X_j|^2 + (1/M) sum_j (X^T r)_j`
    fn hessian_trace(&self, w: &[f64]) -> Result<f64> {
        self.check_dim(w)?;
        let m = self.n_examples() as f64;
        let r = self.residual(w);
        let gauss_newton: f64 = w
            .iter()
            .zip(self.col_sqnorm.iter())
            .map(|(wj, c)| wj * wj * c)
            .sum();
        let curvature = self.x.tr_mul(&r).sum();
        Ok((2.0 * gauss_newton + curvature) / m)
    }

    fn hessian_trace_grad(&self, w: &[f64]) -> Result<Option<Vec<f64>>> {
        self.check_dim(w)?;
        let m = self.n_examples() as f64;
        Ok(Some(
            w.iter()
                .zip(self.col_sqnorm.iter().zip(self.xt_row_sum.iter()))
                .map(|(wj, (c, s))| (4.0 * wj * c + 2.0 * wj * s) / m)
                .collect(),
        ))
    }

    fn per_example_grad(&self, w: &[f64], batch: &[usize]) -> Result<Vec<f64>> {
        self.check_dim(w)?;
        check_batch(batch, self.n_examples())?;
        let d = self.dim();
        let w2 = squared(w);
        let mut acc = vec![0.0; d];
        for &i in batch {
            let row = self.x.row(i);
            let r = row.dot(&w2.transpose()) - self.y[i];
            for (a, xij) in acc.iter_mut().zip(row.iter()) {
                *a += r * xij;
            }
        }
        let scale = 1.0 / batch.len() as f64;
        Ok(acc.iter().zip(w).map(|(a, wj)| a * wj * scale).collect())
    }

    fn test_loss(&self, w: &[f64]) -> Result<Option<f64>> {
        self.check_dim(w)?;
        let r = &self.x_test * squared(w) - &self.y_test;
        Ok(Some(r.norm_squared() / (4.0 * self.y_test.len() as f64)))
    }

    /// `sum_i 2 x_i * w`
    fn output_grad_sum(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(w)?;
        Ok(w.iter()
            .zip(self.col_sum.iter())
            .map(|(wj, s)| 2.0 * s * wj)
            .collect())
    }

    fn label_noise_loss(&self, w: &[f64], xi: f64) -> Result<f64> {
        let outputs = (&self.x * squared(w)).sum();
        Ok(self.loss(w)? + xi * outputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> QuadRegression {
        QuadRegression::from_data(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![1.0, 0.0]),
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![1.0, 0.0]),
            vec![1.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn hand_values() {
        let l = tiny();
        assert_eq!(l.loss(&[1.0, 1.0]).unwrap(), 0.125);
        assert_eq!(l.grad(&[1.0, 1.0]).unwrap(), vec![0.0, 0.5]);
    }

    #[test]
    fn scalar_trace_is_second_derivative_of_quartic() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let zero = DVector::from_element(1, 0.0);
        let l = QuadRegression::from_data(one.clone(), zero.clone(), one, zero, vec![0.0]).unwrap();
        for w in [-2.0, 0.3, 1.7] {
            assert!((l.hessian_trace(&[w]).unwrap() - 3.0 * w * w).abs() < 1e-14);
        }
    }

    #[test]
    fn generated_ground_truth_interpolates() {
        let l = QuadRegression::generate(&QuadRegressionParams::default()).unwrap();
        assert_eq!(l.x().shape(), (40, 100));
        assert_eq!(l.x_test().shape(), (100, 100));
        assert_eq!(l.w_star().iter().filter(|&&v| v != 0.0).count(), 10);
        let w = l.w_star().to_vec();
        assert!(l.loss(&w).unwrap() < 1e-28);
        assert!(l.test_loss(&w).unwrap().unwrap() < 1e-28);
        // Sign flips of w leave w*w unchanged.
        let flipped: Vec<f64> = w.iter().map(|v| -v).collect();
        assert!(l.loss(&flipped).unwrap() < 1e-28);
    }

    #[test]
    fn generation_is_deterministic() {
        let p = QuadRegressionParams {
            seed: 9,
            ..Default::default()
        };
        let a = QuadRegression::generate(&p).unwrap();
        let b = QuadRegression::generate(&p).unwrap();
        assert_eq!(a.x(), b.x());
        assert_eq!(a.x_test(), b.x_test());
        let c = QuadRegression::generate(&QuadRegressionParams { seed: 10, ..p }).unwrap();
        assert_ne!(a.x(), c.x());
    }

    #[test]
    fn invalid_sizes() {
        let p = QuadRegressionParams {
            n_nonzero: 101,
            ..Default::default()
        };
        assert!(QuadRegression::generate(&p).is_err());
        let p = QuadRegressionParams {
            m: 0,
            ..Default::default()
        };
        assert!(QuadRegression::generate(&p).is_err());
    }

    #[test]
    fn batches() {
        let p = QuadRegressionParams {
            d: 6,
            m: 5,
            n_nonzero: 2,
            m_test: 3,
            seed: 1,
        };
        let l = QuadRegression::generate(&p).unwrap();
        let w = [0.3, -0.5, 1.1, 0.2, 0.0, -0.7];
        let full = l.grad(&w).unwrap();
        let all: Vec<usize> = (0..5).collect();
        let batch = l.per_example_grad(&w, &all).unwrap();
        for (a, b) in full.iter().zip(&batch) {
            assert!((a - b).abs() < 1e-14);
        }
        // Single example: r_i x_i * w
        let row: Vec<f64> = l.x().row(2).iter().copied().collect();
        let pred: f64 = row.iter().zip(&w).map(|(x, wj)| x * wj * wj).sum();
        let r = pred - l.y()[2];
        let single = l.per_example_grad(&w, &[2]).unwrap();
        for j in 0..6 {
            assert!((single[j] - r * row[j] * w[j]).abs() < 1e-14);
        }
        assert!(matches!(l.per_example_grad(&w, &[]), Err(Error::EmptyBatch)));
        assert!(matches!(
            l.per_example_grad(&w, &[5]),
            Err(Error::IndexOutOfRange { index: 5, len: 5 })
        ));
    }
}
