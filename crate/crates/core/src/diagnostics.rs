//! Modified loss and expected sharpness, plus the conditional-mean oracle
//! and finite-difference validators used to check them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscapes::Landscape;
use crate::linalg::{axpy, norm, sqnorm};
use crate::noise::SeededRng;
use crate::seed::derive_seed;
use crate::stats::Moments;

/// Relative gradient step: `h = GRAD_STEP * (1 + |w|)`.
pub const GRAD_STEP: f64 = 1e-5;
/// Relative step for second differences: `h = TRACE_STEP * (1 + |w|)`.
pub const TRACE_STEP: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceGradMethod {
    /// Closed-form gradient of the Hessian trace; errors if the landscape has none.
    Analytic,
    /// Central differences of `hessian_trace` with `h = rel_step * (1 + |w|)`.
    FiniteDifference { rel_step: f64 },
    /// Analytic when available, otherwise finite differences at [`TRACE_STEP`].
    Auto,
}

/// `L~(z) = L(z) + sigma^2 / 2 * tr(Hessian L(z))`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModifiedLossSpec {
    pub sigma2: f64,
    pub method: TraceGradMethod,
}

impl ModifiedLossSpec {
    pub fn new(sigma2: f64, method: TraceGradMethod) -> Result<Self> {
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(Error::invalid(format!("sigma^2 must be >= 0, got {sigma2}")));
        }
        if let TraceGradMethod::FiniteDifference { rel_step } = method {
            if !(rel_step > 0.0) {
                return Err(Error::invalid("finite-difference step must be positive"));
            }
        }
        Ok(Self { sigma2, method })
    }
}

pub fn modified_loss(l: &dyn Landscape, spec: &ModifiedLossSpec, z: &[f64]) -> Result<f64> {
    Ok(l.loss(z)? + 0.5 * spec.sigma2 * l.hessian_trace(z)?)
}

pub fn trace_grad(l: &dyn Landscape, method: TraceGradMethod, z: &[f64]) -> Result<Vec<f64>> {
    match method {
        TraceGradMethod::Analytic => l
            .hessian_trace_grad(z)?
            .ok_or_else(|| l.unsupported("analytic hessian_trace_grad")),
        TraceGradMethod::FiniteDifference { rel_step } => fd_trace_grad(l, z, rel_step),
        TraceGradMethod::Auto => match l.hessian_trace_grad(z)? {
            Some(g) => Ok(g),
            None => fd_trace_grad(l, z, TRACE_STEP),
        },
    }
}

pub fn modified_grad(l: &dyn Landscape, spec: &ModifiedLossSpec, z: &[f64]) -> Result<Vec<f64>> {
    let mut g = l.grad(z)?;
    if spec.sigma2 != 0.0 {
        axpy(&mut g, 0.5 * spec.sigma2, &trace_grad(l, spec.method, z)?);
    }
    Ok(g)
}

fn central_diff(
    w: &[f64],
    h: f64,
    mut f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut p = w.to_vec();
    let mut out = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        p[i] = w[i] + h;
        let fp = f(&p)?;
        p[i] = w[i] - h;
        let fm = f(&p)?;
        p[i] = w[i];
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

pub fn fd_gradient(l: &dyn Landscape, w: &[f64]) -> Result<Vec<f64>> {
    l.check_dim(w)?;
    central_diff(w, GRAD_STEP * (1.0 + norm(w)), |p| l.loss(p))
}

fn fd_trace_grad(l: &dyn Landscape, z: &[f64], rel_step: f64) -> Result<Vec<f64>> {
    l.check_dim(z)?;
    central_diff(z, rel_step * (1.0 + norm(z)), |p| l.hessian_trace(p))
}

/// Sum of second central differences of the loss along each coordinate.
pub fn fd_hessian_trace(l: &dyn Landscape, w: &[f64]) -> Result<f64> {
    l.check_dim(w)?;
    let h = TRACE_STEP * (1.0 + norm(w));
    let f0 = l.loss(w)?;
    let mut p = w.to_vec();
    let mut total = 0.0;
    for i in 0..w.len() {
        p[i] = w[i] + h;
        let fp = l.loss(&p)?;
        p[i] = w[i] - h;
        let fm = l.loss(&p)?;
        p[i] = w[i];
        total += (fp - 2.0 * f0 + fm) / (h * h);
    }
    Ok(total)
}

/// `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn relative_error_vec(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        diff.sqrt() / scale
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteDiffReport {
    pub landscape: String,
    pub n_points: usize,
    pub max_grad_rel_err: f64,
    pub max_trace_rel_err: f64,
}

pub fn finite_diff_check(l: &dyn Landscape, points: &[Vec<f64>]) -> Result<FiniteDiffReport> {
    let errors: Vec<(f64, f64)> = points
        .par_iter()
        .map(|w| {
            if !w.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite("finite-difference point"));
            }
            let g = relative_error_vec(&l.grad(w)?, &fd_gradient(l, w)?);
            let t = relative_error(l.hessian_trace(w)?, fd_hessian_trace(l, w)?);
            Ok((g, t))
        })
        .collect::<Result<_>>()?;
    Ok(FiniteDiffReport {
        landscape: l.name().to_string(),
        n_points: points.len(),
        max_grad_rel_err: errors.iter().map(|e| e.0).fold(0.0, f64::max),
        max_trace_rel_err: errors.iter().map(|e| e.1).fold(0.0, f64::max),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
}

impl From<Moments> for McEstimate {
    fn from(m: Moments) -> Self {
        Self {
            mean: m.mean,
            stderr: m.stderr(),
            n: m.n,
        }
    }
}

const SAMPLES_PER_CHUNK: usize = 4096;

/// `E[L(w + eps)] - L(w)` for `eps ~ N(0, s^2 I)`, which for small `s` is
/// close to `s^2 / 2 * tr(Hessian L(w))`.
pub fn expected_sharpness_mc(
    l: &dyn Landscape,
    w: &[f64],
    s: f64,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::invalid(format!("sharpness radius must be positive, got {s}")));
    }
    if n_samples < 1000 {
        return Err(Error::invalid(format!(
            "expected sharpness needs at least 1000 samples, got {n_samples}"
        )));
    }
    let base = l.loss(w)?;
    let n_chunks = n_samples.div_ceil(SAMPLES_PER_CHUNK);
    let chunks: Vec<Moments> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = SeededRng::new(derive_seed(seed, "sharpness", c as u64));
            let count = SAMPLES_PER_CHUNK.min(n_samples - c * SAMPLES_PER_CHUNK);
            let mut p = vec![0.0; w.len()];
            let mut m = Moments::default();
            for _ in 0..count {
                for (pi, wi) in p.iter_mut().zip(w) {
                    *pi = wi + s * rng.normal();
                }
                m.push(l.loss(&p)? - base);
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let mut total = Moments::default();
    chunks.iter().for_each(|c| total.merge(c));
    Ok(total.into())
}

/// Largest dimension accepted by [`conditional_mean_exact`].
pub const MAX_ENUMERATION_DIM: usize = 20;

/// `E[z - eta * grad L(z + xi)]` over all `2^dim` sign patterns of
/// `xi in {-sigma, +sigma}^dim`.
pub fn conditional_mean_exact(l: &dyn Landscape, z: &[f64], eta: f64, sigma: f64) -> Result<Vec<f64>> {
    l.check_dim(z)?;
    let dim = z.len();
    if dim > MAX_ENUMERATION_DIM {
        return Err(Error::invalid(format!(
            "enumeration over 2^{dim} sign patterns exceeds the limit of 2^{MAX_ENUMERATION_DIM}"
        )));
    }
    let patterns = 1usize << dim;
    let mut sum = vec![0.0; dim];
    let mut p = vec![0.0; dim];
    for mask in 0..patterns {
        for (j, pj) in p.iter_mut().enumerate() {
            let s = if mask >> j & 1 == 1 { sigma } else { -sigma };
            *pj = z[j] + s;
        }
        crate::linalg::add_assign(&mut sum, &l.grad(&p)?);
    }
    let scale = eta / patterns as f64;
    Ok(z.iter().zip(&sum).map(|(zj, g)| zj - scale * g).collect())
}

/// Mean of `|grad L~(z_n)|^2` over the given iterates.
pub fn avg_reg_grad_sqnorm<'a, I>(l: &dyn Landscape, spec: &ModifiedLossSpec, iterates: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut m = Moments::default();
    for z in iterates {
        m.push(sqnorm(&modified_grad(l, spec, z)?));
    }
    if m.n == 0 {
        return Err(Error::invalid("empty trajectory"));
    }
    Ok(m.mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscapes::{Quadratic, WideningValley};

    fn spec(sigma2: f64) -> ModifiedLossSpec {
        ModifiedLossSpec::new(sigma2, TraceGradMethod::Analytic).unwrap()
    }

    #[test]
    fn modified_loss_values() {
        let l = WideningValley::new(2).unwrap();
        let w = [1.0, 0.0, 2.0];
        assert_eq!(modified_loss(&l, &spec(0.0), &w).unwrap(), 2.0);
        assert!((modified_loss(&l, &spec(0.1), &w).unwrap() - 2.45).abs() < 1e-14);
        let q = Quadratic::new(1, 3.0).unwrap();
        let v = modified_loss(&q, &spec(0.2), &[0.5]).unwrap();
        assert!((v - (0.5 * 3.0 * 0.25 + 0.2 * 3.0 / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn modified_grad_values() {
        let l = WideningValley::new(2).unwrap();
        let w = [1.0, 0.0, 2.0];
        assert_eq!(modified_grad(&l, &spec(0.0), &w).unwrap(), l.grad(&w).unwrap());
        let g = modified_grad(&l, &spec(0.1), &w).unwrap();
        for (a, b) in g.iter().zip([4.1, 0.0, 2.4]) {
            assert!((a - b).abs() < 1e-14);
        }
        let fd = ModifiedLossSpec::new(0.1, TraceGradMethod::FiniteDifference { rel_step: TRACE_STEP }).unwrap();
        let gf = modified_grad(&l, &fd, &[0.3, -1.2, 0.7]).unwrap();
        let ga = modified_grad(&l, &spec(0.1), &[0.3, -1.2, 0.7]).unwrap();
        assert!(relative_error_vec(&ga, &gf) < 1e-5);
    }

    #[test]
    fn invalid_specs() {
        assert!(ModifiedLossSpec::new(-1.0, TraceGradMethod::Auto).is_err());
        assert!(ModifiedLossSpec::new(1.0, TraceGradMethod::FiniteDifference { rel_step: 0.0 }).is_err());
    }

    #[test]
    fn conditional_mean_on_quadratic_is_exact() {
        let q = Quadratic::new(1, 2.0).unwrap();
        for &z in &[-1.3, 0.0, 0.4] {
            for &sigma in &[0.0, 0.1, 0.7] {
                let e = conditional_mean_exact(&q, &[z], 0.05, sigma).unwrap();
                let target = z - 0.05 * modified_grad(&q, &spec(sigma * sigma), &[z]).unwrap()[0];
                assert!((e[0] - target).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn conditional_mean_without_noise_is_gd() {
        let l = WideningValley::new(2).unwrap();
        let z = [0.3, 0.5, -0.8];
        let e = conditional_mean_exact(&l, &z, 0.1, 0.0).unwrap();
        let g = l.grad(&z).unwrap();
        for j in 0..3 {
            assert_eq!(e[j], z[j] - 0.1 * g[j]);
        }
        let big = WideningValley::new(21).unwrap();
        assert!(conditional_mean_exact(&big, &[0.0; 22], 0.1, 0.1).is_err());
    }

    #[test]
    fn sharpness_on_quadratic() {
        let q = Quadratic::new(1, 2.0).unwrap();
        let est = expected_sharpness_mc(&q, &[0.0], 0.1, 100_000, 3).unwrap();
        assert!((est.mean - 0.01).abs() < 3.0 * est.stderr);
        assert!(expected_sharpness_mc(&q, &[0.0], 0.0, 100_000, 3).is_err());
        assert!(expected_sharpness_mc(&q, &[0.0], 0.1, 10, 3).is_err());
    }

    #[test]
    fn finite_differences_on_zero_landscape() {
        let z = Quadratic::zero(3).unwrap();
        let r = finite_diff_check(&z, &[vec![1.0, 2.0, 3.0], vec![0.0; 3]]).unwrap();
        assert_eq!(r.max_grad_rel_err, 0.0);
        assert_eq!(r.max_trace_rel_err, 0.0);
    }

    #[test]
    fn avg_reg_grad_is_zero_at_minimum() {
        let q = Quadratic::new(2, 1.0).unwrap();
        let pts = [vec![0.0, 0.0], vec![0.0, 0.0]];
        let v = avg_reg_grad_sqnorm(&q, &spec(0.3), pts.iter().map(Vec::as_slice)).unwrap();
        assert_eq!(v, 0.0);
        assert!(avg_reg_grad_sqnorm(&q, &spec(0.3), std::iter::empty()).is_err());
    }
}
