//! Closed forms and Monte Carlo for the scalar-gain linear recursion
//! `w_{k+1} = rho_k w_k + eps_k`, with `eps` uncorrelated (`eps_k = xi_k`) or
//! anticorrelated (`eps_0 = xi_0`, `eps_k = xi_k - xi_{k-1}`), `xi_k` i.i.d.
//! with covariance `sigma^2 I` in `R^d`.
//!
//! Unrolling gives `w_{k+1} = P_{0..k} w_0 + sum_i c_i xi_i` where `P_{a..k}`
//! is the product `rho_a ... rho_k` (empty product is 1). In the
//! anticorrelated case `c_k = 1` and `c_i = -(1 - rho_{i+1}) P_{i+2..k}` for
//! `i < k`, hence
//!
//! `E|w_{k+1}|^2 = P_{0..k}^2 |w_0|^2 + (1 + nu_k) d sigma^2`,
//! `nu_k = sum_{i<k} (1 - rho_{i+1})^2 P_{i+2..k}^2 = rho_k^2 nu_{k-1} + (1 - rho_k)^2`, `nu_0 = 0`.
//!
//! In the uncorrelated case the noise factor is `s_k = sum_{i<=k} P_{i+1..k}^2`,
//! i.e. `s_k = rho_k^2 s_{k-1} + 1`, `s_0 = 1`. Both recursions run in
//! `O(K)` and never form long products explicitly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sqnorm;
use crate::noise::{Correlation, Distribution, NoiseSpec, NoiseStream, SeededRng};
use crate::seed::derive_seed;
use crate::stats::Moments;

fn check_const_rho(rho: f64) -> Result<()> {
    if (0.0..1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::invalid(format!("constant rho must lie in [0, 1), got {rho}")))
    }
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if sigma2 >= 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("sigma^2 must be finite and >= 0, got {sigma2}")))
    }
}

/// `E|w_{k+1}|^2` for constant `rho`:
///
/// * anticorrelated: `rho^{2(k+1)} |w_0|^2 + (1 + (1-rho)^2 (1 - rho^{2k}) / (1 - rho^2)) d sigma^2`
/// * uncorrelated: `rho^{2(k+1)} |w_0|^2 + (1 - rho^{2(k+1)}) / (1 - rho^2) d sigma^2`
pub fn expected_sqnorm_const_rho(
    rho: f64,
    k: usize,
    w0_sqnorm: f64,
    d: usize,
    sigma2: f64,
    mode: Correlation,
) -> Result<f64> {
    check_const_rho(rho)?;
    check_sigma2(sigma2)?;
    let r2 = rho * rho;
    let noise = d as f64 * sigma2;
    let decay = r2.powf(k as f64 + 1.0);
    let factor = match mode {
        Correlation::Anticorrelated => {
            1.0 + (1.0 - rho).powi(2) * (1.0 - r2.powf(k as f64)) / (1.0 - r2)
        }
        Correlation::Uncorrelated => (1.0 - decay) / (1.0 - r2),
    };
    Ok(decay * w0_sqnorm + factor * noise)
}

/// `2 d sigma^2 / (1 + rho)` (anticorrelated) or `d sigma^2 / (1 - rho^2)`.
pub fn limit_const_rho(rho: f64, d: usize, sigma2: f64, mode: Correlation) -> Result<f64> {
    check_const_rho(rho)?;
    check_sigma2(sigma2)?;
    let noise = d as f64 * sigma2;
    Ok(match mode {
        Correlation::Anticorrelated => 2.0 * noise / (1.0 + rho),
        Correlation::Uncorrelated => noise / (1.0 - rho * rho),
    })
}

/// Entry `k` is `E|w_{k+1}|^2` for the gains `rho_seq[0..=k]`.
pub fn expected_sqnorm_sequence(
    rho_seq: &[f64],
    w0_sqnorm: f64,
    d: usize,
    sigma2: f64,
    mode: Correlation,
) -> Result<Vec<f64>> {
    if rho_seq.is_empty() {
        return Err(Error::invalid("rho sequence is empty"));
    }
    if let Some(r) = rho_seq.iter().find(|r| !r.is_finite()) {
        return Err(Error::invalid(format!("rho sequence contains {r}")));
    }
    check_sigma2(sigma2)?;
    let noise = d as f64 * sigma2;
    let mut contraction = 1.0;
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(rho_seq.len());
    for (k, &rho) in rho_seq.iter().enumerate() {
        let r2 = rho * rho;
        contraction *= r2;
        let factor = match mode {
            Correlation::Anticorrelated => {
                if k > 0 {
                    acc = r2 * acc + (1.0 - rho) * (1.0 - rho);
                }
                1.0 + acc
            }
            Correlation::Uncorrelated => {
                acc = if k == 0 { 1.0 } else { r2 * acc + 1.0 };
                acc
            }
        };
        out.push(contraction * w0_sqnorm + factor * noise);
    }
    Ok(out)
}

/// `nu_0 = 0`, `nu_k = rho_k^2 nu_{k-1} + (1 - rho_k)^2`. Stays in `[0, 1]`
/// whenever every `rho_k` does.
pub fn nu_sequence(rho_seq: &[f64]) -> Result<Vec<f64>> {
    if let Some(r) = rho_seq.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::invalid(format!("rho must lie in [0, 1], got {r}")));
    }
    Ok(nu_recursion(rho_seq, |rho| (1.0 - rho) * (1.0 - rho)))
}

/// The `nu` recursion with a caller-supplied increment term, used to check
/// that the bound test notices a corrupted recursion.
pub fn nu_recursion(rho_seq: &[f64], increment: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut nu = 0.0;
    rho_seq
        .iter()
        .enumerate()
        .map(|(k, &rho)| {
            if k > 0 {
                nu = rho * rho * nu + increment(rho);
            }
            nu
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoSpec {
    Constant(f64),
    Sequence(Vec<f64>),
    /// `rho_k` drawn uniformly on `[lo, hi]` at every step of every path.
    Stochastic { lo: f64, hi: f64 },
}

impl RhoSpec {
    fn validate(&self, horizon: usize) -> Result<()> {
        match self {
            RhoSpec::Constant(r) if !r.is_finite() => {
                Err(Error::invalid(format!("rho must be finite, got {r}")))
            }
            RhoSpec::Sequence(s) if s.len() < horizon => Err(Error::invalid(format!(
                "rho sequence has {} entries, horizon is {horizon}",
                s.len()
            ))),
            RhoSpec::Sequence(s) if s.iter().any(|r| !r.is_finite()) => {
                Err(Error::invalid("rho sequence contains non-finite values"))
            }
            RhoSpec::Stochastic { lo, hi } if !(0.0 <= *lo && lo <= hi && *hi <= 1.0) => Err(
                Error::invalid(format!("stochastic rho range [{lo}, {hi}] must lie in [0, 1]")),
            ),
            _ => Ok(()),
        }
    }

    /// Closed-form `E|w_k|^2` for `k = 0..=horizon`, when one exists.
    pub fn closed_form(
        &self,
        horizon: usize,
        w0_sqnorm: f64,
        d: usize,
        sigma2: f64,
        mode: Correlation,
    ) -> Result<Option<Vec<f64>>> {
        let seq = match self {
            RhoSpec::Constant(r) => vec![*r; horizon],
            RhoSpec::Sequence(s) => s[..horizon.min(s.len())].to_vec(),
            RhoSpec::Stochastic { .. } => return Ok(None),
        };
        let mut out = vec![w0_sqnorm];
        if horizon > 0 {
            out.extend(expected_sqnorm_sequence(&seq, w0_sqnorm, d, sigma2, mode)?);
        }
        Ok(Some(out))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecursionSim {
    pub rho: RhoSpec,
    pub correlation: Correlation,
    pub distribution: Distribution,
    pub d: usize,
    pub sigma: f64,
    /// Starting point; zero when empty.
    #[serde(default)]
    pub w0: Vec<f64>,
    pub n_samples: usize,
    pub horizon: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecursionEstimate {
    /// Monte Carlo mean of `|w_k|^2`, `k = 0..=horizon`.
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

const PATHS_PER_CHUNK: usize = 64;

/// Each path owns streams seeded from `(seed, path index)`, so the estimate
/// does not depend on the number of worker threads.
pub fn simulate_recursion(sim: &RecursionSim) -> Result<RecursionEstimate> {
    if sim.n_samples < 100 {
        return Err(Error::invalid(format!(
            "recursion simulation needs at least 100 samples, got {}",
            sim.n_samples
        )));
    }
    if sim.d == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    if !sim.w0.is_empty() && sim.w0.len() != sim.d {
        return Err(Error::DimensionMismatch {
            expected: sim.d,
            got: sim.w0.len(),
        });
    }
    sim.rho.validate(sim.horizon)?;
    NoiseSpec::new(sim.distribution, sim.sigma, sim.correlation, sim.d, 0).validate()?;

    let n_chunks = sim.n_samples.div_ceil(PATHS_PER_CHUNK);
    let chunks: Vec<Vec<Moments>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * PATHS_PER_CHUNK;
            let hi = (lo + PATHS_PER_CHUNK).min(sim.n_samples);
            let mut acc = vec![Moments::default(); sim.horizon + 1];
            let mut path = vec![0.0; sim.horizon + 1];
            for i in lo..hi {
                simulate_path(sim, i as u64, &mut path);
                for (m, &x) in acc.iter_mut().zip(&path) {
                    m.push(x);
                }
            }
            acc
        })
        .collect();

    let mut total = vec![Moments::default(); sim.horizon + 1];
    for chunk in &chunks {
        for (t, c) in total.iter_mut().zip(chunk) {
            t.merge(c);
        }
    }
    Ok(RecursionEstimate {
        mean: total.iter().map(|m| m.mean).collect(),
        stderr: total.iter().map(Moments::stderr).collect(),
    })
}

fn simulate_path(sim: &RecursionSim, index: u64, out: &mut [f64]) {
    let spec = NoiseSpec::new(
        sim.distribution,
        sim.sigma,
        sim.correlation,
        sim.d,
        derive_seed(sim.seed, "recursion_noise", index),
    );
    let mut stream = NoiseStream::new(spec).expect("validated noise spec");
    let mut rho_rng = SeededRng::new(derive_seed(sim.seed, "recursion_rho", index));
    let mut w = if sim.w0.is_empty() {
        vec![0.0; sim.d]
    } else {
        sim.w0.clone()
    };
    let mut eps = vec![0.0; sim.d];
    out[0] = sqnorm(&w);
    for k in 0..sim.horizon {
        let rho = match &sim.rho {
            RhoSpec::Constant(r) => *r,
            RhoSpec::Sequence(s) => s[k],
            RhoSpec::Stochastic { lo, hi } => rho_rng.uniform_in(*lo, *hi),
        };
        stream.next_perturbation_into(&mut eps);
        for (x, e) in w.iter_mut().zip(&eps) {
            *x = rho * *x + e;
        }
        out[k + 1] = sqnorm(&w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ANTI: Correlation = Correlation::Anticorrelated;
    const UNC: Correlation = Correlation::Uncorrelated;

    #[test]
    fn noiseless_contraction() {
        for mode in [ANTI, UNC] {
            let v = expected_sqnorm_const_rho(0.7, 3, 2.0, 5, 0.0, mode).unwrap();
            assert!((v - 0.7f64.powi(8) * 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rho_zero_anticorrelated_is_two_d_sigma2() {
        for k in 1..6 {
            let v = expected_sqnorm_const_rho(0.0, k, 0.0, 3, 0.5, ANTI).unwrap();
            assert!((v - 3.0).abs() < 1e-15);
        }
        // First step only sees xi_0.
        assert_eq!(expected_sqnorm_const_rho(0.0, 0, 0.0, 3, 0.5, ANTI).unwrap(), 1.5);
        assert_eq!(limit_const_rho(0.0, 3, 0.5, ANTI).unwrap(), 3.0);
    }

    #[test]
    fn uncorrelated_limit_value() {
        let v = expected_sqnorm_const_rho(0.5, 200, 0.0, 1, 1.0, UNC).unwrap();
        assert!((v - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn limits() {
        assert!((limit_const_rho(0.9, 50, 0.01, ANTI).unwrap() - 0.526_315_789_473_684_2).abs() < 1e-12);
        assert!((limit_const_rho(0.9, 50, 0.01, UNC).unwrap() - 2.631_578_947_368_421).abs() < 1e-12);
        for rho in [0.1, 0.5, 0.9] {
            let (lo, hi) = (rho - 0.05, rho + 0.05);
            assert!(limit_const_rho(hi, 10, 1.0, ANTI).unwrap() < limit_const_rho(lo, 10, 1.0, ANTI).unwrap());
            assert!(limit_const_rho(hi, 10, 1.0, UNC).unwrap() > limit_const_rho(lo, 10, 1.0, UNC).unwrap());
        }
        assert!(limit_const_rho(1.0, 1, 1.0, ANTI).is_err());
        assert!(expected_sqnorm_const_rho(-0.1, 1, 1.0, 1, 1.0, UNC).is_err());
    }

    #[test]
    fn monotone_limits_on_grid() {
        let grid: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        for w in grid.windows(2) {
            assert!(limit_const_rho(w[1], 4, 0.3, ANTI).unwrap() < limit_const_rho(w[0], 4, 0.3, ANTI).unwrap());
            assert!(limit_const_rho(w[1], 4, 0.3, UNC).unwrap() > limit_const_rho(w[0], 4, 0.3, UNC).unwrap());
        }
    }

    #[test]
    fn sequence_specializes_to_constant() {
        for mode in [ANTI, UNC] {
            for rho in [0.0, 0.3, 0.9, 0.999] {
                let seq = expected_sqnorm_sequence(&vec![rho; 300], 1.7, 4, 0.02, mode).unwrap();
                for (k, v) in seq.iter().enumerate() {
                    let c = expected_sqnorm_const_rho(rho, k, 1.7, 4, 0.02, mode).unwrap();
                    assert!((v - c).abs() <= 1e-12 * c.abs(), "rho={rho} k={k}: {v} vs {c}");
                }
            }
        }
    }

    #[test]
    fn unit_gains_anticorrelated() {
        let seq = expected_sqnorm_sequence(&[1.0; 50], 2.0, 3, 0.1, ANTI).unwrap();
        assert!(seq.iter().all(|v| (v - 2.3).abs() < 1e-12));
        assert!(expected_sqnorm_sequence(&[], 1.0, 1, 1.0, ANTI).is_err());
    }

    #[test]
    fn nu_edge_cases() {
        assert!(nu_sequence(&[1.0; 20]).unwrap().iter().all(|&v| v == 0.0));
        let zeros = nu_sequence(&[0.0; 20]).unwrap();
        assert_eq!(zeros[0], 0.0);
        assert!(zeros[1..].iter().all(|&v| v == 1.0));
        assert!(nu_sequence(&[0.5, 1.2]).is_err());
        let corrupted = nu_recursion(&[0.0; 5], |r| (1.0 + r) * (1.0 + r));
        assert_eq!(corrupted[1], 1.0);
        let corrupted = nu_recursion(&[0.5; 5], |r| (1.0 + r) * (1.0 + r));
        assert!(corrupted[4] > 1.0);
    }

    /// The variation-of-constants sum equals the iterated recursion for a
    /// concrete realization.
    #[test]
    fn variation_of_constants_matches_iteration() {
        let rho = [0.3, 0.8, -0.5, 1.1];
        let xi = [[0.2, -1.0], [0.5, 0.4], [-0.3, 0.9], [1.5, -0.7]];
        let w0 = [1.0, -2.0];
        let mut eps = xi;
        for k in (1..4).rev() {
            for j in 0..2 {
                eps[k][j] = xi[k][j] - xi[k - 1][j];
            }
        }
        let mut w = w0;
        for k in 0..4 {
            for j in 0..2 {
                w[j] = rho[k] * w[j] + eps[k][j];
            }
        }
        let prod = |a: usize, b: usize| (a..=b).map(|j| rho[j]).product::<f64>();
        for j in 0..2 {
            let mut explicit = prod(0, 3) * w0[j];
            for (i, e) in eps.iter().enumerate() {
                explicit += if i < 3 { prod(i + 1, 3) } else { 1.0 } * e[j];
            }
            assert!((explicit - w[j]).abs() < 1e-14);
            // Same sum regrouped in the raw draws.
            let mut regrouped = prod(0, 3) * w0[j] + xi[3][j];
            for i in 0..3 {
                let tail = if i + 2 <= 3 { prod(i + 2, 3) } else { 1.0 };
                regrouped -= (1.0 - rho[i + 1]) * tail * xi[i][j];
            }
            assert!((regrouped - w[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_noise_simulation_is_deterministic_decay() {
        let sim = RecursionSim {
            rho: RhoSpec::Constant(0.5),
            correlation: ANTI,
            distribution: Distribution::Gaussian,
            d: 2,
            sigma: 0.0,
            w0: vec![1.0, 1.0],
            n_samples: 100,
            horizon: 5,
            seed: 1,
        };
        let est = simulate_recursion(&sim).unwrap();
        for k in 0..=5 {
            assert_eq!(est.mean[k], 2.0 * 0.25f64.powi(k as i32));
            assert_eq!(est.stderr[k], 0.0);
        }
    }

    #[test]
    fn sequence_simulation_agrees_with_closed_form() {
        let mut rng = SeededRng::new(5);
        let seq: Vec<f64> = (0..40).map(|_| rng.uniform_in(0.0, 1.2)).collect();
        for mode in [ANTI, UNC] {
            let sim = RecursionSim {
                rho: RhoSpec::Sequence(seq.clone()),
                correlation: mode,
                distribution: Distribution::SymmetricBernoulli,
                d: 4,
                sigma: 0.3,
                w0: vec![0.5, 0.0, -0.5, 1.0],
                n_samples: 4000,
                horizon: 40,
                seed: 11,
            };
            let est = simulate_recursion(&sim).unwrap();
            let cf = sim.rho.closed_form(40, 1.5, 4, 0.09, mode).unwrap().unwrap();
            for k in [1, 10, 25, 40] {
                let z = (est.mean[k] - cf[k]).abs() / est.stderr[k].max(1e-12);
                assert!(z < 4.0, "{mode:?} k={k}: mc {} vs {} (z = {z})", est.mean[k], cf[k]);
            }
        }
    }

    #[test]
    fn simulation_rejects_bad_input() {
        let base = RecursionSim {
            rho: RhoSpec::Stochastic { lo: 0.0, hi: 1.0 },
            correlation: ANTI,
            distribution: Distribution::Gaussian,
            d: 3,
            sigma: 0.1,
            w0: vec![],
            n_samples: 100,
            horizon: 10,
            seed: 0,
        };
        assert!(simulate_recursion(&RecursionSim { n_samples: 99, ..base.clone() }).is_err());
        assert!(simulate_recursion(&RecursionSim {
            rho: RhoSpec::Stochastic { lo: 0.5, hi: 1.5 },
            ..base.clone()
        })
        .is_err());
        assert!(simulate_recursion(&RecursionSim {
            rho: RhoSpec::Sequence(vec![0.5; 3]),
            ..base.clone()
        })
        .is_err());
        assert!(simulate_recursion(&base).is_ok());
    }

    proptest! {
        #[test]
        fn nu_stays_in_unit_interval(seq in prop::collection::vec(0.0f64..=1.0, 1..200)) {
            let nu = nu_sequence(&seq).unwrap();
            prop_assert!(nu.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }

        #[test]
        fn closed_forms_are_nonnegative(rho in 0.0f64..0.999, k in 0usize..500, w0 in 0.0f64..10.0, s2 in 0.0f64..1.0) {
            for mode in [ANTI, UNC] {
                prop_assert!(expected_sqnorm_const_rho(rho, k, w0, 7, s2, mode).unwrap() >= 0.0);
            }
        }
    }
}
