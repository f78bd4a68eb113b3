//! Seeded perturbation streams.
//!
//! Every random quantity in the crate comes from [`SeededRng`], a thin wrapper
//! around xoshiro256++ seeded through SplitMix64 (`Xoshiro256PlusPlus::seed_from_u64`).
//! The transforms on top of the raw 64-bit outputs are fixed:
//!
//! * uniform `[0, 1)`: `(x >> 11) * 2^-53`
//! * symmetric sign: the most significant bit of one output (`1` means `-1`)
//! * standard normal: Marsaglia's polar method on two uniforms mapped to
//!   `[-1, 1)`, returning the first variate and caching the second
//! * bounded integer `[0, n)`: `(x * n) >> 64` on 128-bit integers
//!
//! so a stream is reproducible from `(seed, distribution, dim)` alone.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TWO_POW_MINUS_53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Clone, Debug)]
pub struct SeededRng {
    inner: Xoshiro256PlusPlus,
    spare_normal: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_MINUS_53
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn sign(&mut self) -> f64 {
        if self.next_u64() >> 63 == 1 {
            -1.0
        } else {
            1.0
        }
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare_normal = Some(v * f);
                return u * f;
            }
        }
    }

    pub fn below(&mut self, n: usize) -> usize {
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    /// Fisher-Yates, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Uniformly distributed direction on the unit sphere in `dim` dimensions.
    pub fn unit_vector(&mut self, dim: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| self.normal()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    /// Each coordinate is `-sigma` or `+sigma` with probability 1/2.
    SymmetricBernoulli,
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correlation {
    Uncorrelated,
    Anticorrelated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub distribution: Distribution,
    /// Per-coordinate standard deviation of one raw draw.
    pub sigma: f64,
    pub correlation: Correlation,
    pub dim: usize,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(
        distribution: Distribution,
        sigma: f64,
        correlation: Correlation,
        dim: usize,
        seed: u64,
    ) -> Self {
        Self {
            distribution,
            sigma,
            correlation,
            dim,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::invalid(format!(
                "noise sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        if self.dim == 0 {
            return Err(Error::invalid("noise dimension must be positive"));
        }
        Ok(())
    }

    /// Per-coordinate variance of one emitted perturbation in steady state.
    pub fn perturbation_variance(&self) -> f64 {
        let s2 = self.sigma * self.sigma;
        match self.correlation {
            Correlation::Uncorrelated => s2,
            Correlation::Anticorrelated => 2.0 * s2,
        }
    }
}

/// Stateful generator of perturbations.
///
/// In anticorrelated mode the emitted sequence is `eps_0 = xi_0` and
/// `eps_n = xi_n - xi_{n-1}`, so partial sums telescope to the latest raw
/// draw. Calling [`NoiseStream::prime`] first consumes `xi_0` without emitting
/// it; the first emitted perturbation is then `xi_1 - xi_0`, which is the
/// form used by the anticorrelated optimizers.
#[derive(Clone, Debug)]
pub struct NoiseStream {
    spec: NoiseSpec,
    step: u64,
    last_xi: Option<Vec<f64>>,
    reversed: bool,
    rng: SeededRng,
}

impl NoiseStream {
    pub fn new(spec: NoiseSpec) -> Result<Self> {
        spec.validate()?;
        let rng = SeededRng::new(spec.seed);
        Ok(Self {
            spec,
            step: 0,
            last_xi: None,
            reversed: false,
            rng,
        })
    }

    /// Emit `xi_{n-1} - xi_n` instead of `xi_n - xi_{n-1}` in anticorrelated mode.
    pub fn with_reversed_increments(mut self) -> Self {
        self.reversed = true;
        self
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    /// Number of raw draws taken so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn last_xi(&self) -> Option<&[f64]> {
        self.last_xi.as_deref()
    }

    fn draw_into(&mut self, out: &mut [f64]) {
        let sigma = self.spec.sigma;
        match self.spec.distribution {
            Distribution::SymmetricBernoulli => {
                for x in out.iter_mut() {
                    *x = sigma * self.rng.sign();
                }
            }
            Distribution::Gaussian => {
                for x in out.iter_mut() {
                    *x = sigma * self.rng.normal();
                }
            }
        }
        self.step += 1;
    }

    /// Raw i.i.d. draw `xi_n`; advances the step counter.
    pub fn next_xi(&mut self) -> Vec<f64> {
        let mut xi = vec![0.0; self.spec.dim];
        self.draw_into(&mut xi);
        self.last_xi = Some(xi.clone());
        xi
    }

    /// Draw `xi_0` without emitting a perturbation and return it.
    pub fn prime(&mut self) -> Vec<f64> {
        self.next_xi()
    }

    /// Perturbation that cancels the running sum of anticorrelated increments,
    /// i.e. the increment towards `xi = 0`. Clears the retained draw, so the
    /// next episode starts from scratch. `None` when nothing is retained.
    pub fn retract(&mut self) -> Option<Vec<f64>> {
        let xi = self.last_xi.take()?;
        Some(if self.reversed {
            xi
        } else {
            xi.into_iter().map(|x| -x).collect()
        })
    }

    pub fn next_perturbation(&mut self) -> Vec<f64> {
        let mut out = vec![0.0; self.spec.dim];
        self.next_perturbation_into(&mut out);
        out
    }

    pub fn next_perturbation_into(&mut self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.spec.dim);
        match self.spec.correlation {
            Correlation::Uncorrelated => {
                self.draw_into(out);
                // Keep `last_xi` meaningful without an allocation per step.
                match &mut self.last_xi {
                    Some(prev) => prev.copy_from_slice(out),
                    None => self.last_xi = Some(out.to_vec()),
                }
            }
            Correlation::Anticorrelated => {
                let prev = self.last_xi.take();
                self.draw_into(out);
                match prev {
                    Some(mut prev) => {
                        for (o, p) in out.iter_mut().zip(prev.iter_mut()) {
                            let fresh = *o;
                            *o = if self.reversed { *p - fresh } else { fresh - *p };
                            *p = fresh;
                        }
                        self.last_xi = Some(prev);
                    }
                    None => {
                        self.last_xi = Some(out.to_vec());
                        if self.reversed {
                            out.iter_mut().for_each(|x| *x = -*x);
                        }
                    }
                }
            }
        }
    }
}

/// Monte Carlo estimate of `E[eps_{n+1} . eps_n] / (dim * Var(eps))`, where
/// `Var(eps)` is the per-coordinate variance of one emitted perturbation.
pub fn lag1_autocorrelation(spec: &NoiseSpec, n_samples: usize) -> Result<f64> {
    const MIN_SAMPLES: usize = 1_000;
    if n_samples < MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "lag-1 autocorrelation needs at least {MIN_SAMPLES} samples, got {n_samples}"
        )));
    }
    if spec.sigma <= 0.0 {
        return Err(Error::invalid("lag-1 autocorrelation needs sigma > 0"));
    }
    let mut stream = NoiseStream::new(spec.clone())?;
    let mut prev = stream.next_perturbation();
    let mut cur = vec![0.0; spec.dim];
    let mut acc = 0.0;
    for _ in 0..n_samples {
        stream.next_perturbation_into(&mut cur);
        acc += crate::linalg::dot(&cur, &prev);
        std::mem::swap(&mut cur, &mut prev);
    }
    let mean = acc / n_samples as f64;
    Ok(mean / (spec.dim as f64 * spec.perturbation_variance()))
}
