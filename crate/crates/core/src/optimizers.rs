//! Gradient descent with parameter or label perturbations, and the run loop.
//!
//! * GD: `w <- w - eta grad L(w)`
//! * PGD: `w <- w - eta grad L(w) + xi_{n+1}`
//! * Anti-PGD: `w <- w - eta grad L(w) + (xi_{n+1} - xi_n)`
//! * SGD / Anti-SGD: the same with a mini-batch gradient
//! * label-noise GD: `w <- w - eta (grad L(w) + xi_{n+1} sum_i grad f_w(x_i))`
//!   with one scalar `xi_{n+1}` per step
//!
//! With `z_n = w_n - xi_n`, Anti-PGD is `z <- z - eta grad L(z + xi_n)`.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{modified_grad, ModifiedLossSpec, TraceGradMethod};
use crate::error::{Error, Result};
use crate::landscapes::Landscape;
use crate::linalg::{all_finite, axpy, sqnorm, sub};
use crate::noise::{Correlation, Distribution, NoiseSpec, NoiseStream, SeededRng};
use crate::seed::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Gd,
    Pgd,
    AntiPgd,
    Sgd,
    AntiSgd,
    LabelNoiseGd,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Gd,
        Variant::Pgd,
        Variant::AntiPgd,
        Variant::Sgd,
        Variant::AntiSgd,
        Variant::LabelNoiseGd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Gd => "gd",
            Variant::Pgd => "pgd",
            Variant::AntiPgd => "anti_pgd",
            Variant::Sgd => "sgd",
            Variant::AntiSgd => "anti_sgd",
            Variant::LabelNoiseGd => "label_noise_gd",
        }
    }

    /// Correlation of the parameter perturbation, if any.
    pub fn perturbation(self) -> Option<Correlation> {
        match self {
            Variant::Pgd => Some(Correlation::Uncorrelated),
            Variant::AntiPgd | Variant::AntiSgd => Some(Correlation::Anticorrelated),
            _ => None,
        }
    }

    pub fn is_stochastic_gradient(self) -> bool {
        matches!(self, Variant::Sgd | Variant::AntiSgd)
    }

    fn noise_dim(self, dim: usize) -> usize {
        if self == Variant::LabelNoiseGd {
            1
        } else {
            dim
        }
    }

    fn stream_correlation(self) -> Correlation {
        self.perturbation().unwrap_or(Correlation::Uncorrelated)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Noise is applied at steps `n` with `start_step <= n < stop_step`
/// (`stop_step` absent means until the end).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    #[serde(default)]
    pub start_step: usize,
    #[serde(default)]
    pub stop_step: Option<usize>,
}

impl NoiseSchedule {
    pub fn active(&self, n: usize) -> bool {
        n >= self.start_step && self.stop_step.map_or(true, |s| n < s)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Batch {
    #[default]
    FullBatch,
    MiniBatch { size: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    /// `scale * N(0, I)`.
    Gaussian { scale: f64 },
    Constant { value: f64 },
    Given { point: Vec<f64> },
    /// Valley start `(u_0, 0)` with `u_0` uniform on the sphere of squared
    /// radius `u_sqnorm`.
    ValleyRing { u_sqnorm: f64 },
}

impl Default for InitPolicy {
    fn default() -> Self {
        InitPolicy::Gaussian { scale: 1.0 }
    }
}

impl InitPolicy {
    pub fn point(&self, dim: usize, seed: u64) -> Result<Vec<f64>> {
        let mut rng = SeededRng::new(seed);
        let w = match self {
            InitPolicy::Gaussian { scale } => (0..dim).map(|_| scale * rng.normal()).collect(),
            InitPolicy::Constant { value } => vec![*value; dim],
            InitPolicy::Given { point } => {
                if point.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: point.len(),
                    });
                }
                point.clone()
            }
            InitPolicy::ValleyRing { u_sqnorm } => {
                if dim < 2 || !(*u_sqnorm >= 0.0) {
                    return Err(Error::invalid("valley start needs dim >= 2 and u_sqnorm >= 0"));
                }
                let r = u_sqnorm.sqrt();
                let mut w: Vec<f64> = rng.unit_vector(dim - 1).iter().map(|x| r * x).collect();
                w.push(0.0);
                w
            }
        };
        if !all_finite(&w) {
            return Err(Error::NonFinite("initial point"));
        }
        Ok(w)
    }
}

/// How the first anticorrelated perturbation is formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AntiStart {
    /// Draw `xi_0` when noise first becomes active; the first applied
    /// perturbation is `xi_1 - xi_0`.
    #[default]
    FreshIncrement,
    /// Apply `xi_0` itself first, then `xi_1 - xi_0`, ...
    RawFirst,
}

/// What an anticorrelated run does with the last raw draw when noise stops.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AntiStop {
    /// The last applied increment is `0 - xi_n`: the raw noise is switched
    /// off and the iterate returns to `z_n = w_n - xi_n`.
    #[default]
    Retract,
    /// Stop adding increments; `xi_n` stays in the iterate.
    Freeze,
}

fn default_record_every() -> usize {
    1
}

fn default_true() -> bool {
    true
}

fn default_divergence_threshold() -> f64 {
    1e12
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub name: String,
    pub variant: Variant,
    pub eta: f64,
    pub steps: usize,
    #[serde(default = "default_distribution")]
    pub distribution: Distribution,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub schedule: NoiseSchedule,
    #[serde(default)]
    pub batch: Batch,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub init: InitPolicy,
    #[serde(default)]
    pub anti_start: AntiStart,
    #[serde(default)]
    pub anti_stop: AntiStop,
    /// Use `xi_n - xi_{n+1}` as the anticorrelated increment.
    #[serde(default)]
    pub reversed_increments: bool,
    #[serde(default = "default_true")]
    pub record_trace: bool,
    /// Record `|grad L~|^2` with `sigma^2` from this config.
    #[serde(default)]
    pub record_reg_grad: bool,
    /// Keep a copy of the parameters at every recorded step.
    #[serde(default)]
    pub record_params: bool,
    #[serde(default = "default_divergence_threshold")]
    pub divergence_threshold: f64,
    /// Seed of the initial point; derived from the run seed when absent.
    #[serde(default)]
    pub init_seed: Option<u64>,
}

fn default_distribution() -> Distribution {
    Distribution::Gaussian
}

impl RunConfig {
    pub fn new(name: impl Into<String>, variant: Variant, eta: f64, steps: usize) -> Self {
        Self {
            name: name.into(),
            variant,
            eta,
            steps,
            distribution: Distribution::Gaussian,
            sigma: 0.0,
            schedule: NoiseSchedule::default(),
            batch: Batch::FullBatch,
            record_every: 1,
            init: InitPolicy::default(),
            anti_start: AntiStart::FreshIncrement,
            anti_stop: AntiStop::Retract,
            reversed_increments: false,
            record_trace: true,
            record_reg_grad: false,
            record_params: false,
            divergence_threshold: default_divergence_threshold(),
            init_seed: None,
        }
    }

    pub fn with_noise(mut self, distribution: Distribution, sigma: f64) -> Self {
        self.distribution = distribution;
        self.sigma = sigma;
        self
    }

    pub fn validate(&self, landscape: &dyn Landscape) -> Result<()> {
        let fail = |msg: String| Err(Error::invalid(format!("config `{}`: {msg}", self.name)));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return fail(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return fail(format!("sigma must be >= 0, got {}", self.sigma));
        }
        if self.record_every == 0 {
            return fail("record_every must be positive".into());
        }
        let stop = self.schedule.stop_step.unwrap_or(self.steps);
        if !(self.schedule.start_step <= stop && stop <= self.steps) {
            return fail(format!(
                "noise schedule [{}, {stop}) must satisfy 0 <= start <= stop <= steps = {}",
                self.schedule.start_step, self.steps
            ));
        }
        if let Batch::MiniBatch { size } = self.batch {
            if size == 0 || size > landscape.n_examples() {
                return fail(format!(
                    "mini-batch size {size} must lie in [1, {}]",
                    landscape.n_examples()
                ));
            }
        }
        let caps = landscape.capabilities();
        if self.variant.is_stochastic_gradient() && !caps.has_per_example {
            return fail(format!("{} needs per-example gradients", self.variant));
        }
        if self.variant == Variant::LabelNoiseGd && !caps.has_model_outputs {
            return fail(format!("{} needs model outputs", self.variant));
        }
        if !(self.divergence_threshold > 0.0) {
            return fail("divergence_threshold must be positive".into());
        }
        Ok(())
    }

    pub fn noise_active(&self, n: usize) -> bool {
        self.schedule.active(n) && self.sigma > 0.0
    }
}

/// One update. `batch` is required for the mini-batch variants and ignored
/// otherwise. Returns `NonFinite` when the gradient or the new iterate
/// overflows.
pub fn step(
    variant: Variant,
    landscape: &dyn Landscape,
    w: &[f64],
    stream: &mut NoiseStream,
    eta: f64,
    noise_active: bool,
    batch: Option<&[usize]>,
) -> Result<Vec<f64>> {
    if variant == Variant::LabelNoiseGd {
        return label_noise_step(landscape, w, stream, eta, noise_active);
    }
    let g = if variant.is_stochastic_gradient() {
        let batch = batch.ok_or_else(|| Error::invalid(format!("{variant} step needs a batch")))?;
        landscape.per_example_grad(w, batch)?
    } else {
        landscape.grad(w)?
    };
    if !all_finite(&g) {
        return Err(Error::NonFinite("gradient"));
    }
    let mut next = w.to_vec();
    axpy(&mut next, -eta, &g);
    if let Some(corr) = variant.perturbation() {
        if noise_active && stream.spec().sigma > 0.0 {
            if stream.spec().correlation != corr {
                return Err(Error::invalid(format!(
                    "{variant} needs a {corr:?} noise stream"
                )));
            }
            let eps = stream.next_perturbation();
            crate::linalg::add_assign(&mut next, &eps);
        }
    }
    if !all_finite(&next) {
        return Err(Error::NonFinite("iterate"));
    }
    Ok(next)
}

/// `z - eta * grad L(z + xi)`
pub fn step_zform(landscape: &dyn Landscape, z: &[f64], xi: &[f64], eta: f64) -> Result<Vec<f64>> {
    landscape.check_dim(xi)?;
    let shifted = crate::linalg::add(z, xi);
    let g = landscape.grad(&shifted)?;
    if !all_finite(&g) {
        return Err(Error::NonFinite("gradient"));
    }
    let mut next = z.to_vec();
    axpy(&mut next, -eta, &g);
    Ok(next)
}

/// Gradient step on the label-noised loss, with a scalar draw from `stream`
/// (which must have dimension 1).
pub fn label_noise_step(
    landscape: &dyn Landscape,
    w: &[f64],
    stream: &mut NoiseStream,
    eta: f64,
    noise_active: bool,
) -> Result<Vec<f64>> {
    if !landscape.capabilities().has_model_outputs {
        return Err(landscape.unsupported("label_noise_step"));
    }
    let mut g = landscape.grad(w)?;
    if noise_active && stream.spec().sigma > 0.0 {
        if stream.spec().dim != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: stream.spec().dim,
            });
        }
        let xi = stream.next_xi()[0];
        axpy(&mut g, xi, &landscape.output_grad_sum(w)?);
    }
    if !all_finite(&g) {
        return Err(Error::NonFinite("gradient"));
    }
    let mut next = w.to_vec();
    axpy(&mut next, -eta, &g);
    Ok(next)
}

/// Shuffle-per-epoch sampling without replacement. The last batch of an
/// epoch holds the remainder when the batch size does not divide `n`.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    size: usize,
    rng: SeededRng,
}

impl BatchSampler {
    pub fn new(n: usize, size: usize, seed: u64) -> Result<Self> {
        if size == 0 || size > n {
            return Err(Error::invalid(format!("batch size {size} must lie in [1, {n}]")));
        }
        let mut s = Self {
            order: (0..n).collect(),
            pos: 0,
            size,
            rng: SeededRng::new(seed),
        };
        s.rng.shuffle(&mut s.order);
        Ok(s)
    }

    pub fn next_batch(&mut self) -> &[usize] {
        if self.pos >= self.order.len() {
            self.rng.shuffle(&mut self.order);
            self.pos = 0;
        }
        let lo = self.pos;
        self.pos = (lo + self.size).min(self.order.len());
        &self.order[lo..self.pos]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub step: usize,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
    pub hessian_trace: Option<f64>,
    pub u_sqnorm: Option<f64>,
    pub reg_grad_sqnorm: Option<f64>,
}

impl Row {
    fn finite(&self) -> bool {
        self.train_loss.is_finite()
            && [self.test_loss, self.hessian_trace, self.u_sqnorm, self.reg_grad_sqnorm]
                .iter()
                .flatten()
                .all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub rows: Vec<Row>,
    /// Step at which the run was stopped for divergence.
    pub diverged_at: Option<usize>,
    /// Last finite iterate.
    pub final_point: Vec<f64>,
    /// `(step, parameters)` at recorded steps when requested.
    pub snapshots: Vec<(usize, Vec<f64>)>,
}

impl Trajectory {
    pub fn last(&self) -> &Row {
        self.rows.last().expect("trajectory has at least the initial row")
    }
}

/// Seeds of the independent streams inside one run.
pub fn stream_seeds(run_seed: u64) -> (u64, u64, u64) {
    (
        derive_seed(run_seed, "init", 0),
        derive_seed(run_seed, "noise", 0),
        derive_seed(run_seed, "batch", 0),
    )
}

pub fn noise_stream_for(config: &RunConfig, dim: usize, seed: u64) -> Result<NoiseStream> {
    let spec = NoiseSpec::new(
        config.distribution,
        config.sigma,
        config.variant.stream_correlation(),
        config.variant.noise_dim(dim),
        seed,
    );
    let stream = NoiseStream::new(spec)?;
    Ok(if config.reversed_increments {
        stream.with_reversed_increments()
    } else {
        stream
    })
}

struct Recorder<'a> {
    landscape: &'a dyn Landscape,
    config: &'a RunConfig,
    reg_spec: Option<ModifiedLossSpec>,
}

impl Recorder<'_> {
    fn row(&self, step: usize, w: &[f64], stream: &NoiseStream) -> Result<Row> {
        let l = self.landscape;
        let reg_grad_sqnorm = match &self.reg_spec {
            Some(spec) => {
                // Anticorrelated runs are measured at z_n = w_n - xi_n.
                let z = match (self.config.variant.perturbation(), stream.last_xi()) {
                    (Some(Correlation::Anticorrelated), Some(xi)) => sub(w, xi),
                    _ => w.to_vec(),
                };
                Some(sqnorm(&modified_grad(l, spec, &z)?))
            }
            None => None,
        };
        Ok(Row {
            step,
            train_loss: l.loss(w)?,
            test_loss: l.test_loss(w)?,
            hessian_trace: if self.config.record_trace {
                Some(l.hessian_trace(w)?)
            } else {
                None
            },
            u_sqnorm: l.u_sqnorm(w),
            reg_grad_sqnorm,
        })
    }
}

/// Runs `config.steps` updates. Rows are recorded at step 0, every
/// `record_every` steps and at the final step. A non-finite iterate, a
/// non-finite metric or a training loss above the divergence threshold stops
/// the run; the last row then describes the last finite iterate.
pub fn run(config: &RunConfig, landscape: &dyn Landscape, run_seed: u64) -> Result<Trajectory> {
    config.validate(landscape)?;
    let dim = landscape.dim();
    let (init_seed, noise_seed, batch_seed) = stream_seeds(run_seed);
    let mut w = config.init.point(dim, config.init_seed.unwrap_or(init_seed))?;
    landscape.check_dim(&w)?;
    let mut stream = noise_stream_for(config, dim, noise_seed)?;
    let mut sampler = match config.batch {
        Batch::MiniBatch { size } if config.variant.is_stochastic_gradient() => {
            Some(BatchSampler::new(landscape.n_examples(), size, batch_seed)?)
        }
        _ => None,
    };
    let recorder = Recorder {
        landscape,
        config,
        reg_spec: if config.record_reg_grad {
            Some(ModifiedLossSpec::new(config.sigma * config.sigma, TraceGradMethod::Auto)?)
        } else {
            None
        },
    };
    let anticorrelated = config.variant.perturbation() == Some(Correlation::Anticorrelated);
    let mut primed = false;

    let mut traj = Trajectory {
        seed: run_seed,
        rows: Vec::new(),
        diverged_at: None,
        final_point: Vec::new(),
        snapshots: Vec::new(),
    };
    let first = recorder.row(0, &w, &stream)?;
    let exceeded = |r: &Row| !r.finite() || r.train_loss > config.divergence_threshold;
    if exceeded(&first) {
        traj.rows.push(first);
        traj.diverged_at = Some(0);
        traj.final_point = w;
        return Ok(traj);
    }
    traj.rows.push(first);
    if config.record_params {
        traj.snapshots.push((0, w.clone()));
    }

    for n in 0..config.steps {
        let active = config.noise_active(n);
        if active && anticorrelated && !primed {
            if config.anti_start == AntiStart::FreshIncrement {
                stream.prime();
            }
            primed = true;
        }
        let batch = sampler.as_mut().map(|s| s.next_batch().to_vec());
        let next = match step(
            config.variant,
            landscape,
            &w,
            &mut stream,
            config.eta,
            active,
            batch.as_deref(),
        ) {
            Ok(next) => next,
            Err(Error::NonFinite(_)) => {
                traj.diverged_at = Some(n + 1);
                if traj.last().step < n {
                    let row = recorder.row(n, &w, &stream)?;
                    traj.rows.push(row);
                }
                break;
            }
            Err(e) => return Err(e),
        };
        w = next;
        if anticorrelated && primed && !active && config.anti_stop == AntiStop::Retract {
            if let Some(back) = stream.retract() {
                crate::linalg::add_assign(&mut w, &back);
            }
            primed = false;
        }
        let k = n + 1;
        if k % config.record_every == 0 || k == config.steps {
            let row = recorder.row(k, &w, &stream)?;
            if exceeded(&row) {
                traj.rows.push(row);
                traj.diverged_at = Some(k);
                break;
            }
            traj.rows.push(row);
            if config.record_params {
                traj.snapshots.push((k, w.clone()));
            }
        }
    }
    traj.final_point = w;
    Ok(traj)
}

/// Anti-PGD in the shifted variables: yields `z_0, z_1, ...` with
/// `z_{n+1} = z_n - eta grad L(z_n + xi_n)` and `xi_n` the raw draws of
/// `stream`.
pub struct ZForm<'a> {
    landscape: &'a dyn Landscape,
    z: Vec<f64>,
    eta: f64,
    stream: NoiseStream,
}

impl<'a> ZForm<'a> {
    pub fn new(landscape: &'a dyn Landscape, z0: Vec<f64>, eta: f64, stream: NoiseStream) -> Result<Self> {
        landscape.check_dim(&z0)?;
        if stream.spec().dim != z0.len() {
            return Err(Error::DimensionMismatch {
                expected: z0.len(),
                got: stream.spec().dim,
            });
        }
        Ok(Self {
            landscape,
            z: z0,
            eta,
            stream,
        })
    }

    pub fn current(&self) -> &[f64] {
        &self.z
    }

    /// Advance one step and return the new iterate.
    pub fn advance(&mut self) -> Result<&[f64]> {
        let xi = self.stream.next_xi();
        self.z = step_zform(self.landscape, &self.z, &xi, self.eta)?;
        Ok(&self.z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscapes::{Quadratic, WideningValley};

    fn stream(corr: Correlation, dim: usize, sigma: f64, seed: u64) -> NoiseStream {
        NoiseStream::new(NoiseSpec::new(Distribution::Gaussian, sigma, corr, dim, seed)).unwrap()
    }

    #[test]
    fn zero_noise_variants_coincide_bitwise() {
        let l = WideningValley::new(3).unwrap();
        let w = [0.4, -0.2, 1.1, 0.9];
        let gd = step(Variant::Gd, &l, &w, &mut stream(Correlation::Uncorrelated, 4, 0.0, 1), 0.1, true, None).unwrap();
        let pgd = step(Variant::Pgd, &l, &w, &mut stream(Correlation::Uncorrelated, 4, 0.0, 1), 0.1, true, None).unwrap();
        let mut s = stream(Correlation::Anticorrelated, 4, 0.0, 1);
        s.prime();
        let anti = step(Variant::AntiPgd, &l, &w, &mut s, 0.1, true, None).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&gd), bits(&pgd));
        assert_eq!(bits(&gd), bits(&anti));
    }

    #[test]
    fn mismatched_stream_is_rejected() {
        let l = Quadratic::new(2, 1.0).unwrap();
        let mut s = stream(Correlation::Uncorrelated, 2, 0.1, 1);
        assert!(step(Variant::AntiPgd, &l, &[1.0, 1.0], &mut s, 0.1, true, None).is_err());
        assert!(step(Variant::Sgd, &l, &[1.0, 1.0], &mut s, 0.1, true, None).is_err());
    }

    #[test]
    fn zform_step_by_hand() {
        let l = WideningValley::new(2).unwrap();
        let xi = [0.1, -0.2, 0.3];
        let z1 = step_zform(&l, &[0.0; 3], &xi, 0.5).unwrap();
        let g = l.grad(&xi).unwrap();
        for j in 0..3 {
            assert_eq!(z1[j], -0.5 * g[j]);
        }
        let z = step_zform(&l, &[0.3, 0.4, 0.5], &[0.0; 3], 0.5).unwrap();
        let gd = step(Variant::Gd, &l, &[0.3, 0.4, 0.5], &mut stream(Correlation::Uncorrelated, 3, 0.0, 0), 0.5, false, None).unwrap();
        assert_eq!(z, gd);
    }

    #[test]
    fn schedule_semantics() {
        let s = NoiseSchedule {
            start_step: 2,
            stop_step: Some(4),
        };
        let act: Vec<bool> = (0..6).map(|n| s.active(n)).collect();
        assert_eq!(act, [false, false, true, true, false, false]);
        assert!(NoiseSchedule::default().active(1_000_000));
    }

    #[test]
    fn config_validation() {
        let l = Quadratic::new(2, 1.0).unwrap();
        let ok = RunConfig::new("a", Variant::Gd, 0.1, 10);
        assert!(ok.validate(&l).is_ok());
        let bad_eta = RunConfig { eta: 0.0, ..ok.clone() };
        assert!(bad_eta.validate(&l).is_err());
        let bad_schedule = RunConfig {
            schedule: NoiseSchedule {
                start_step: 5,
                stop_step: Some(3),
            },
            ..ok.clone()
        };
        assert!(bad_schedule.validate(&l).is_err());
        let past_end = RunConfig {
            schedule: NoiseSchedule {
                start_step: 0,
                stop_step: Some(11),
            },
            ..ok.clone()
        };
        assert!(past_end.validate(&l).is_err());
        let sgd = RunConfig::new("s", Variant::Sgd, 0.1, 10);
        assert!(sgd.validate(&l).is_err());
        let label = RunConfig::new("l", Variant::LabelNoiseGd, 0.1, 10);
        assert!(label.validate(&l).is_err());
        let rec = RunConfig { record_every: 0, ..ok };
        assert!(rec.validate(&l).is_err());
    }

    #[test]
    fn record_count() {
        let l = Quadratic::new(2, 1.0).unwrap();
        let cfg = RunConfig {
            record_every: 10,
            ..RunConfig::new("r", Variant::Gd, 0.1, 1000)
        };
        let t = run(&cfg, &l, 3).unwrap();
        assert_eq!(t.rows.len(), 101);
        assert_eq!(t.rows.first().unwrap().step, 0);
        assert_eq!(t.last().step, 1000);
        assert!(t.rows.windows(2).all(|p| p[0].step < p[1].step));
        let odd = RunConfig {
            record_every: 7,
            ..cfg
        };
        let t = run(&odd, &l, 3).unwrap();
        assert_eq!(t.last().step, 1000);
        assert_eq!(t.rows.len(), 1 + 142 + 1);
    }

    #[test]
    fn gd_stays_on_valley_floor() {
        let l = WideningValley::new(5).unwrap();
        let cfg = RunConfig {
            init: InitPolicy::ValleyRing { u_sqnorm: 3.0 },
            ..RunConfig::new("floor", Variant::Gd, 0.05, 200)
        };
        let t = run(&cfg, &l, 8).unwrap();
        let w0 = cfg.init.point(6, stream_seeds(8).0).unwrap();
        assert_eq!(t.final_point, w0);
        assert!((t.last().u_sqnorm.unwrap() - 3.0).abs() < 1e-12);
        assert!(t.rows.iter().all(|r| r.train_loss == 0.0));
    }

    #[test]
    fn divergence_is_flagged() {
        let l = Quadratic::new(1, 1.0).unwrap();
        let cfg = RunConfig {
            init: InitPolicy::Constant { value: 1.0 },
            record_every: 50,
            ..RunConfig::new("blowup", Variant::Gd, 3.0, 10_000)
        };
        let t = run(&cfg, &l, 0).unwrap();
        let at = t.diverged_at.expect("eta = 3 diverges on unit curvature");
        assert!(at < 10_000);
        assert!(all_finite(&t.final_point));
        assert!(t.rows.windows(2).all(|p| p[0].step < p[1].step));
    }

    #[test]
    fn batch_sampler_epochs() {
        let mut s = BatchSampler::new(10, 3, 1).unwrap();
        let mut seen: Vec<usize> = Vec::new();
        let sizes: Vec<usize> = (0..4)
            .map(|_| {
                let b = s.next_batch().to_vec();
                seen.extend(&b);
                b.len()
            })
            .collect();
        assert_eq!(sizes, [3, 3, 3, 1]);
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        assert!(BatchSampler::new(3, 4, 0).is_err());
    }

    #[test]
    fn anti_pgd_on_flat_landscape_telescopes() {
        let l = Quadratic::zero(4).unwrap();
        let cfg = RunConfig {
            init: InitPolicy::Constant { value: 0.5 },
            record_params: true,
            ..RunConfig::new("flat", Variant::AntiPgd, 0.1, 20)
        }
        .with_noise(Distribution::SymmetricBernoulli, 0.25);
        let t = run(&cfg, &l, 2).unwrap();
        // w_N - w_0 = xi_N - xi_0 has coordinates in {-0.5, 0, 0.5}.
        for (_, w) in &t.snapshots {
            for x in w {
                let d = x - 0.5;
                assert!([-0.5, 0.0, 0.5].iter().any(|v| (d - v).abs() < 1e-15), "{d}");
            }
        }
    }
}
