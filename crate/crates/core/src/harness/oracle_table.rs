use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sqnorm;
use crate::noise::{Correlation, Distribution};
use crate::oracle::{limit_const_rho, simulate_recursion, RecursionSim, RhoSpec};

fn default_distribution() -> Distribution {
    Distribution::Gaussian
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    pub rho: RhoSpec,
    pub d: usize,
    pub sigma2: f64,
    pub horizon: usize,
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_distribution")]
    pub distribution: Distribution,
    /// Starting point; zero when empty.
    #[serde(default)]
    pub w0: Vec<f64>,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            rho: RhoSpec::Constant(0.9),
            d: 50,
            sigma2: 0.01,
            horizon: 500,
            samples: 2000,
            seed: 0,
            distribution: Distribution::Gaussian,
            w0: Vec::new(),
        }
    }
}

/// One row per `k = 0..=horizon` plus a trailing `limit` row (constant rho)
/// or `bound` row (stochastic rho, anticorrelated `2 d sigma^2`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub k: String,
    pub closed_form_anti: Option<f64>,
    pub closed_form_uncorr: Option<f64>,
    pub mc_anti: Option<f64>,
    pub mc_uncorr: Option<f64>,
    pub stderr_anti: Option<f64>,
    pub stderr_uncorr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleTable {
    pub rows: Vec<OracleRow>,
}

impl OracleTable {
    pub fn final_row(&self) -> &OracleRow {
        self.rows
            .iter()
            .rev()
            .find(|r| r.k.parse::<usize>().is_ok())
            .expect("table has step rows")
    }

    pub fn extra_row(&self) -> Option<&OracleRow> {
        self.rows.last().filter(|r| r.k.parse::<usize>().is_err())
    }
}

pub fn oracle_table(p: &OracleParams) -> Result<OracleTable> {
    if !(p.sigma2 >= 0.0 && p.sigma2.is_finite()) {
        return Err(Error::invalid(format!("sigma^2 must be finite and >= 0, got {}", p.sigma2)));
    }
    let w0_sqnorm = sqnorm(&p.w0);
    let closed = |mode| p.rho.closed_form(p.horizon, w0_sqnorm, p.d, p.sigma2, mode);
    let cf_anti = closed(Correlation::Anticorrelated)?;
    let cf_uncorr = closed(Correlation::Uncorrelated)?;
    let sim = |correlation, salt: u64| RecursionSim {
        rho: p.rho.clone(),
        correlation,
        distribution: p.distribution,
        d: p.d,
        sigma: p.sigma2.sqrt(),
        w0: p.w0.clone(),
        n_samples: p.samples,
        horizon: p.horizon,
        seed: p.seed ^ salt,
    };
    let mc_anti = simulate_recursion(&sim(Correlation::Anticorrelated, 0))?;
    let mc_uncorr = simulate_recursion(&sim(Correlation::Uncorrelated, 0x9e37_79b9_7f4a_7c15))?;

    let mut rows: Vec<OracleRow> = (0..=p.horizon)
        .map(|k| OracleRow {
            k: k.to_string(),
            closed_form_anti: cf_anti.as_ref().map(|v| v[k]),
            closed_form_uncorr: cf_uncorr.as_ref().map(|v| v[k]),
            mc_anti: Some(mc_anti.mean[k]),
            mc_uncorr: Some(mc_uncorr.mean[k]),
            stderr_anti: Some(mc_anti.stderr[k]),
            stderr_uncorr: Some(mc_uncorr.stderr[k]),
        })
        .collect();
    let empty = |k: &str| OracleRow {
        k: k.to_string(),
        closed_form_anti: None,
        closed_form_uncorr: None,
        mc_anti: None,
        mc_uncorr: None,
        stderr_anti: None,
        stderr_uncorr: None,
    };
    match &p.rho {
        RhoSpec::Constant(r) => rows.push(OracleRow {
            closed_form_anti: Some(limit_const_rho(*r, p.d, p.sigma2, Correlation::Anticorrelated)?),
            closed_form_uncorr: Some(limit_const_rho(*r, p.d, p.sigma2, Correlation::Uncorrelated)?),
            ..empty("limit")
        }),
        RhoSpec::Stochastic { .. } => rows.push(OracleRow {
            closed_form_anti: Some(2.0 * p.d as f64 * p.sigma2),
            ..empty("bound")
        }),
        RhoSpec::Sequence(_) => {}
    }
    Ok(OracleTable { rows })
}

pub fn write_oracle_csv(path: &Path, table: &OracleTable) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in &table.rows {
        wtr.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}
