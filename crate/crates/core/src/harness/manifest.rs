use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::oracle_table::OracleParams;
use super::plot::PlotSpec;
use crate::error::{Error, Result};
use crate::landscapes::{
    DatasetMetadata, Landscape, MatrixSensing, MatrixSensingParams, QuadRegression,
    QuadRegressionParams, Quadratic, SparseValley, WideningValley,
};
use crate::optimizers::{RunConfig, Variant};
use crate::seed::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LandscapeSpec {
    WideningValley {
        d: usize,
    },
    SparseValley {
        d: usize,
        b: Vec<f64>,
    },
    Quadratic {
        dim: usize,
        #[serde(default)]
        curvature: f64,
    },
    /// Generated in memory from `params`, or loaded from `dataset` when set.
    QuadRegression {
        #[serde(default)]
        params: QuadRegressionParams,
        #[serde(default)]
        dataset: Option<PathBuf>,
    },
    MatrixSensing {
        #[serde(default)]
        params: MatrixSensingParams,
        #[serde(default)]
        dataset: Option<PathBuf>,
    },
}

impl LandscapeSpec {
    /// `base` resolves relative dataset paths.
    pub fn build(&self, base: &Path) -> Result<Box<dyn Landscape>> {
        Ok(match self {
            LandscapeSpec::WideningValley { d } => Box::new(WideningValley::new(*d)?),
            LandscapeSpec::SparseValley { d, b } => Box::new(SparseValley::new(*d, b.clone())?),
            LandscapeSpec::Quadratic { dim, curvature } => {
                Box::new(Quadratic::new(*dim, *curvature)?)
            }
            LandscapeSpec::QuadRegression { params, dataset } => match dataset {
                Some(dir) => Box::new(QuadRegression::load(&base.join(dir))?),
                None => Box::new(QuadRegression::generate(params)?),
            },
            LandscapeSpec::MatrixSensing { params, dataset } => match dataset {
                Some(dir) => Box::new(MatrixSensing::load(&base.join(dir))?),
                None => Box::new(MatrixSensing::generate(params)?),
            },
        })
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(
            self,
            LandscapeSpec::QuadRegression { .. } | LandscapeSpec::MatrixSensing { .. }
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    #[serde(default)]
    pub base_seed: u64,
    pub count: usize,
    /// Seed index `i` starts every config from the same initial point.
    #[serde(default)]
    pub shared_init: bool,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            base_seed: 0,
            count: 1,
            shared_init: false,
        }
    }
}

/// Cross product applied to every template in `runs`. Empty axes keep the
/// template's value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    #[serde(default)]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub eta: Vec<f64>,
    #[serde(default)]
    pub sigma: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub landscape: LandscapeSpec,
    #[serde(default)]
    pub runs: Vec<RunConfig>,
    #[serde(default)]
    pub sweep: Option<SweepGrid>,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub plots: Vec<PlotSpec>,
    #[serde(default)]
    pub oracle: Option<OracleParams>,
    /// Directory of the manifest file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn output_dir(&self, override_dir: Option<&Path>) -> PathBuf {
        match (override_dir, &self.output_dir) {
            (Some(dir), _) => dir.to_path_buf(),
            (None, Some(dir)) => self.base_dir.join(dir),
            (None, None) => self.base_dir.join("out").join(&self.name),
        }
    }

    /// The run configurations after sweep expansion, in a fixed order.
    pub fn configs(&self) -> Vec<RunConfig> {
        let Some(grid) = &self.sweep else {
            return self.runs.clone();
        };
        let mut out = Vec::new();
        for t in &self.runs {
            let variants = if grid.variants.is_empty() {
                vec![t.variant]
            } else {
                grid.variants.clone()
            };
            let etas = if grid.eta.is_empty() { vec![t.eta] } else { grid.eta.clone() };
            let sigmas = if grid.sigma.is_empty() {
                vec![t.sigma]
            } else {
                grid.sigma.clone()
            };
            for &variant in &variants {
                for &eta in &etas {
                    for &sigma in &sigmas {
                        out.push(RunConfig {
                            name: format!("{}-{}-eta{}-sigma{}", t.name, variant, eta, sigma),
                            variant,
                            eta,
                            sigma,
                            ..t.clone()
                        });
                    }
                }
            }
        }
        out
    }

    /// Every problem with the manifest, collected before anything runs.
    pub fn validate(&self, landscape: &dyn Landscape) -> std::result::Result<(), Vec<String>> {
        let mut problems = Vec::new();
        if self.seeds.count == 0 {
            problems.push("seeds.count must be at least 1".to_string());
        }
        let configs = self.configs();
        if configs.is_empty() {
            problems.push("manifest has no run configurations".to_string());
        }
        let mut names = BTreeSet::new();
        for c in &configs {
            if c.name.is_empty() || c.name.contains(['/', '\\']) {
                problems.push(format!("config name `{}` is empty or contains a path separator", c.name));
            }
            if !names.insert(c.name.clone()) {
                problems.push(format!("duplicate config name `{}`", c.name));
            }
            match c.validate(landscape) {
                Ok(()) => {}
                Err(Error::InvalidParameter(msg)) => problems.push(msg),
                Err(e) => problems.push(format!("config `{}`: {e}", c.name)),
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems)
        }
    }

    /// `base_seed ^ hash(config name, run index)`.
    pub fn run_seed(&self, config: &str, index: usize) -> u64 {
        derive_seed(self.seeds.base_seed, config, index as u64)
    }

    /// Initial-point seed for run `index` when `seeds.shared_init` is set.
    pub fn shared_init_seed(&self, index: usize) -> Option<u64> {
        self.seeds
            .shared_init
            .then(|| derive_seed(self.seeds.base_seed, "shared init", index as u64))
    }

    pub fn dataset_metadata(&self, files: &[(&str, Vec<usize>)]) -> Option<DatasetMetadata> {
        let (kind, seed, params) = match &self.landscape {
            LandscapeSpec::QuadRegression { params, .. } => (
                "quad_regression",
                params.seed,
                serde_json::to_value(params).ok()?,
            ),
            LandscapeSpec::MatrixSensing { params, .. } => (
                "matrix_sensing",
                params.seed,
                serde_json::to_value(params).ok()?,
            ),
            _ => return None,
        };
        Some(DatasetMetadata {
            kind: kind.to_string(),
            seed,
            shapes: files
                .iter()
                .map(|(f, s)| (f.to_string(), s.clone()))
                .collect(),
            params,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(json: &str) -> Manifest {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn sweep_expansion_and_validation() {
        let m = manifest(
            r#"{
            "name": "grid",
            "landscape": {"kind": "widening_valley", "d": 3},
            "runs": [{"name": "base", "variant": "pgd", "eta": 0.1, "steps": 10}],
            "sweep": {"variants": ["pgd", "anti_pgd"], "eta": [0.1, 0.05], "sigma": [0.01, 0.02, 0.03]},
            "seeds": {"base_seed": 7, "count": 5}
        }"#,
        );
        let configs = m.configs();
        assert_eq!(configs.len(), 12);
        assert_eq!(configs[0].name, "base-pgd-eta0.1-sigma0.01");
        let l = m.landscape.build(Path::new(".")).unwrap();
        assert!(m.validate(l.as_ref()).is_ok());
        assert_ne!(m.run_seed("a", 0), m.run_seed("a", 1));
        assert_ne!(m.run_seed("a", 0), m.run_seed("b", 0));
    }

    #[test]
    fn all_problems_are_reported() {
        let m = manifest(
            r#"{
            "name": "bad",
            "landscape": {"kind": "quadratic", "dim": 2, "curvature": 1.0},
            "runs": [
                {"name": "a", "variant": "gd", "eta": -1.0, "steps": 10},
                {"name": "a", "variant": "sgd", "eta": 0.1, "steps": 10}
            ],
            "seeds": {"count": 0}
        }"#,
        );
        let l = m.landscape.build(Path::new(".")).unwrap();
        let problems = m.validate(l.as_ref()).unwrap_err();
        assert_eq!(problems.len(), 4, "{problems:?}");
    }
}
