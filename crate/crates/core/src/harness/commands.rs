use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate, write_aggregate_csv, RunLabel};
use super::manifest::{LandscapeSpec, Manifest};
use super::plot::plot_csv;
use super::trajectory_csv::write_trajectory_csv;
use crate::error::{Error, Result};
use crate::landscapes::{MatrixSensing, QuadRegression};
use crate::optimizers::{run, RunConfig, Trajectory};

/// Writes the manifest's dataset and returns its directory, or `None` for
/// analytic landscapes. The directory is `out` when given, else the
/// manifest's `dataset` path, else `<output_dir>/data`.
pub fn generate(manifest: &Manifest, out: Option<&Path>) -> Result<Option<PathBuf>> {
    let target = |dataset: &Option<PathBuf>| match (out, dataset) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(d)) => manifest.base_dir.join(d),
        (None, None) => manifest.output_dir(None).join("data"),
    };
    match &manifest.landscape {
        LandscapeSpec::QuadRegression { params, dataset } => {
            let qr = QuadRegression::generate(params)?;
            let (m, d) = (params.m, params.d);
            let meta = manifest
                .dataset_metadata(&[
                    ("X.csv", vec![m, d]),
                    ("y.csv", vec![m]),
                    ("X_test.csv", vec![params.m_test, d]),
                    ("y_test.csv", vec![params.m_test]),
                    ("w_star.csv", vec![d]),
                ])
                .ok_or_else(|| Error::invalid("cannot serialise dataset parameters"))?;
            let dir = target(dataset);
            qr.save(&dir, &meta)?;
            Ok(Some(dir))
        }
        LandscapeSpec::MatrixSensing { params, dataset } => {
            let ms = MatrixSensing::generate(params)?;
            let (n, m) = (params.n, params.m);
            let meta = manifest
                .dataset_metadata(&[
                    ("A.csv", vec![m, n, n]),
                    ("y.csv", vec![m]),
                    ("A_test.csv", vec![params.m_test, n, n]),
                    ("y_test.csv", vec![params.m_test]),
                    ("X_star.csv", vec![n, n]),
                ])
                .ok_or_else(|| Error::invalid("cannot serialise dataset parameters"))?;
            let dir = target(dataset);
            ms.save(&dir, &meta)?;
            Ok(Some(dir))
        }
        _ => Ok(None),
    }
}

/// Outcome of one `(config, seed)` run, as written to `status.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub config: String,
    pub seed_index: usize,
    pub seed: u64,
    pub diverged_at: Option<usize>,
    pub final_train_loss: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub statuses: Vec<RunStatus>,
    pub plots: Vec<PathBuf>,
}

impl RunSummary {
    pub fn any_diverged(&self) -> bool {
        self.statuses.iter().any(|s| s.diverged_at.is_some())
    }

    pub fn any_failed(&self) -> bool {
        self.statuses.iter().any(|s| s.error.is_some())
    }
}

fn execute(manifest: &Manifest, out: Option<&Path>) -> Result<(RunSummary, Vec<(RunLabel, Vec<Trajectory>)>)> {
    let landscape = manifest.landscape.build(&manifest.base_dir)?;
    if let Err(problems) = manifest.validate(landscape.as_ref()) {
        return Err(Error::InvalidManifest(problems));
    }
    let configs = manifest.configs();
    let out_dir = manifest.output_dir(out);
    let jobs: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..manifest.seeds.count).map(move |s| (c, s)))
        .collect();

    let results: Vec<(RunStatus, Option<Trajectory>)> = jobs
        .par_iter()
        .map(|&(ci, si)| {
            let mut config: RunConfig = configs[ci].clone();
            if let Some(s) = manifest.shared_init_seed(si) {
                config.init_seed = Some(s);
            }
            let seed = manifest.run_seed(&config.name, si);
            let mut status = RunStatus {
                config: config.name.clone(),
                seed_index: si,
                seed,
                diverged_at: None,
                final_train_loss: None,
                error: None,
            };
            let path = out_dir
                .join("runs")
                .join(&config.name)
                .join(format!("seed_{si}.csv"));
            let outcome = run(&config, landscape.as_ref(), seed)
                .and_then(|t| write_trajectory_csv(&path, &t).map(|_| t));
            match outcome {
                Ok(t) => {
                    status.diverged_at = t.diverged_at;
                    status.final_train_loss = Some(t.last().train_loss);
                    (status, Some(t))
                }
                Err(e) => {
                    status.error = Some(e.to_string());
                    (status, None)
                }
            }
        })
        .collect();

    let mut groups: Vec<(RunLabel, Vec<Trajectory>)> = configs
        .iter()
        .map(|c| {
            (
                RunLabel {
                    config: c.name.clone(),
                    variant: c.variant,
                    eta: c.eta,
                    sigma: c.sigma,
                },
                Vec::new(),
            )
        })
        .collect();
    let mut statuses = Vec::with_capacity(results.len());
    for ((ci, _), (status, traj)) in jobs.iter().zip(results) {
        if let Some(t) = traj {
            groups[*ci].1.push(t);
        }
        statuses.push(status);
    }

    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let status_path = out_dir.join("status.csv");
    let mut wtr = csv::Writer::from_path(&status_path).map_err(|e| Error::csv(&status_path, e))?;
    for s in &statuses {
        wtr.serialize(s).map_err(|e| Error::csv(&status_path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(&status_path, e))?;

    Ok((
        RunSummary {
            out_dir,
            statuses,
            plots: Vec::new(),
        },
        groups,
    ))
}

fn emit_plots(manifest: &Manifest, summary: &mut RunSummary) -> Result<()> {
    for spec in &manifest.plots {
        let source = match &spec.source {
            Some(p) => summary.out_dir.join(p),
            None => summary.out_dir.join("aggregate.csv"),
        };
        let paths = plot_csv(&source, spec, &summary.out_dir.join("plots"))?;
        summary.plots.extend(paths);
    }
    Ok(())
}

/// Runs every `(config, seed)` pair into `runs/<config>/seed_<i>.csv`, then
/// writes `status.csv` and `aggregate.csv` next to the manifest's plots. Validation problems are all reported before any run.
pub fn run_manifest(manifest: &Manifest, out: Option<&Path>) -> Result<RunSummary> {
    let (mut summary, groups) = execute(manifest, out)?;
    write_aggregate_csv(&summary.out_dir.join("aggregate.csv"), &aggregate(&groups))?;
    emit_plots(manifest, &mut summary)?;
    Ok(summary)
}

/// Same outputs as [`run_manifest`]. Failed or diverged runs are recorded in
/// `status.csv`; the remaining seeds still enter the aggregate.
pub fn sweep_manifest(manifest: &Manifest, out: Option<&Path>) -> Result<RunSummary> {
    run_manifest(manifest, out)
}
