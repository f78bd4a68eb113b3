use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::trajectory_csv::{metric, METRICS};
use crate::error::{Error, Result};
use crate::optimizers::{Trajectory, Variant};
use crate::stats::Moments;

/// Identifies the configuration a group of seeds belongs to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLabel {
    pub config: String,
    pub variant: Variant,
    pub eta: f64,
    pub sigma: f64,
}

/// One line of the tidy aggregate table. `std` is present from two seeds on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub config: String,
    pub variant: Variant,
    pub eta: f64,
    pub sigma: f64,
    pub step: usize,
    pub metric: String,
    pub n: u64,
    pub mean: f64,
    pub std: Option<f64>,
}

/// Mean and sample standard deviation across seeds for every
/// `(config, step, metric)` with at least one value. Rows are sorted by
/// the key `(config, step, metric column)`.
pub fn aggregate(groups: &[(RunLabel, Vec<Trajectory>)]) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| groups[a].0.config.cmp(&groups[b].0.config));
    for gi in order {
        let (label, trajs) = &groups[gi];
        let mut cells: BTreeMap<(usize, usize), Moments> = BTreeMap::new();
        for t in trajs {
            for row in &t.rows {
                for (mi, name) in METRICS.iter().enumerate() {
                    if let Some(v) = metric(row, name) {
                        cells.entry((row.step, mi)).or_default().push(v);
                    }
                }
            }
        }
        out.extend(cells.into_iter().map(|((step, mi), m)| AggregateRow {
            config: label.config.clone(),
            variant: label.variant,
            eta: label.eta,
            sigma: label.sigma,
            step,
            metric: METRICS[mi].to_string(),
            n: m.n,
            mean: m.mean,
            std: m.sample_std(),
        }));
    }
    out
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        wtr.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    rdr.deserialize()
        .map(|r| r.map_err(|e| Error::csv(path, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::Row;

    fn traj(seed: u64, losses: &[f64]) -> Trajectory {
        Trajectory {
            seed,
            rows: losses
                .iter()
                .enumerate()
                .map(|(i, &l)| Row {
                    step: i * 10,
                    train_loss: l,
                    test_loss: None,
                    hessian_trace: Some(2.0 * l),
                    u_sqnorm: None,
                    reg_grad_sqnorm: None,
                })
                .collect(),
            diverged_at: None,
            final_point: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    fn label(config: &str) -> RunLabel {
        RunLabel {
            config: config.into(),
            variant: Variant::Pgd,
            eta: 0.1,
            sigma: 0.01,
        }
    }

    #[test]
    fn mean_std_and_order() {
        let groups = vec![
            (label("b"), vec![traj(1, &[1.0, 2.0]), traj(2, &[3.0, 4.0])]),
            (label("a"), vec![traj(1, &[5.0])]),
        ];
        let rows = aggregate(&groups);
        assert_eq!(rows.len(), 2 + 4);
        assert_eq!(rows[0].config, "a");
        assert_eq!(rows[0].std, None);
        let b0 = &rows[2];
        assert_eq!((b0.config.as_str(), b0.step, b0.metric.as_str()), ("b", 0, "train_loss"));
        assert_eq!(b0.mean, 2.0);
        assert!((b0.std.unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(rows[3].metric, "hessian_trace");

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("agg.csv");
        write_aggregate_csv(&p, &rows).unwrap();
        assert_eq!(read_aggregate_csv(&p).unwrap(), rows);
    }
}
