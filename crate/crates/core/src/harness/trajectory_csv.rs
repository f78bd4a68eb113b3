use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::landscapes::dataset::fmt_f64;
use crate::optimizers::{Row, Trajectory};

pub const TRAJECTORY_SCHEMA: &str = "# antipgd trajectory schema v1";

pub const TRAJECTORY_COLUMNS: [&str; 7] = [
    "step",
    "seed",
    "train_loss",
    "test_loss",
    "hessian_trace",
    "u_sqnorm",
    "reg_grad_sqnorm",
];

/// Metric columns, in file order.
pub const METRICS: [&str; 5] = [
    "train_loss",
    "test_loss",
    "hessian_trace",
    "u_sqnorm",
    "reg_grad_sqnorm",
];

fn cell(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Writes to a sibling temporary file and renames it into place.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("csv.tmp");
    let mut buf = Vec::new();
    writeln!(buf, "{TRAJECTORY_SCHEMA}").map_err(|e| Error::io(&tmp, e))?;
    {
        let mut wtr = csv::Writer::from_writer(&mut buf);
        wtr.write_record(TRAJECTORY_COLUMNS)
            .map_err(|e| Error::csv(&tmp, e))?;
        for r in &traj.rows {
            wtr.write_record([
                r.step.to_string(),
                traj.seed.to_string(),
                fmt_f64(r.train_loss),
                cell(r.test_loss),
                cell(r.hessian_trace),
                cell(r.u_sqnorm),
                cell(r.reg_grad_sqnorm),
            ])
            .map_err(|e| Error::csv(&tmp, e))?;
        }
        wtr.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::write(&tmp, &buf).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn parse<T: std::str::FromStr>(path: &Path, s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        value: s.to_string(),
    })
}

fn parse_opt(path: &Path, s: &str) -> Result<Option<f64>> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse(path, s).map(Some)
    }
}

/// Reads a trajectory file back. Only the recorded rows and the seed are
/// restored; snapshots and the final point are not stored.
pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| Error::io(path, e))?;
    if first.trim_end() != TRAJECTORY_SCHEMA {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            value: first.trim_end().to_string(),
        });
    }
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    let mut idx = [0usize; 7];
    for (slot, name) in idx.iter_mut().zip(TRAJECTORY_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })?;
    }
    let mut seed = 0;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let get = |i: usize| rec.get(idx[i]).unwrap_or("");
        seed = parse(path, get(1))?;
        rows.push(Row {
            step: parse(path, get(0))?,
            train_loss: parse(path, get(2))?,
            test_loss: parse_opt(path, get(3))?,
            hessian_trace: parse_opt(path, get(4))?,
            u_sqnorm: parse_opt(path, get(5))?,
            reg_grad_sqnorm: parse_opt(path, get(6))?,
        });
    }
    Ok(Trajectory {
        seed,
        rows,
        diverged_at: None,
        final_point: Vec::new(),
        snapshots: Vec::new(),
    })
}

pub(crate) fn metric(row: &Row, name: &str) -> Option<f64> {
    match name {
        "train_loss" => Some(row.train_loss),
        "test_loss" => row.test_loss,
        "hessian_trace" => row.hessian_trace,
        "u_sqnorm" => row.u_sqnorm,
        "reg_grad_sqnorm" => row.reg_grad_sqnorm,
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let traj = Trajectory {
            seed: u64::MAX - 3,
            rows: vec![
                Row {
                    step: 0,
                    train_loss: 0.1 + 0.2,
                    test_loss: None,
                    hessian_trace: Some(1e-300),
                    u_sqnorm: Some(std::f64::consts::PI),
                    reg_grad_sqnorm: None,
                },
                Row {
                    step: 10,
                    train_loss: 1.0 / 3.0,
                    test_loss: Some(-0.0),
                    hessian_trace: Some(123456.789),
                    u_sqnorm: None,
                    reg_grad_sqnorm: Some(5e-17),
                },
            ],
            diverged_at: None,
            final_point: Vec::new(),
            snapshots: Vec::new(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs/a/seed_0.csv");
        write_trajectory_csv(&path, &traj).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(TRAJECTORY_SCHEMA));
        assert!(!path.with_extension("csv.tmp").exists());
        let back = read_trajectory_csv(&path).unwrap();
        assert_eq!(back.seed, traj.seed);
        assert_eq!(back.rows, traj.rows);
    }

    #[test]
    fn rejects_missing_schema_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        fs::write(&path, "step,seed\n0,1\n").unwrap();
        assert!(matches!(read_trajectory_csv(&path), Err(Error::Parse { .. })));
    }
}
