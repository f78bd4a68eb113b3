//! Plain-text dataset storage: headerless CSV matrices (one row per line,
//! shortest round-trip decimal formatting) plus a JSON metadata manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DATASET_METADATA_FILE: &str = "metadata.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub kind: String,
    pub seed: u64,
    /// File name to shape, e.g. `"X.csv" -> [40, 100]`.
    pub shapes: BTreeMap<String, Vec<usize>>,
    /// Generation parameters as given.
    pub params: serde_json::Value,
}

impl DatasetMetadata {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(DATASET_METADATA_FILE);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::json(&path, e))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(DATASET_METADATA_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(&path, e))
    }
}

/// Shortest round-trip decimal, in exponent form outside `[1e-4, 1e16)`.
pub(crate) fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e16).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub(crate) fn write_rows<'a, I>(path: &Path, rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    for row in rows {
        wtr.write_record(row.iter().map(|&v| fmt_f64(v)))
            .map_err(|e| Error::csv(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let row = rec
            .iter()
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    value: f.to_string(),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub(crate) fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_rows(path, m.row_iter().map(|r| r.iter().copied().collect()))
}

pub(crate) fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let rows = read_rows(path)?;
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::invalid(format!("{}: ragged matrix", path.display())));
    }
    let flat: Vec<f64> = rows.concat();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

/// One value per line.
pub(crate) fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    write_rows(path, v.iter().map(|x| vec![*x]))
}

pub(crate) fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let rows = read_rows(path)?;
    if rows.iter().any(|r| r.len() != 1) {
        return Err(Error::invalid(format!(
            "{}: expected one value per line",
            path.display()
        )));
    }
    Ok(rows.into_iter().map(|r| r[0]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = DMatrix::from_row_slice(2, 3, &[0.1, -2.5e-300, 1.0 / 3.0, 7.0, f64::MIN_POSITIVE, -0.0]);
        write_matrix(&path, &m).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(back.shape(), (2, 3));
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn vector_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        write_vector(&path, &[1.5, -3.25]).unwrap();
        assert_eq!(read_vector(&path).unwrap(), vec![1.5, -3.25]);

        let bad = dir.path().join("bad.csv");
        fs::write(&bad, "1.0\nabc\n").unwrap();
        assert!(matches!(read_vector(&bad), Err(Error::Parse { .. })));
        assert!(matches!(
            read_vector(&dir.path().join("missing.csv")),
            Err(Error::Csv { .. })
        ));
    }

    #[test]
    fn metadata_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let meta = DatasetMetadata {
            kind: "quad_regression".into(),
            seed: 3,
            shapes: [("X.csv".to_string(), vec![4, 2])].into_iter().collect(),
            params: serde_json::json!({"d": 2}),
        };
        meta.write(dir.path()).unwrap();
        assert_eq!(DatasetMetadata::read(dir.path()).unwrap(), meta);
    }
}
