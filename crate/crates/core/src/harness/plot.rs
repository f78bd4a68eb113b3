use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use super::aggregate::{read_aggregate_csv, AggregateRow};
use super::trajectory_csv::{read_trajectory_csv, TRAJECTORY_SCHEMA};
use crate::error::{Error, Result};

/// One SVG per metric. `source` is an aggregate CSV (mean with a std band per
/// config) or a single trajectory CSV (one line); the default is the sweep's
/// `aggregate.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub name: String,
    pub metrics: Vec<String>,
    #[serde(default)]
    pub log_y: bool,
    /// Only these configs; all when empty.
    #[serde(default)]
    pub configs: Vec<String>,
    #[serde(default)]
    pub source: Option<PathBuf>,
}

struct Series {
    label: String,
    /// `(step, mean, std)`.
    points: Vec<(f64, f64, Option<f64>)>,
}

fn from_aggregate(path: &Path, rows: &[AggregateRow], spec: &PlotSpec, m: &str) -> Result<Vec<Series>> {
    let mut by_config: BTreeMap<&str, Vec<(f64, f64, Option<f64>)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.metric == m) {
        if spec.configs.is_empty() || spec.configs.contains(&r.config) {
            by_config
                .entry(&r.config)
                .or_default()
                .push((r.step as f64, r.mean, r.std));
        }
    }
    if by_config.is_empty() {
        return Err(Error::MissingColumn {
            path: path.to_path_buf(),
            column: m.to_string(),
        });
    }
    Ok(by_config
        .into_iter()
        .map(|(label, points)| Series {
            label: label.to_string(),
            points,
        })
        .collect())
}

fn from_trajectory(path: &Path, m: &str) -> Result<Vec<Series>> {
    let traj = read_trajectory_csv(path)?;
    let points: Vec<_> = traj
        .rows
        .iter()
        .filter_map(|r| super::trajectory_csv::metric(r, m).map(|v| (r.step as f64, v, None)))
        .collect();
    if points.is_empty() {
        return Err(Error::MissingColumn {
            path: path.to_path_buf(),
            column: m.to_string(),
        });
    }
    Ok(vec![Series {
        label: format!("seed {}", traj.seed),
        points,
    }])
}

fn is_trajectory(path: &Path) -> Result<bool> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().next() == Some(TRAJECTORY_SCHEMA))
}

/// Writes `<out_dir>/<name>_<metric>.svg` for every metric and returns the paths.
pub fn plot_csv(csv_path: &Path, spec: &PlotSpec, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let trajectory = is_trajectory(csv_path)?;
    let aggregate = if trajectory {
        Vec::new()
    } else {
        read_aggregate_csv(csv_path)?
    };
    // Check every panel before drawing any.
    let mut panels = Vec::new();
    for m in &spec.metrics {
        let series = if trajectory {
            from_trajectory(csv_path, m)?
        } else {
            from_aggregate(csv_path, &aggregate, spec, m)?
        };
        panels.push((m, series));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut out = Vec::new();
    for (m, series) in panels {
        let path = out_dir.join(format!("{}_{}.svg", spec.name, m));
        draw(&path, &format!("{} {}", spec.name, m), m, &series, spec.log_y)?;
        out.push(path);
    }
    Ok(out)
}

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Plot(e.to_string())
}

/// Decades shown below the largest value on a log axis.
const LOG_DECADES: f64 = 15.0;

fn draw(path: &Path, title: &str, y_label: &str, series: &[Series], log_y: bool) -> Result<()> {
    let (mut x_max, mut y_lo, mut y_hi) = (1.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, m, sd) in &s.points {
            let sd = sd.unwrap_or(0.0);
            x_max = x_max.max(x);
            for y in [m - sd, m + sd] {
                if y.is_finite() && (!log_y || y > 0.0) {
                    y_lo = y_lo.min(y);
                    y_hi = y_hi.max(y);
                }
            }
        }
    }
    if !y_lo.is_finite() {
        (y_lo, y_hi) = if log_y { (1e-3, 1.0) } else { (0.0, 1.0) };
    }
    if log_y {
        y_lo = y_lo.max(y_hi * 10f64.powf(-LOG_DECADES));
    }
    let floor = y_lo;
    let y_of = |v: f64| if log_y { v.max(floor) } else { v };
    if y_hi <= y_lo {
        let pad = if y_lo == 0.0 { 1.0 } else { y_lo.abs() * 0.1 };
        y_hi = y_lo + pad;
        if !log_y {
            y_lo -= pad;
        }
    }

    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut builder = ChartBuilder::on(&root);
    builder
        .caption(title, ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(70);

    macro_rules! render {
        ($chart:expr) => {{
            let mut chart = $chart;
            chart
                .configure_mesh()
                .x_desc("step")
                .y_desc(y_label)
                .draw()
                .map_err(plot_err)?;
            for (i, s) in series.iter().enumerate() {
                let color = Palette99::pick(i).to_rgba();
                if s.points.iter().any(|p| p.2.is_some()) {
                    let mut band: Vec<(f64, f64)> = s
                        .points
                        .iter()
                        .map(|&(x, m, sd)| (x, y_of(m + sd.unwrap_or(0.0))))
                        .collect();
                    band.extend(
                        s.points
                            .iter()
                            .rev()
                            .map(|&(x, m, sd)| (x, y_of(m - sd.unwrap_or(0.0)))),
                    );
                    chart
                        .draw_series(std::iter::once(Polygon::new(band, color.mix(0.2).filled())))
                        .map_err(plot_err)?;
                }
                chart
                    .draw_series(LineSeries::new(
                        s.points.iter().map(|&(x, m, _)| (x, y_of(m))),
                        color.stroke_width(2),
                    ))
                    .map_err(plot_err)?
                    .label(s.label.clone())
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
            }
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.8))
                .border_style(BLACK)
                .draw()
                .map_err(plot_err)?;
        }};
    }

    if log_y {
        render!(builder
            .build_cartesian_2d(0f64..x_max, (y_lo..y_hi).log_scale())
            .map_err(plot_err)?);
    } else {
        render!(builder
            .build_cartesian_2d(0f64..x_max, y_lo..y_hi)
            .map_err(plot_err)?);
    }
    root.present().map_err(plot_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::aggregate::write_aggregate_csv;
    use crate::optimizers::Variant;

    fn rows() -> Vec<AggregateRow> {
        (0..5)
            .map(|s| AggregateRow {
                config: "c".into(),
                variant: Variant::AntiPgd,
                eta: 0.1,
                sigma: 0.1,
                step: s * 10,
                metric: "train_loss".into(),
                n: 1,
                mean: 1.0 / (1.0 + s as f64),
                std: None,
            })
            .collect()
    }

    #[test]
    fn writes_svg_and_reports_missing_metric() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("aggregate.csv");
        write_aggregate_csv(&csv, &rows()).unwrap();
        let spec = PlotSpec {
            name: "p".into(),
            metrics: vec!["train_loss".into()],
            log_y: true,
            configs: vec![],
            source: None,
        };
        let paths = plot_csv(&csv, &spec, dir.path()).unwrap();
        let svg = std::fs::read_to_string(&paths[0]).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(!svg.contains("<polygon"), "single seed draws no band");

        let bad = PlotSpec {
            metrics: vec!["hessian_trace".into()],
            ..spec
        };
        assert!(matches!(
            plot_csv(&csv, &bad, dir.path()),
            Err(Error::MissingColumn { .. })
        ));
    }
}
