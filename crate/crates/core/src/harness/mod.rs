//! Experiment plumbing driven by JSON manifests. Every run leaves a
//! trajectory CSV; the aggregate table and SVG plots are built from those.

mod aggregate;
mod commands;
mod manifest;
mod oracle_table;
mod plot;
mod trajectory_csv;

pub use aggregate::{aggregate, read_aggregate_csv, write_aggregate_csv, AggregateRow, RunLabel};
pub use commands::{generate, run_manifest, sweep_manifest, RunStatus, RunSummary};
pub use manifest::{LandscapeSpec, Manifest, Seeds, SweepGrid};
pub use oracle_table::{oracle_table, write_oracle_csv, OracleParams, OracleTable};
pub use plot::{plot_csv, PlotSpec};
pub use trajectory_csv::{
    read_trajectory_csv, write_trajectory_csv, METRICS, TRAJECTORY_COLUMNS, TRAJECTORY_SCHEMA,
};

/// Largest admissible `sigma^2` for a valley run started at `|u_0|^2 = D`:
/// `min(alpha^3 D / 2, D / (8 alpha), alpha D / (2 d))`.
pub fn valley_sigma2(alpha: f64, big_d: f64, d: usize) -> f64 {
    (alpha.powi(3) * big_d / 2.0)
        .min(big_d / (8.0 * alpha))
        .min(alpha * big_d / (2.0 * d as f64))
}

/// Step size `alpha / (2 D)` under which the exit-side analysis holds.
pub fn valley_eta_safe(alpha: f64, big_d: f64) -> f64 {
    alpha / (2.0 * big_d)
}

/// Twice the safe step, `alpha / D`; the exit behaviour persists there.
pub fn valley_eta_fast(alpha: f64, big_d: f64) -> f64 {
    alpha / big_d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valley_defaults() {
        assert!((valley_sigma2(0.25, 10.0, 100) - 0.0125).abs() < 1e-15);
        assert_eq!(valley_eta_safe(0.25, 10.0), 0.0125);
        assert_eq!(valley_eta_fast(0.25, 10.0), 0.025);
        // Small d: the alpha^3 term binds.
        assert!((valley_sigma2(0.25, 10.0, 1) - 0.078125).abs() < 1e-15);
    }
}
