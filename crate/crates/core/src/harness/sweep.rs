use std::io::Write;

use serde::Serialize;

use super::{run, EstimatorKind, ExperimentConfig, Overrides, RunSummary};
use crate::distribution::spec::DistSpec;
use crate::distribution::Family;
use crate::error::{Error, Result};
use crate::numeric::ls_slope;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub estimators: Vec<EstimatorKind>,
    pub ks: Vec<usize>,
    pub eps: Vec<f64>,
    pub family: Family,
    pub family_seed: u64,
    pub trials: u64,
    pub seed: u64,
    pub overrides: Overrides,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub estimator: EstimatorKind,
    pub k: usize,
    pub eps: f64,
    /// `ok`, or the error that stopped the cell.
    pub status: String,
    pub summary: Option<RunSummary>,
}

/// Least-squares slope of `log(mean samples)` against `log(1/eps)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub estimator: EstimatorKind,
    pub k: usize,
    pub points: usize,
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutput {
    pub cells: Vec<SweepCell>,
    pub slopes: Vec<SlopeFit>,
}

impl SweepOutput {
    pub fn slope(&self, estimator: EstimatorKind, k: usize) -> Option<f64> {
        self.slopes
            .iter()
            .find(|s| s.estimator == estimator && s.k == k)
            .and_then(|s| s.slope)
    }
}

/// Runs every `(estimator, k, eps)` cell with the grid's seed; a failing cell
/// is recorded and the sweep continues.
pub fn sweep(grid: &SweepGrid) -> Result<SweepOutput> {
    if grid.estimators.is_empty() || grid.ks.is_empty() || grid.eps.is_empty() {
        return Err(Error::InvalidConfig("sweep grid must be non-empty".into()));
    }
    let mut cells = Vec::new();
    let mut slopes = Vec::new();
    for &estimator in &grid.estimators {
        for &k in &grid.ks {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for &eps in &grid.eps {
                let dist = DistSpec::Family {
                    family: grid.family.clone(),
                    k,
                    seed: grid.family_seed,
                };
                let mut cfg = ExperimentConfig::new(estimator, dist, eps, grid.trials, grid.seed);
                cfg.overrides = grid.overrides.clone();
                let cell = match run(&cfg) {
                    Ok(out) => {
                        if out.summary.mean_samples > 0.0 {
                            xs.push((1.0 / eps).ln());
                            ys.push(out.summary.mean_samples.ln());
                        }
                        SweepCell {
                            estimator,
                            k,
                            eps,
                            status: "ok".into(),
                            summary: Some(out.summary),
                        }
                    }
                    Err(e) => SweepCell {
                        estimator,
                        k,
                        eps,
                        status: format!("error: {e}"),
                        summary: None,
                    },
                };
                cells.push(cell);
            }
            slopes.push(SlopeFit {
                estimator,
                k,
                points: xs.len(),
                slope: ls_slope(&xs, &ys),
            });
        }
    }
    Ok(SweepOutput { cells, slopes })
}

pub const SWEEP_HEADER: [&str; 11] = [
    "estimator",
    "k",
    "eps",
    "trials",
    "status",
    "exact_entropy",
    "mean_estimate",
    "mean_abs_error",
    "success_fraction",
    "failures",
    "mean_samples",
];

/// One row per cell in long format.
pub fn write_sweep_csv<W: Write>(output: &SweepOutput, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for c in &output.cells {
        let mut row = vec![c.estimator.to_string(), c.k.to_string(), c.eps.to_string()];
        match &c.summary {
            Some(s) => row.extend([
                s.trials.to_string(),
                c.status.clone(),
                s.exact_entropy.to_string(),
                s.mean_estimate.to_string(),
                s.mean_abs_error.to_string(),
                s.success_fraction.to_string(),
                s.failures.to_string(),
                s.mean_samples.to_string(),
            ]),
            None => {
                row.push(String::new());
                row.push(c.status.clone());
                row.extend(std::iter::repeat_n(String::new(), 6));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
