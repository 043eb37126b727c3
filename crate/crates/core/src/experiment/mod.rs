//! Config-driven sweeps and machine-readable results.

pub mod config;
pub mod results;
pub mod runner;

use std::path::Path;

use serde::Deserialize;

use crate::comb::{ChoiOperator, CombLayout};
use crate::error::{Error, Result};
use crate::qcore::matrix::CMatrix;
use crate::scalar::c;

pub use config::{ExperimentConfig, OutputFormat, SweepAxis, SweepValue};
pub use results::{emit_results, emit_stability, ResultTable, StabilityTable};
pub use runner::{log_log_slope, run_experiment, run_stability, RunOptions};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixFile {
    re: Vec<Vec<f64>>,
    #[serde(default)]
    im: Option<Vec<Vec<f64>>>,
}

/// Reads a JSON matrix `{"re": [[…]], "im": [[…]]}` as a comb on the systems
/// `P, I1, O1, …, F` with the given dimensions.
pub fn read_comb_file(path: &Path, dims: &[usize]) -> Result<(ChoiOperator<f64>, CombLayout)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: MatrixFile = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let n = file.re.len();
    let im = file.im.unwrap_or_else(|| vec![vec![0.0; n]; n]);
    if im.len() != n || file.re.iter().chain(&im).any(|r| r.len() != n) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: "re and im must be square matrices of equal size".into(),
        });
    }
    let rows: Vec<Vec<_>> = file
        .re
        .iter()
        .zip(&im)
        .map(|(r, i)| r.iter().zip(i).map(|(&a, &b)| c(a, b)).collect())
        .collect();
    let layout = CombLayout::from_dims(dims)?;
    let op = ChoiOperator::new(layout.systems(), CMatrix::from_rows(&rows)?)?;
    Ok((op, layout))
}
