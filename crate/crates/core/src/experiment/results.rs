//! Result tables and their CSV / JSON encodings.
//!
//! Floats are written in Rust's shortest round-trip decimal form; missing
//! values are empty CSV fields and JSON `null`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::data::FileDigest;
use crate::error::{Error, Result};

use super::config::OutputFormat;

pub const RESULT_COLUMNS: [&str; 11] = [
    "sweep_value",
    "seed",
    "iteration",
    "train_risk",
    "test_risk",
    "gap",
    "train_acc",
    "test_acc",
    "sum_abs_dtheta",
    "bound",
    "margin",
];

pub const AGGREGATE_COLUMNS: [&str; 13] = [
    "sweep_value",
    "iteration",
    "n_seeds",
    "train_risk_mean",
    "train_risk_std",
    "test_risk_mean",
    "test_risk_std",
    "gap_mean",
    "gap_std",
    "train_acc_mean",
    "train_acc_std",
    "test_acc_mean",
    "test_acc_std",
];

pub const TRACE_COLUMNS: [&str; 7] = [
    "sweep_value",
    "seed",
    "replaced_index",
    "iteration",
    "sum_abs_dtheta",
    "max_output_gap",
    "max_loss_gap",
];

pub const BETA_COLUMNS: [&str; 11] = [
    "sweep_value",
    "m",
    "beta_hat",
    "theoretical_beta",
    "bound",
    "margin",
    "max_final_sum_abs_dtheta",
    "n_indices",
    "n_seeds",
    "n_probes",
    "iterations",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub seed: u64,
    pub iteration: usize,
    pub train_risk: f64,
    pub test_risk: f64,
    pub gap: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub sum_abs_dtheta: Option<f64>,
    /// Generalization bound; absent when the closed form overflows.
    pub bound: Option<f64>,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    pub sweep_value: f64,
    pub iteration: usize,
    pub n_seeds: usize,
    pub train_risk_mean: f64,
    pub train_risk_std: f64,
    pub test_risk_mean: f64,
    pub test_risk_std: f64,
    pub gap_mean: f64,
    pub gap_std: f64,
    pub train_acc_mean: f64,
    pub train_acc_std: f64,
    pub test_acc_mean: f64,
    pub test_acc_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub sweep_value: f64,
    pub seed: u64,
    pub replaced_index: usize,
    pub iteration: usize,
    pub sum_abs_dtheta: f64,
    pub max_output_gap: f64,
    pub max_loss_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BetaRow {
    pub sweep_value: f64,
    pub m: usize,
    pub beta_hat: f64,
    pub theoretical_beta: Option<f64>,
    pub bound: Option<f64>,
    pub margin: f64,
    pub max_final_sum_abs_dtheta: f64,
    pub n_indices: usize,
    pub n_seeds: usize,
    pub n_probes: usize,
    pub iterations: usize,
}

/// Audit trail embedded in every result file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Meta {
    pub artifact: String,
    pub version: String,
    pub command: String,
    /// The configuration after defaults were applied.
    pub config: serde_json::Value,
    pub config_sha256: Option<String>,
    pub sweep_axis: String,
    pub seeds: Vec<u64>,
    pub iterations: usize,
    pub eval_interval: usize,
    pub datasets: Vec<DatasetRecord>,
    /// Settings that were filled by defaults rather than read from the config.
    pub reconstructed_defaults: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetRecord {
    pub name: String,
    pub content_sha256: String,
    pub files: Vec<FileDigest>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultTable {
    pub meta: Meta,
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<AggregateRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityTable {
    pub meta: Meta,
    pub traces: Vec<TraceRow>,
    pub beta: Vec<BetaRow>,
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

impl ResultRow {
    fn fields(&self) -> Vec<String> {
        vec![
            fmt_f64(self.sweep_value),
            self.seed.to_string(),
            self.iteration.to_string(),
            fmt_f64(self.train_risk),
            fmt_f64(self.test_risk),
            fmt_f64(self.gap),
            fmt_f64(self.train_acc),
            fmt_f64(self.test_acc),
            fmt_opt(self.sum_abs_dtheta),
            fmt_opt(self.bound),
            fmt_f64(self.margin),
        ]
    }
}

impl AggregateRow {
    fn fields(&self) -> Vec<String> {
        let mut out = vec![fmt_f64(self.sweep_value), self.iteration.to_string(), self.n_seeds.to_string()];
        out.extend(
            [
                self.train_risk_mean,
                self.train_risk_std,
                self.test_risk_mean,
                self.test_risk_std,
                self.gap_mean,
                self.gap_std,
                self.train_acc_mean,
                self.train_acc_std,
                self.test_acc_mean,
                self.test_acc_std,
            ]
            .map(fmt_f64),
        );
        out
    }
}

impl TraceRow {
    fn fields(&self) -> Vec<String> {
        vec![
            fmt_f64(self.sweep_value),
            self.seed.to_string(),
            self.replaced_index.to_string(),
            self.iteration.to_string(),
            fmt_f64(self.sum_abs_dtheta),
            fmt_f64(self.max_output_gap),
            fmt_f64(self.max_loss_gap),
        ]
    }
}

impl BetaRow {
    fn fields(&self) -> Vec<String> {
        vec![
            fmt_f64(self.sweep_value),
            self.m.to_string(),
            fmt_f64(self.beta_hat),
            fmt_opt(self.theoretical_beta),
            fmt_opt(self.bound),
            fmt_f64(self.margin),
            fmt_f64(self.max_final_sum_abs_dtheta),
            self.n_indices.to_string(),
            self.n_seeds.to_string(),
            self.n_probes.to_string(),
            self.iterations.to_string(),
        ]
    }
}

/// Mean and sample standard deviation (`0` for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per `(sweep value, iteration)` statistics across seeds, in first-seen order.
pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(u64, usize)> = Vec::new();
    for r in rows {
        let k = (r.sweep_value.to_bits(), r.iteration);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(bits, iteration)| {
            let group: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.sweep_value.to_bits() == bits && r.iteration == iteration)
                .collect();
            let col = |f: fn(&ResultRow) -> f64| mean_std(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (train_risk_mean, train_risk_std) = col(|r| r.train_risk);
            let (test_risk_mean, test_risk_std) = col(|r| r.test_risk);
            let (gap_mean, gap_std) = col(|r| r.gap);
            let (train_acc_mean, train_acc_std) = col(|r| r.train_acc);
            let (test_acc_mean, test_acc_std) = col(|r| r.test_acc);
            AggregateRow {
                sweep_value: f64::from_bits(bits),
                iteration,
                n_seeds: group.len(),
                train_risk_mean,
                train_risk_std,
                test_risk_mean,
                test_risk_std,
                gap_mean,
                gap_std,
                train_acc_mean,
                train_acc_std,
                test_acc_mean,
                test_acc_std,
            }
        })
        .collect()
}

/// CSV text with a header line and LF endings.
pub fn to_csv(header: &[&str], records: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for r in records {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidArgument(e.to_string()))
}

impl ResultTable {
    pub fn rows_csv(&self) -> Result<String> {
        to_csv(&RESULT_COLUMNS, self.rows.iter().map(ResultRow::fields))
    }

    pub fn aggregates_csv(&self) -> Result<String> {
        to_csv(&AGGREGATE_COLUMNS, self.aggregates.iter().map(AggregateRow::fields))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

impl StabilityTable {
    pub fn traces_csv(&self) -> Result<String> {
        to_csv(&TRACE_COLUMNS, self.traces.iter().map(TraceRow::fields))
    }

    pub fn beta_csv(&self) -> Result<String> {
        to_csv(&BETA_COLUMNS, self.beta.iter().map(BetaRow::fields))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// `dir/stem.suffix.ext` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| e.to_string_lossy().into_owned());
    let mut name = String::new();
    let _ = write!(name, "{stem}.{suffix}");
    if let Some(e) = ext {
        let _ = write!(name, ".{e}");
    }
    path.with_file_name(name)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Rows CSV at `path` plus `<stem>.aggregates.csv` and `<stem>.meta.json`, or
/// one JSON document. Returns the files written.
pub fn emit_results(table: &ResultTable, path: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    match format {
        OutputFormat::Csv => {
            let agg = sibling(path, "aggregates");
            let meta = sibling(path, "meta").with_extension("json");
            write_file(path, &table.rows_csv()?)?;
            write_file(&agg, &table.aggregates_csv()?)?;
            write_file(&meta, &(serde_json::to_string_pretty(&table.meta)? + "\n"))?;
            Ok(vec![path.to_path_buf(), agg, meta])
        }
        OutputFormat::Json => {
            write_file(path, &table.to_json()?)?;
            Ok(vec![path.to_path_buf()])
        }
    }
}

/// Trace CSV at `path` plus `<stem>.beta.csv` and `<stem>.meta.json`, or one JSON document.
pub fn emit_stability(table: &StabilityTable, path: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    match format {
        OutputFormat::Csv => {
            let beta = sibling(path, "beta");
            let meta = sibling(path, "meta").with_extension("json");
            write_file(path, &table.traces_csv()?)?;
            write_file(&beta, &table.beta_csv()?)?;
            write_file(&meta, &(serde_json::to_string_pretty(&table.meta)? + "\n"))?;
            Ok(vec![path.to_path_buf(), beta, meta])
        }
        OutputFormat::Json => {
            write_file(path, &table.to_json()?)?;
            Ok(vec![path.to_path_buf()])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> Meta {
        Meta {
            artifact: "test".into(),
            version: "0".into(),
            command: "run".into(),
            config: serde_json::Value::Null,
            config_sha256: None,
            sweep_axis: "m".into(),
            seeds: vec![0],
            iterations: 0,
            eval_interval: 1,
            datasets: vec![],
            reconstructed_defaults: vec![],
        }
    }

    fn row(v: f64, seed: u64, gap: f64) -> ResultRow {
        ResultRow {
            sweep_value: v,
            seed,
            iteration: 0,
            train_risk: 0.1,
            test_risk: 0.1 + gap,
            gap,
            train_acc: 0.5,
            test_acc: 1.0 / 3.0,
            sum_abs_dtheta: None,
            bound: Some(0.1 + 0.2),
            margin: 0.72,
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = ResultTable { meta: meta(), rows: vec![], aggregates: vec![] };
        assert_eq!(t.rows_csv().unwrap(), RESULT_COLUMNS.join(",") + "\n");
    }

    #[test]
    fn one_row_round_trips() {
        let r = row(2.0, 3, 1e-17);
        let t = ResultTable { meta: meta(), rows: vec![r.clone()], aggregates: vec![] };
        let text = t.rows_csv().unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(!text.contains('\r'));
        let f: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(f[5].parse::<f64>().unwrap().to_bits(), r.gap.to_bits());
        assert_eq!(f[7].parse::<f64>().unwrap().to_bits(), r.test_acc.to_bits());
        assert_eq!(f[9].parse::<f64>().unwrap().to_bits(), (0.1f64 + 0.2).to_bits());
        assert_eq!(f[8], "");
    }

    #[test]
    fn json_rows_match_csv_lines() {
        let rows = vec![row(1.0, 0, 0.1), row(1.0, 1, 0.3), row(2.0, 0, 0.2)];
        let t = ResultTable { meta: meta(), aggregates: aggregate(&rows), rows };
        let v: serde_json::Value = serde_json::from_str(&t.to_json().unwrap()).unwrap();
        assert_eq!(v["rows"].as_array().unwrap().len(), t.rows_csv().unwrap().lines().count() - 1);
        assert!(v["meta"].is_object());
    }

    #[test]
    fn aggregates_hand_values() {
        let rows = vec![row(1.0, 0, 0.1), row(1.0, 1, 0.3), row(2.0, 0, 0.2)];
        let a = aggregate(&rows);
        assert_eq!(a.len(), 2);
        assert!((a[0].gap_mean - 0.2).abs() < 1e-15);
        assert!((a[0].gap_std - 0.02f64.sqrt()).abs() < 1e-15);
        assert_eq!((a[1].n_seeds, a[1].gap_std), (1, 0.0));
    }

    #[test]
    fn sibling_names() {
        assert_eq!(sibling(Path::new("out/r.csv"), "aggregates"), PathBuf::from("out/r.aggregates.csv"));
        assert_eq!(sibling(Path::new("r"), "beta"), PathBuf::from("r.beta"));
    }
}
