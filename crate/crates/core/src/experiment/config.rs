//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stability::DEFAULT_DELTA;
use crate::train::LossKind;

pub const DEFAULT_ITERATIONS: usize = 1000;
pub const DEFAULT_SUBLAYERS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Toy,
    Wdbc,
    Mnist,
    FashionMnist,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: DatasetKind,
    /// WDBC CSV file.
    pub path: Option<PathBuf>,
    /// Directory holding the canonical IDX training files.
    pub dir: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Kept classes for IDX data; the first maps to `+1`.
    #[serde(default = "default_classes")]
    pub classes: [u8; 2],
    pub m_train: usize,
    pub m_test: usize,
    /// Seed of the toy pool.
    #[serde(default)]
    pub toy_seed: u64,
}

fn default_classes() -> [u8; 2] {
    [0, 1]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSpec {
    pub qubits: usize,
    #[serde(default)]
    pub layers: Option<usize>,
    /// Defaults to the dataset's feature count.
    #[serde(default)]
    pub data_dim: Option<usize>,
    #[serde(default = "default_sublayers")]
    pub sublayers: usize,
}

fn default_sublayers() -> usize {
    DEFAULT_SUBLAYERS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub iterations: Option<usize>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    #[serde(default)]
    pub noise_p: f64,
    #[serde(default)]
    pub eval_interval: Option<usize>,
}

fn default_loss() -> LossKind {
    LossKind::ScaledSquared
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub layers: Option<Vec<usize>>,
    pub eta: Option<Vec<f64>>,
    pub m: Option<Vec<usize>>,
    pub p: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Layers,
    Eta,
    M,
    P,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Layers => "layers",
            SweepAxis::Eta => "eta",
            SweepAxis::M => "m",
            SweepAxis::P => "p",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySpec {
    pub n_indices: usize,
    pub probes: usize,
    /// Keys the replaced indices, replacement draws and the fixed split.
    #[serde(default)]
    pub key: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSpec {
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Loss upper bound; the loss's own bound when absent.
    #[serde(default)]
    pub loss_bound: Option<f64>,
}

impl Default for BoundSpec {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            loss_bound: None,
        }
    }
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::config("output.format", format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub circuit: CircuitSpec,
    pub optimizer: OptimizerSpec,
    pub sweep: SweepSpec,
    #[serde(default)]
    pub stability: Option<StabilitySpec>,
    #[serde(default)]
    pub bound: BoundSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// One value of the swept quantity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum SweepValue {
    Layers(usize),
    Eta(f64),
    M(usize),
    P(f64),
}

impl SweepValue {
    pub fn as_f64(self) -> f64 {
        match self {
            SweepValue::Layers(v) | SweepValue::M(v) => v as f64,
            SweepValue::Eta(v) | SweepValue::P(v) => v,
        }
    }
}

/// Settings of one sweep cell after applying the swept value to the base config.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSettings {
    pub layers: usize,
    pub eta: f64,
    pub m_train: usize,
    pub p: f64,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| format!("bytes {}..{}", s.start, s.end))
                .unwrap_or_else(|| "<document>".into());
            Error::config(field, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates `path`; relative dataset paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let d = &mut self.dataset;
        for p in [&mut d.path, &mut d.dir, &mut d.images, &mut d.labels].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn axis(&self) -> Result<SweepAxis> {
        let s = &self.sweep;
        let set: Vec<SweepAxis> = [
            (s.layers.is_some(), SweepAxis::Layers),
            (s.eta.is_some(), SweepAxis::Eta),
            (s.m.is_some(), SweepAxis::M),
            (s.p.is_some(), SweepAxis::P),
        ]
        .into_iter()
        .filter_map(|(on, a)| on.then_some(a))
        .collect();
        match set.as_slice() {
            [a] => Ok(*a),
            [] => Err(Error::config("sweep", "exactly one of layers, eta, m, p is required")),
            _ => Err(Error::config("sweep", "only one sweep axis may be set")),
        }
    }

    pub fn sweep_values(&self) -> Result<Vec<SweepValue>> {
        let s = &self.sweep;
        Ok(match self.axis()? {
            SweepAxis::Layers => s.layers.iter().flatten().map(|&v| SweepValue::Layers(v)).collect(),
            SweepAxis::Eta => s.eta.iter().flatten().map(|&v| SweepValue::Eta(v)).collect(),
            SweepAxis::M => s.m.iter().flatten().map(|&v| SweepValue::M(v)).collect(),
            SweepAxis::P => s.p.iter().flatten().map(|&v| SweepValue::P(v)).collect(),
        })
    }

    /// Explicit seeds, or `0..5` (`0..10` for learning-rate sweeps).
    pub fn seeds(&self) -> Vec<u64> {
        match &self.optimizer.seeds {
            Some(s) => s.clone(),
            None if self.sweep.eta.is_some() => (0..10).collect(),
            None => (0..5).collect(),
        }
    }

    pub fn iterations(&self) -> usize {
        self.optimizer.iterations.unwrap_or(DEFAULT_ITERATIONS)
    }

    /// `max(1, T/100)` unless set.
    pub fn eval_interval(&self) -> usize {
        self.optimizer
            .eval_interval
            .unwrap_or_else(|| (self.iterations() / 100).max(1))
    }

    pub fn cell(&self, value: SweepValue) -> CellSettings {
        let mut c = CellSettings {
            layers: self.circuit.layers.unwrap_or(0),
            eta: self.optimizer.eta.unwrap_or(0.0),
            m_train: self.dataset.m_train,
            p: self.optimizer.noise_p,
        };
        match value {
            SweepValue::Layers(v) => c.layers = v,
            SweepValue::Eta(v) => c.eta = v,
            SweepValue::M(v) => c.m_train = v,
            SweepValue::P(v) => c.p = v,
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let axis = self.axis()?;
        let values = self.sweep_values()?;
        if values.is_empty() {
            return Err(Error::config(format!("sweep.{}", axis.name()), "values must be non-empty"));
        }
        if self.seeds().is_empty() {
            return Err(Error::config("optimizer.seeds", "must be non-empty"));
        }
        if axis != SweepAxis::Layers && self.circuit.layers.is_none() {
            return Err(Error::config("circuit.layers", "required unless sweeping layers"));
        }
        if axis != SweepAxis::Eta && self.optimizer.eta.is_none() {
            return Err(Error::config("optimizer.eta", "required unless sweeping eta"));
        }
        if self.circuit.qubits == 0 {
            return Err(Error::config("circuit.qubits", "must be at least 1"));
        }
        if self.circuit.sublayers == 0 {
            return Err(Error::config("circuit.sublayers", "must be at least 1"));
        }
        if self.optimizer.eval_interval == Some(0) {
            return Err(Error::config("optimizer.eval_interval", "must be at least 1"));
        }
        if !(self.bound.delta > 0.0 && self.bound.delta < 1.0) {
            return Err(Error::config("bound.delta", "must lie in (0, 1)"));
        }
        if let Some(s) = &self.stability {
            if s.n_indices == 0 {
                return Err(Error::config("stability.n_indices", "must be at least 1"));
            }
            if s.probes == 0 {
                return Err(Error::config("stability.probes", "must be at least 1"));
            }
        }
        let d = &self.dataset;
        match d.name {
            DatasetKind::Wdbc if d.path.is_none() => {
                return Err(Error::config("dataset.path", "required for wdbc"));
            }
            DatasetKind::Mnist | DatasetKind::FashionMnist
                if d.dir.is_none() && (d.images.is_none() || d.labels.is_none()) =>
            {
                return Err(Error::config("dataset.dir", "IDX data needs dir or images and labels"));
            }
            _ => {}
        }
        if d.m_test == 0 {
            return Err(Error::config("dataset.m_test", "must be at least 1"));
        }
        for v in values {
            let c = self.cell(v);
            let field = format!("sweep.{}", axis.name());
            if c.layers == 0 {
                return Err(Error::config(field, "layer count must be at least 1"));
            }
            if !(c.eta.is_finite() && c.eta >= 0.0) {
                return Err(Error::config(field, format!("learning rate {} must be finite and non-negative", c.eta)));
            }
            if c.m_train == 0 {
                return Err(Error::config(field, "training size must be at least 1"));
            }
            if !(0.0..=1.0).contains(&c.p) {
                return Err(Error::config(field, format!("noise level {} outside [0, 1]", c.p)));
            }
        }
        Ok(())
    }
}
