//! Sweep execution. Cells run in parallel and are assembled in
//! `(value index, seed)` order, so output never depends on scheduling.

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::ansatz::{build_circuit, ReuploadCircuit};
use crate::data::{load_idx_pair, load_wdbc_raw, mnist_paths, split_and_scale, subsample_split, synthetic_toy, Dataset, RawTable};
use crate::error::{Error, Result};
use crate::qcore::observable::Observable;
use crate::stability::{
    coupled_divergence, empirical_beta, generalization_bound, noisy_generalization_bound, noisy_theoretical_beta,
    replacement_for, stable_training_margin, BetaSpec, BoundInputs,
};
use crate::train::{train_eval, TrainConfig};

use super::config::{CellSettings, DatasetKind, ExperimentConfig, SweepValue};
use super::results::{aggregate, BetaRow, DatasetRecord, Meta, ResultRow, ResultTable, StabilityTable, TraceRow};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOptions {
    /// Added to every configured seed.
    pub seed_offset: u64,
    /// Raw config bytes, hashed into the result metadata.
    pub config_text: Option<String>,
}

/// Where training and test sets are drawn from.
pub enum Pool {
    Toy { seed: u64 },
    Table(RawTable),
    Images(Dataset),
}

impl Pool {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let d = &cfg.dataset;
        match d.name {
            DatasetKind::Toy => Ok(Pool::Toy { seed: d.toy_seed }),
            DatasetKind::Wdbc => Ok(Pool::Table(load_wdbc_raw(d.path.as_deref().expect("validated"))?)),
            DatasetKind::Mnist | DatasetKind::FashionMnist => {
                let (images, labels) = match (&d.images, &d.labels) {
                    (Some(i), Some(l)) => (i.clone(), l.clone()),
                    _ => mnist_paths(d.dir.as_deref().expect("validated"), true),
                };
                Ok(Pool::Images(load_idx_pair(&images, &labels, (d.classes[0], d.classes[1]))?))
            }
        }
    }

    /// Disjoint train/test sets keyed by `seed`.
    pub fn split(&self, m_train: usize, m_test: usize, seed: u64) -> Result<(Dataset, Dataset)> {
        match self {
            Pool::Toy { seed: pool_seed } => {
                let pool = synthetic_toy(m_train + m_test, *pool_seed)?;
                subsample_split(&pool, m_train, m_test, seed)
            }
            Pool::Table(t) => split_and_scale(t, m_train, m_test, seed),
            Pool::Images(ds) => subsample_split(ds, m_train, m_test, seed),
        }
    }

    fn record(&self, cfg: &ExperimentConfig) -> Result<DatasetRecord> {
        Ok(match self {
            Pool::Toy { seed } => {
                let m = cfg
                    .sweep_values()?
                    .into_iter()
                    .map(|v| cfg.cell(v).m_train)
                    .max()
                    .unwrap_or(cfg.dataset.m_train);
                let pool = synthetic_toy(m + cfg.dataset.m_test, *seed)?;
                DatasetRecord {
                    name: pool.name.clone(),
                    content_sha256: pool.content_digest(),
                    files: vec![],
                }
            }
            Pool::Table(t) => {
                let mut h = Sha256::new();
                for (row, y) in t.features.iter().zip(&t.labels) {
                    for v in row {
                        h.update(v.to_bits().to_le_bytes());
                    }
                    h.update(y.to_bits().to_le_bytes());
                }
                DatasetRecord {
                    name: t.name.clone(),
                    content_sha256: hex::encode(h.finalize()),
                    files: t.provenance.clone(),
                }
            }
            Pool::Images(ds) => DatasetRecord {
                name: ds.name.clone(),
                content_sha256: ds.content_digest(),
                files: ds.provenance.clone(),
            },
        })
    }
}

struct Cell {
    circuit: ReuploadCircuit,
    obs: Observable<f64>,
    train: TrainConfig,
}

fn cell_setup(cfg: &ExperimentConfig, s: &CellSettings, feature_dim: usize, seed: u64) -> Result<Cell> {
    let d = cfg.circuit.data_dim.unwrap_or(feature_dim);
    if d != feature_dim {
        return Err(Error::config(
            "circuit.data_dim",
            format!("{d} does not match the dataset's {feature_dim} features"),
        ));
    }
    let circuit = build_circuit(cfg.circuit.qubits, s.layers, d, cfg.circuit.sublayers)?;
    let obs = Observable::z0(cfg.circuit.qubits)?;
    let train = TrainConfig {
        eta: s.eta,
        iterations: cfg.iterations(),
        seed,
        loss: cfg.optimizer.loss,
        noise_p: s.p,
        eval_interval: Some(cfg.eval_interval()),
        keep_trajectory: false,
    };
    Ok(Cell { circuit, obs, train })
}

fn bound_inputs(cfg: &ExperimentConfig, cell: &Cell, m: usize, iterations: usize) -> BoundInputs {
    let mut b = BoundInputs::for_circuit(
        &cell.circuit,
        cell.obs.spectral_norm(),
        cell.train.loss,
        m,
        iterations,
        cell.train.eta,
    );
    b.delta = cfg.bound.delta;
    if let Some(mb) = cfg.bound.loss_bound {
        b.loss_bound = mb;
    }
    b.p = cell.train.noise_p;
    b
}

/// `None` when the closed form overflows.
fn finite_or_none(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Overflow { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn meta(cfg: &ExperimentConfig, opts: &RunOptions, command: &str, pool: &Pool) -> Result<Meta> {
    let mut defaults = Vec::new();
    if cfg.optimizer.iterations.is_none() {
        defaults.push("optimizer.iterations".to_string());
    }
    if cfg.optimizer.seeds.is_none() {
        defaults.push("optimizer.seeds".to_string());
    }
    if cfg.optimizer.eval_interval.is_none() {
        defaults.push("optimizer.eval_interval".to_string());
    }
    Ok(Meta {
        artifact: "reupload".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        config: serde_json::to_value(cfg)?,
        config_sha256: opts
            .config_text
            .as_ref()
            .map(|t| hex::encode(Sha256::digest(t.as_bytes()))),
        sweep_axis: cfg.axis()?.name().into(),
        seeds: seeds(cfg, opts),
        iterations: cfg.iterations(),
        eval_interval: cfg.eval_interval(),
        datasets: vec![pool.record(cfg)?],
        reconstructed_defaults: defaults,
    })
}

fn seeds(cfg: &ExperimentConfig, opts: &RunOptions) -> Vec<u64> {
    cfg.seeds().into_iter().map(|s| s.wrapping_add(opts.seed_offset)).collect()
}

/// Trains every `(sweep value, seed)` cell and records its risk curve.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ResultTable> {
    cfg.validate()?;
    let pool = Pool::load(cfg)?;
    run_experiment_on(cfg, opts, &pool)
}

/// As [`run_experiment`] with an already loaded pool.
pub fn run_experiment_on(cfg: &ExperimentConfig, opts: &RunOptions, pool: &Pool) -> Result<ResultTable> {
    cfg.validate()?;
    let values = cfg.sweep_values()?;
    let seeds = seeds(cfg, opts);
    let cells: Vec<(SweepValue, u64)> = values
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let blocks: Vec<Vec<ResultRow>> = cells
        .par_iter()
        .map(|&(value, seed)| run_cell(cfg, pool, value, seed))
        .collect::<Result<_>>()?;
    let rows: Vec<ResultRow> = blocks.into_iter().flatten().collect();
    Ok(ResultTable {
        meta: meta(cfg, opts, "run", pool)?,
        aggregates: aggregate(&rows),
        rows,
    })
}

fn run_cell(cfg: &ExperimentConfig, pool: &Pool, value: SweepValue, seed: u64) -> Result<Vec<ResultRow>> {
    let s = cfg.cell(value);
    let (train, test) = pool.split(s.m_train, cfg.dataset.m_test, seed)?;
    let cell = cell_setup(cfg, &s, train.feature_dim, seed)?;
    let run = train_eval(&train, Some(&test), &cell.circuit, &cell.obs, &cell.train)?;
    let margin = stable_training_margin(&bound_inputs(cfg, &cell, s.m_train, 0)).value;
    run.curve
        .iter()
        .map(|pt| {
            let test_risk = pt.test_risk.expect("test set given");
            let b = bound_inputs(cfg, &cell, s.m_train, pt.iteration);
            Ok(ResultRow {
                sweep_value: value.as_f64(),
                seed,
                iteration: pt.iteration,
                train_risk: pt.train_risk,
                test_risk,
                gap: test_risk - pt.train_risk,
                train_acc: pt.train_acc,
                test_acc: pt.test_acc.expect("test set given"),
                sum_abs_dtheta: None,
                bound: finite_or_none(noisy_generalization_bound(&b))?,
                margin,
            })
        })
        .collect()
}

/// Coupled-divergence traces and the stability estimate for every sweep value.
///
/// Per value the training set `S` is fixed (split keyed by `stability.key`);
/// seeds vary the SGD randomness only. Probes are the first examples of the
/// held-out split, which also supplies the replacements.
pub fn run_stability(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<StabilityTable> {
    cfg.validate()?;
    let pool = Pool::load(cfg)?;
    run_stability_on(cfg, opts, &pool)
}

pub fn run_stability_on(cfg: &ExperimentConfig, opts: &RunOptions, pool: &Pool) -> Result<StabilityTable> {
    cfg.validate()?;
    let stab = cfg
        .stability
        .as_ref()
        .ok_or_else(|| Error::config("stability", "section required for stability runs"))?;
    let seeds = seeds(cfg, opts);
    let mut traces = Vec::new();
    let mut beta = Vec::new();
    for value in cfg.sweep_values()? {
        let s = cfg.cell(value);
        let (train, held_out) = pool.split(s.m_train, cfg.dataset.m_test, stab.key)?;
        let n_probes = stab.probes.min(held_out.len());
        let probes = held_out.select(&(0..n_probes).collect::<Vec<_>>());
        let mut cell = cell_setup(cfg, &s, train.feature_dim, 0)?;
        cell.train.eval_interval = None;
        let spec = BetaSpec {
            n_indices: stab.n_indices,
            seeds: seeds.clone(),
            key: stab.key,
        };
        let est = empirical_beta(&train, &held_out, &probes, &spec, &cell.circuit, &cell.obs, &cell.train)?;

        let pairs: Vec<(usize, u64)> = est
            .indices
            .iter()
            .flat_map(|&i| seeds.iter().map(move |&sd| (i, sd)))
            .collect();
        let blocks: Vec<Vec<TraceRow>> = pairs
            .par_iter()
            .map(|&(i, sd)| {
                let repl = replacement_for(&held_out, i, stab.key)?;
                let tc = TrainConfig { seed: sd, ..cell.train.clone() };
                let tr = coupled_divergence(&train, i, &repl, &probes, &cell.circuit, &cell.obs, &tc)?;
                Ok((0..tr.sum_abs_dtheta.len())
                    .map(|t| TraceRow {
                        sweep_value: value.as_f64(),
                        seed: sd,
                        replaced_index: i,
                        iteration: t,
                        sum_abs_dtheta: tr.sum_abs_dtheta[t],
                        max_output_gap: tr.max_output_gap[t],
                        max_loss_gap: tr.max_loss_gap[t],
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        traces.extend(blocks.into_iter().flatten());

        let b = bound_inputs(cfg, &cell, s.m_train, cfg.iterations());
        let theoretical = finite_or_none(noisy_theoretical_beta(&b))?;
        let bound = match theoretical {
            Some(t) => Some(generalization_bound(t, &b)?),
            None => None,
        };
        beta.push(BetaRow {
            sweep_value: value.as_f64(),
            m: s.m_train,
            beta_hat: est.beta,
            theoretical_beta: theoretical,
            bound,
            margin: stable_training_margin(&b).value,
            max_final_sum_abs_dtheta: est.max_final_sum_abs_dtheta,
            n_indices: est.indices.len(),
            n_seeds: est.n_seeds,
            n_probes: est.n_probes,
            iterations: cfg.iterations(),
        });
    }
    Ok(StabilityTable {
        meta: meta(cfg, opts, "stability", pool)?,
        traces,
        beta,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 || points.iter().any(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return None;
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
