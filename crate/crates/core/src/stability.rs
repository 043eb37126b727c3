//! Uniform-stability measurement for SGD and the closed-form bounds.
//!
//! Two training sets `S` and `Sⁱ` differ only at index `i`. Both runs share
//! the initial parameters and the per-iteration example draws, so any
//! divergence comes from the iterations that picked index `i`.

use std::f64::consts::PI;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::ansatz::ReuploadCircuit;
use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::noise::check_probability;
use crate::qcore::observable::Observable;
use crate::rng::{keyed, Domain};
use crate::train::{init_params, model_output, sample_index, sgd_step, train, LossKind, TrainConfig};

/// Per-iteration divergence of a coupled pair of runs; index `t` holds the
/// state after `t` updates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityTrace {
    pub replaced_index: usize,
    pub seed: u64,
    /// `Σ_k |θ_S,t^(k) − θ_Sⁱ,t^(k)|`.
    pub sum_abs_dtheta: Vec<f64>,
    /// `max_z |f_S(z) − f_Sⁱ(z)|` over the probe set.
    pub max_output_gap: Vec<f64>,
    /// `max_z |ℓ_S(z) − ℓ_Sⁱ(z)|` over the probe set.
    pub max_loss_gap: Vec<f64>,
}

fn check_index(dataset: &Dataset, i: usize) -> Result<()> {
    if i >= dataset.len() {
        return Err(Error::InvalidArgument(format!(
            "replaced index {i} out of range for {} samples",
            dataset.len()
        )));
    }
    Ok(())
}

fn probe_gaps(
    a: &[f64],
    b: &[f64],
    probes: &Dataset,
    circuit: &ReuploadCircuit,
    obs: &Observable<f64>,
    config: &TrainConfig,
) -> Result<(f64, f64)> {
    let mut out_gap = 0.0f64;
    let mut loss_gap = 0.0f64;
    for z in &probes.samples {
        let fa = model_output(circuit, a, &z.x, obs, config.noise_p)?;
        let fb = model_output(circuit, b, &z.x, obs, config.noise_p)?;
        out_gap = out_gap.max((fa - fb).abs());
        loss_gap = loss_gap.max((config.loss.value(fa, z.y) - config.loss.value(fb, z.y)).abs());
    }
    Ok((out_gap, loss_gap))
}

/// Trains on `S` and on `S` with sample `i` replaced by `replacement`, in
/// lock-step, recording the divergence after every iteration.
pub fn coupled_divergence(
    dataset: &Dataset,
    i: usize,
    replacement: &Sample,
    probes: &Dataset,
    circuit: &ReuploadCircuit,
    obs: &Observable<f64>,
    config: &TrainConfig,
) -> Result<StabilityTrace> {
    check_index(dataset, i)?;
    config.validate()?;
    if probes.is_empty() {
        return Err(Error::InvalidArgument("probe set is empty".into()));
    }
    let other = dataset.replaced(i, replacement.clone())?;
    let m = dataset.len();
    let mut a = init_params(config.seed, circuit.n_params());
    let mut b = a.clone();
    let cap = config.iterations + 1;
    let mut trace = StabilityTrace {
        replaced_index: i,
        seed: config.seed,
        sum_abs_dtheta: Vec::with_capacity(cap),
        max_output_gap: Vec::with_capacity(cap),
        max_loss_gap: Vec::with_capacity(cap),
    };
    let push = |a: &[f64], b: &[f64], trace: &mut StabilityTrace| -> Result<()> {
        trace.sum_abs_dtheta.push(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum());
        let (og, lg) = probe_gaps(a, b, probes, circuit, obs, config)?;
        trace.max_output_gap.push(og);
        trace.max_loss_gap.push(lg);
        Ok(())
    };
    push(&a, &b, &mut trace)?;
    for t in 0..config.iterations {
        let k = sample_index(config.seed, t, m);
        a = sgd_step(&a, &dataset.samples[k], config.eta, circuit, obs, config.loss, config.noise_p)?;
        b = sgd_step(&b, &other.samples[k], config.eta, circuit, obs, config.loss, config.noise_p)?;
        push(&a, &b, &mut trace)?;
    }
    Ok(trace)
}

/// Sizes of the stability estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct BetaSpec {
    /// Number of replaced indices (all indices when `≥ m`).
    pub n_indices: usize,
    pub seeds: Vec<u64>,
    /// Keys the choice of indices and of replacement examples.
    pub key: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BetaEstimate {
    /// `β̂ = ½ max_{i, z} |mean_s ℓ(A_S, z) − mean_s ℓ(A_Sⁱ, z)|`.
    pub beta: f64,
    pub indices: Vec<usize>,
    pub n_seeds: usize,
    pub n_probes: usize,
    /// `max` over all pairs of the final `Σ|Δθ|`.
    pub max_final_sum_abs_dtheta: f64,
}

/// Indices replaced by [`empirical_beta`], ascending.
pub fn replaced_indices(m: usize, n_indices: usize, key: u64) -> Vec<usize> {
    if n_indices >= m {
        return (0..m).collect();
    }
    let mut idx = sample_indices(&mut keyed(key, Domain::BetaIndices, 0), m, n_indices).into_vec();
    idx.sort_unstable();
    idx
}

/// Replacement example for index `i`, drawn from `held_out`.
pub fn replacement_for(held_out: &Dataset, i: usize, key: u64) -> Result<Sample> {
    if held_out.is_empty() {
        return Err(Error::InvalidArgument("no held-out examples for replacement".into()));
    }
    let k = keyed(key, Domain::Replacement, i as u64).random_range(0..held_out.len());
    Ok(held_out.samples[k].clone())
}

/// Empirical uniform-stability estimate.
///
/// A lower estimate of the supremum in the definition: the maximum runs over
/// `spec.n_indices` replaced indices and a finite probe set only.
pub fn empirical_beta(
    dataset: &Dataset,
    held_out: &Dataset,
    probes: &Dataset,
    spec: &BetaSpec,
    circuit: &ReuploadCircuit,
    obs: &Observable<f64>,
    config: &TrainConfig,
) -> Result<BetaEstimate> {
    if probes.is_empty() {
        return Err(Error::InvalidArgument("probe set is empty".into()));
    }
    if spec.n_indices == 0 || spec.seeds.is_empty() {
        return Err(Error::InvalidArgument("need at least one index and one seed".into()));
    }
    config.validate()?;
    let indices = replaced_indices(dataset.len(), spec.n_indices, spec.key);
    let replacements = indices
        .iter()
        .map(|&i| replacement_for(held_out, i, spec.key))
        .collect::<Result<Vec<_>>>()?;

    let with_seed = |s: u64| TrainConfig {
        seed: s,
        eval_interval: None,
        keep_trajectory: false,
        ..config.clone()
    };
    let probe_losses = |theta: &[f64]| -> Result<Vec<f64>> {
        probes
            .samples
            .iter()
            .map(|z| Ok(config.loss.value(model_output(circuit, theta, &z.x, obs, config.noise_p)?, z.y)))
            .collect()
    };

    let base: Vec<(Vec<f64>, Vec<f64>)> = spec
        .seeds
        .par_iter()
        .map(|&s| {
            let run = train(dataset, circuit, obs, &with_seed(s))?;
            let losses = probe_losses(&run.final_theta)?;
            Ok((run.final_theta, losses))
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..indices.len())
        .flat_map(|a| (0..spec.seeds.len()).map(move |b| (a, b)))
        .collect();
    let perturbed: Vec<(f64, Vec<f64>)> = jobs
        .par_iter()
        .map(|&(a, b)| {
            let other = dataset.replaced(indices[a], replacements[a].clone())?;
            let run = train(&other, circuit, obs, &with_seed(spec.seeds[b]))?;
            let dtheta = run
                .final_theta
                .iter()
                .zip(&base[b].0)
                .map(|(x, y)| (x - y).abs())
                .sum();
            Ok((dtheta, probe_losses(&run.final_theta)?))
        })
        .collect::<Result<_>>()?;

    let n_seeds = spec.seeds.len() as f64;
    let n_probes = probes.len();
    let mean_base: Vec<f64> = (0..n_probes)
        .map(|z| base.iter().map(|(_, l)| l[z]).sum::<f64>() / n_seeds)
        .collect();
    let mut beta = 0.0f64;
    let mut max_dtheta = 0.0f64;
    for a in 0..indices.len() {
        let rows = &perturbed[a * spec.seeds.len()..(a + 1) * spec.seeds.len()];
        for z in 0..n_probes {
            let mean = rows.iter().map(|(_, l)| l[z]).sum::<f64>() / n_seeds;
            beta = beta.max((mean_base[z] - mean).abs());
        }
        for (d, _) in rows {
            max_dtheta = max_dtheta.max(*d);
        }
    }
    Ok(BetaEstimate {
        beta: 0.5 * beta,
        indices,
        n_seeds: spec.seeds.len(),
        n_probes,
        max_final_sum_abs_dtheta: max_dtheta,
    })
}

/// Every quantity entering the closed-form bounds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundInputs {
    pub layers: usize,
    pub data_dim: usize,
    /// `K`, the number of trainable parameters.
    pub n_params: usize,
    pub m: usize,
    pub iterations: usize,
    pub eta: f64,
    /// `‖M‖∞`.
    pub norm_m: f64,
    /// Loss Lipschitz constant `C1`.
    pub c1: f64,
    /// Loss smoothness constant `C2`.
    pub c2: f64,
    /// Loss upper bound.
    pub loss_bound: f64,
    pub delta: f64,
    pub p: f64,
}

pub const DEFAULT_DELTA: f64 = 0.05;

impl BoundInputs {
    /// Inputs for `circuit` with the constants of `loss`.
    pub fn for_circuit(
        circuit: &ReuploadCircuit,
        norm_m: f64,
        loss: LossKind,
        m: usize,
        iterations: usize,
        eta: f64,
    ) -> Self {
        Self {
            layers: circuit.layers(),
            data_dim: circuit.data_dim(),
            n_params: circuit.n_params(),
            m,
            iterations,
            eta,
            norm_m,
            c1: loss.lipschitz(),
            c2: loss.smoothness(),
            loss_bound: loss.bound(),
            delta: DEFAULT_DELTA,
            p: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidArgument("m must be at least 1".into()));
        }
        for (name, v) in [
            ("eta", self.eta),
            ("norm_m", self.norm_m),
            ("c1", self.c1),
            ("c2", self.c2),
            ("loss_bound", self.loss_bound),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        check_probability(self.p)?;
        Ok(())
    }

    fn check_delta(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta {} outside (0, 1)", self.delta)));
        }
        Ok(())
    }
}

/// `Σ_{t=1..T} r^{t−1}` with `r = 1 + ε`, accurate for small `ε`.
fn geometric_sum(eps: f64, t: usize) -> f64 {
    if eps == 0.0 {
        return t as f64;
    }
    (t as f64 * eps.ln_1p()).exp_m1() / eps
}

fn finite(v: f64, factor: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Overflow { factor })
    }
}

/// `C1‖M‖ (1−p)^K (1−p)^{LD} · 8πηC2K‖M‖LD/m · Σ_{t=1..T} (1 + 2ηC2K‖M‖(1−p)^K)^{t−1}`.
fn beta_closed_form(b: &BoundInputs, p: f64) -> Result<f64> {
    b.validate()?;
    check_probability(p)?;
    let k = b.n_params as f64;
    let ld = (b.layers * b.data_dim) as f64;
    let damp_k = (1.0 - p).powf(k);
    let damp_ld = (1.0 - p).powf(ld);
    let step = finite(8.0 * PI * b.eta * b.c2 * k * b.norm_m * ld / b.m as f64, "per-step increment")?;
    let eps = 2.0 * b.eta * b.c2 * k * b.norm_m * damp_k;
    let sum = finite(geometric_sum(eps, b.iterations), "geometric sum")?;
    finite(b.c1 * b.norm_m * damp_k * damp_ld * step * sum, "stability bound")
}

/// Uniform-stability bound of noiseless SGD after `T` iterations.
pub fn theoretical_beta(b: &BoundInputs) -> Result<f64> {
    beta_closed_form(b, 0.0)
}

/// Uniform-stability bound under local depolarizing noise of strength `b.p`.
pub fn noisy_theoretical_beta(b: &BoundInputs) -> Result<f64> {
    beta_closed_form(b, b.p)
}

/// `2β + (4mβ + M)·√(ln(1/δ) / 2m)`.
pub fn generalization_bound(beta: f64, b: &BoundInputs) -> Result<f64> {
    b.check_delta()?;
    if beta.is_nan() || beta < 0.0 {
        return Err(Error::InvalidArgument(format!("beta {beta} must be non-negative")));
    }
    let m = b.m as f64;
    let root = ((1.0 / b.delta).ln() / (2.0 * m)).sqrt();
    finite(2.0 * beta + (4.0 * m * beta + b.loss_bound) * root, "generalization bound")
}

/// [`generalization_bound`] of [`theoretical_beta`].
pub fn theoretical_generalization_bound(b: &BoundInputs) -> Result<f64> {
    generalization_bound(theoretical_beta(b)?, b)
}

/// [`generalization_bound`] of [`noisy_theoretical_beta`].
pub fn noisy_generalization_bound(b: &BoundInputs) -> Result<f64> {
    generalization_bound(noisy_theoretical_beta(b)?, b)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Margin {
    /// `ηK‖M‖∞`.
    pub value: f64,
    /// Set when the value is at least 1.
    pub unstable: bool,
}

pub fn stable_training_margin(b: &BoundInputs) -> Margin {
    let value = b.eta * b.n_params as f64 * b.norm_m;
    Margin {
        value,
        unstable: value >= 1.0,
    }
}
