//! Loss, single-example SGD, and risk evaluation.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::{forward, ReuploadCircuit};
use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::grad::loss_grad_with;
use crate::noise::{check_probability, noisy_forward};
use crate::qcore::observable::Observable;
use crate::rng::{keyed, Domain};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `ℓ(f, y) = (f − y)² / 4`.
    #[default]
    ScaledSquared,
}

impl LossKind {
    pub fn value<T: Real>(self, f: T, y: T) -> T {
        match self {
            LossKind::ScaledSquared => (f - y) * (f - y) / T::lit(4.0),
        }
    }

    /// `∂ℓ/∂f`.
    pub fn derivative<T: Real>(self, f: T, y: T) -> T {
        match self {
            LossKind::ScaledSquared => (f - y) / T::lit(2.0),
        }
    }

    /// Lipschitz constant `C1` in `f` on `|f| ≤ 1`.
    pub fn lipschitz(self) -> f64 {
        match self {
            LossKind::ScaledSquared => 1.0,
        }
    }

    /// Lipschitz constant `C2` of `∂ℓ/∂f` in `f`.
    pub fn smoothness(self) -> f64 {
        match self {
            LossKind::ScaledSquared => 0.5,
        }
    }

    /// Upper bound `M` of the loss on `|f| ≤ 1`, `y = ±1`.
    pub fn bound(self) -> f64 {
        match self {
            LossKind::ScaledSquared => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::ScaledSquared => "scaled_squared",
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scaled_squared" => Ok(LossKind::ScaledSquared),
            other => Err(Error::UnknownLoss(other.to_string())),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Loss of output `f` against label `y`.
pub fn loss(f: f64, y: f64, kind: LossKind) -> f64 {
    kind.value(f, y)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub eta: f64,
    pub iterations: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub noise_p: f64,
    /// Record risks every this many iterations (and at 0 and `T`).
    pub eval_interval: Option<usize>,
    pub keep_trajectory: bool,
}

impl TrainConfig {
    pub fn new(eta: f64, iterations: usize, seed: u64) -> Self {
        Self {
            eta,
            iterations,
            seed,
            loss: LossKind::ScaledSquared,
            noise_p: 0.0,
            eval_interval: None,
            keep_trajectory: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be finite and non-negative", self.eta)));
        }
        check_probability(self.noise_p)?;
        if self.eval_interval == Some(0) {
            return Err(Error::InvalidArgument("eval interval must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub iteration: usize,
    pub train_risk: f64,
    pub train_acc: f64,
    pub test_risk: Option<f64>,
    pub test_acc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRun {
    pub initial_theta: Vec<f64>,
    pub final_theta: Vec<f64>,
    /// `θ_t` for `t = 0..=T` when requested.
    pub trajectory: Option<Vec<Vec<f64>>>,
    /// Example index drawn at each iteration.
    pub draws: Vec<usize>,
    pub curve: Vec<CurvePoint>,
}

/// Initial parameters, uniform on `[0, 2π)`, keyed by `seed`.
pub fn init_params(seed: u64, k: usize) -> Vec<f64> {
    let mut rng = keyed(seed, Domain::Init, 0);
    (0..k).map(|_| rng.random_range(0.0..TAU)).collect()
}

/// Example index used at iteration `t`; a function of `(seed, t, m)` only.
pub fn sample_index(seed: u64, t: usize, m: usize) -> usize {
    keyed(seed, Domain::SampleDraw, t as u64).random_range(0..m)
}

/// Circuit output, through the depolarizing simulation when `p > 0`.
pub fn model_output(circuit: &ReuploadCircuit, theta: &[f64], x: &[f64], obs: &Observable<f64>, p: f64) -> Result<f64> {
    if p > 0.0 {
        noisy_forward(circuit, theta, x, obs, p)
    } else {
        forward(circuit, theta, x, obs)
    }
}

/// `θ′ = θ − η ∇ℓ(f(θ, x), y)`.
#[allow(clippy::too_many_arguments)]
pub fn sgd_step(
    theta: &[f64],
    sample: &Sample,
    eta: f64,
    circuit: &ReuploadCircuit,
    obs: &Observable<f64>,
    loss: LossKind,
    noise_p: f64,
) -> Result<Vec<f64>> {
    circuit.check_inputs(theta, &sample.x)?;
    circuit.check_observable(obs)?;
    if eta == 0.0 {
        return Ok(theta.to_vec());
    }
    let grad = loss_grad_with(theta, sample.y, loss, |t| model_output(circuit, t, &sample.x, obs, noise_p))?;
    Ok(theta.iter().zip(&grad).map(|(t, g)| t - eta * g).collect())
}

/// Runs `T` SGD iterations on `dataset`.
pub fn train(dataset: &Dataset, circuit: &ReuploadCircuit, obs: &Observable<f64>, config: &TrainConfig) -> Result<TrainRun> {
    train_eval(dataset, None, circuit, obs, config)
}

/// As [`train`], also recording test risk on `test` along the curve.
pub fn train_eval(
    dataset: &Dataset,
    test: Option<&Dataset>,
    circuit: &ReuploadCircuit,
    obs: &Observable<f64>,
    config: &TrainConfig,
) -> Result<TrainRun> {
    config.validate()?;
    let init = init_params(config.seed, circuit.n_params());
    train_from(dataset, test, circuit, obs, config, init)
}

/// As [`train_eval`] starting from explicit parameters.
pub fn train_from(
    dataset: &Dataset,
    test: Option<&Dataset>,
    circuit: &ReuploadCircuit,
    obs: &Observable<f64>,
    config: &TrainConfig,
    init: Vec<f64>,
) -> Result<TrainRun> {
    config.validate()?;
    let m = dataset.len();
    if m == 0 {
        return Err(Error::EmptyDataset);
    }
    if dataset.feature_dim != circuit.data_dim() {
        return Err(Error::DimensionMismatch(format!(
            "dataset has {} features, circuit expects {}",
            dataset.feature_dim,
            circuit.data_dim()
        )));
    }
    let t_max = config.iterations;
    let mut theta = init.clone();
    let mut draws = Vec::with_capacity(t_max);
    let mut trajectory = config.keep_trajectory.then(|| vec![theta.clone()]);
    let mut curve = Vec::new();
    let p = config.noise_p;
    let record = |t: usize, theta: &[f64], curve: &mut Vec<CurvePoint>| -> Result<()> {
        let (train_risk, train_acc) = risk_and_accuracy(theta, dataset, circuit, obs, config.loss, p)?;
        let (test_risk, test_acc) = match test {
            Some(ts) => {
                let (r, a) = risk_and_accuracy(theta, ts, circuit, obs, config.loss, p)?;
                (Some(r), Some(a))
            }
            None => (None, None),
        };
        curve.push(CurvePoint {
            iteration: t,
            train_risk,
            train_acc,
            test_risk,
            test_acc,
        });
        Ok(())
    };
    if config.eval_interval.is_some() {
        record(0, &theta, &mut curve)?;
    }
    for t in 0..t_max {
        let i = sample_index(config.seed, t, m);
        draws.push(i);
        theta = sgd_step(&theta, &dataset.samples[i], config.eta, circuit, obs, config.loss, p)?;
        if let Some(tr) = trajectory.as_mut() {
            tr.push(theta.clone());
        }
        if let Some(every) = config.eval_interval {
            let done = t + 1;
            if done % every == 0 || done == t_max {
                record(done, &theta, &mut curve)?;
            }
        }
    }
    Ok(TrainRun {
        initial_theta: init,
        final_theta: theta,
        trajectory,
        draws,
        curve,
    })
}

/// Mean loss over `dataset`.
pub fn risk(theta: &[f64], dataset: &Dataset, circuit: &ReuploadCircuit, obs: &Observable<f64>, loss: LossKind) -> Result<f64> {
    risk_and_accuracy(theta, dataset, circuit, obs, loss, 0.0).map(|(r, _)| r)
}

/// Fraction of samples with `sign(f) = y`, counting `sign(0)` as `+1`.
pub fn accuracy(theta: &[f64], dataset: &Dataset, circuit: &ReuploadCircuit, obs: &Observable<f64>) -> Result<f64> {
    risk_and_accuracy(theta, dataset, circuit, obs, LossKind::ScaledSquared, 0.0).map(|(_, a)| a)
}

pub fn predict(f: f64) -> f64 {
    if f >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Risk and accuracy in one pass, optionally under depolarizing noise.
pub fn risk_and_accuracy(
    theta: &[f64],
    dataset: &Dataset,
    circuit: &ReuploadCircuit,
    obs: &Observable<f64>,
    loss: LossKind,
    noise_p: f64,
) -> Result<(f64, f64)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    let mut correct = 0usize;
    for s in &dataset.samples {
        let f = model_output(circuit, theta, &s.x, obs, noise_p)?;
        total += loss.value(f, s.y);
        if predict(f) == s.y {
            correct += 1;
        }
    }
    let m = dataset.len() as f64;
    Ok((total / m, correct as f64 / m))
}
