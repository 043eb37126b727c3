//! Parameter-shift gradients and a central finite-difference oracle.

use std::f64::consts::FRAC_PI_2;

use crate::ansatz::{forward, ReuploadCircuit};
use crate::error::{Error, Result};
use crate::qcore::observable::Observable;
use crate::scalar::Real;
use crate::train::LossKind;

/// Gradient with one entry per trainable parameter.
pub type Gradient<T> = Vec<T>;

pub const FD_STEP_MIN: f64 = 1e-8;
pub const FD_STEP_MAX: f64 = 1e-2;

/// `∂f/∂θ_j = (f(θ_j + π/2) − f(θ_j − π/2)) / 2` for any `f` built from
/// single-Pauli rotations.
pub fn parameter_shift<T, F>(theta: &[T], mut f: F) -> Result<Gradient<T>>
where
    T: Real,
    F: FnMut(&[T]) -> Result<T>,
{
    let shift = T::lit(FRAC_PI_2);
    let half = T::lit(0.5);
    let mut work = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for j in 0..theta.len() {
        work[j] = theta[j] + shift;
        let plus = f(&work)?;
        work[j] = theta[j] - shift;
        let minus = f(&work)?;
        work[j] = theta[j];
        grad.push((plus - minus) * half);
    }
    Ok(grad)
}

/// `∂f/∂θ` of the noiseless circuit output.
pub fn parameter_shift_grad_f<T: Real>(
    circuit: &ReuploadCircuit,
    theta: &[T],
    x: &[T],
    obs: &Observable<T>,
) -> Result<Gradient<T>> {
    circuit.check_inputs(theta, x)?;
    circuit.check_observable(obs)?;
    parameter_shift(theta, |t| forward(circuit, t, x, obs))
}

/// `∂ℓ(f(θ), y)/∂θ = ℓ′(f, y) · ∂f/∂θ` for a model output `f`.
pub fn loss_grad_with<T, F>(theta: &[T], y: T, loss: LossKind, mut f: F) -> Result<Gradient<T>>
where
    T: Real,
    F: FnMut(&[T]) -> Result<T>,
{
    let value = f(theta)?;
    let outer = loss.derivative(value, y);
    let mut grad = parameter_shift(theta, f)?;
    for g in &mut grad {
        *g *= outer;
    }
    Ok(grad)
}

/// Loss gradient of the noiseless circuit on one sample `(x, y)`.
pub fn loss_grad<T: Real>(
    circuit: &ReuploadCircuit,
    theta: &[T],
    x: &[T],
    y: T,
    obs: &Observable<T>,
    loss: LossKind,
) -> Result<Gradient<T>> {
    circuit.check_inputs(theta, x)?;
    circuit.check_observable(obs)?;
    loss_grad_with(theta, y, loss, |t| forward(circuit, t, x, obs))
}

/// Central differences `(f(θ + h e_j) − f(θ − h e_j)) / 2h`.
pub fn finite_diff_grad<T, F>(mut f: F, theta: &[T], h: T) -> Result<Gradient<T>>
where
    T: Real,
    F: FnMut(&[T]) -> Result<T>,
{
    if !(h >= T::lit(FD_STEP_MIN) && h <= T::lit(FD_STEP_MAX)) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step {h} outside [{FD_STEP_MIN:e}, {FD_STEP_MAX:e}]"
        )));
    }
    let mut work = theta.to_vec();
    let two_h = h + h;
    let mut grad = Vec::with_capacity(theta.len());
    for j in 0..theta.len() {
        work[j] = theta[j] + h;
        let plus = f(&work)?;
        work[j] = theta[j] - h;
        let minus = f(&work)?;
        work[j] = theta[j];
        grad.push((plus - minus) / two_h);
    }
    Ok(grad)
}
