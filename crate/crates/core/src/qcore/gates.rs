//! Standard gates and Pauli matrices.

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use super::matrix::CMatrix;
use crate::error::{Error, Result};
use crate::scalar::{c, cr, Real, C};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix<T: Real>(self) -> CMatrix<T> {
        match self {
            Pauli::X => pauli_x(),
            Pauli::Y => pauli_y(),
            Pauli::Z => pauli_z(),
        }
    }
}

pub fn pauli_x<T: Real>() -> CMatrix<T> {
    let (o, l) = (C::zero(), C::one());
    CMatrix::from_vec(2, 2, vec![o, l, l, o]).expect("2x2")
}

pub fn pauli_y<T: Real>() -> CMatrix<T> {
    let o = C::zero();
    let i = c(T::zero(), T::one());
    CMatrix::from_vec(2, 2, vec![o, -i, i, o]).expect("2x2")
}

pub fn pauli_z<T: Real>() -> CMatrix<T> {
    CMatrix::diag(&[C::one(), -C::<T>::one()])
}

/// `exp(-i * angle * P / 2)`.
pub fn rotation_gate<T: Real>(axis: Pauli, angle: T) -> Result<CMatrix<T>> {
    if !angle.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "rotation angle must be finite, got {angle}"
        )));
    }
    let half = angle / T::lit(2.0);
    let (s, co) = half.sin_cos();
    let o = T::zero();
    let data = match axis {
        Pauli::X => vec![cr(co), c(o, -s), c(o, -s), cr(co)],
        Pauli::Y => vec![cr(co), cr(-s), cr(s), cr(co)],
        Pauli::Z => vec![c(co, -s), C::zero(), C::zero(), c(co, s)],
    };
    CMatrix::from_vec(2, 2, data)
}

/// Controlled-X on two qubits, control as the most significant index.
pub fn cx<T: Real>() -> CMatrix<T> {
    let mut m = CMatrix::zeros(4, 4);
    m[(0, 0)] = C::one();
    m[(1, 1)] = C::one();
    m[(2, 3)] = C::one();
    m[(3, 2)] = C::one();
    m
}

/// `P` acting on `qubit` of an `n_qubits` register, identity elsewhere.
pub fn pauli_on<T: Real>(axis: Pauli, qubit: usize, n_qubits: usize) -> Result<CMatrix<T>> {
    if qubit >= n_qubits {
        return Err(Error::InvalidArgument(format!(
            "qubit {qubit} out of range for {n_qubits} qubits"
        )));
    }
    let mut out = CMatrix::identity(1);
    for q in 0..n_qubits {
        let factor = if q == qubit {
            axis.matrix()
        } else {
            CMatrix::identity(2)
        };
        out = out.kron(&factor)?;
    }
    Ok(out)
}
