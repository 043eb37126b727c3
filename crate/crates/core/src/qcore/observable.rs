//! Hermitian observables with a cached spectral norm.

use super::gates::{pauli_on, Pauli};
use super::linalg::spectral_norm;
use super::matrix::CMatrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Observable<T: Real> {
    matrix: CMatrix<T>,
    spectral_norm: T,
    diagonal: Option<Vec<T>>,
}

impl<T: Real> Observable<T> {
    pub fn new(matrix: CMatrix<T>) -> Result<Self> {
        if !matrix.is_square() || !matrix.rows().is_power_of_two() {
            return Err(Error::DimensionMismatch(format!(
                "observable must be square with power-of-two dimension, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        let dev = matrix.hermiticity_deviation();
        if dev > T::tol(HERMITIAN_TOL) {
            return Err(Error::NonHermitian {
                deviation: dev.to_f64_lossy(),
            });
        }
        let spectral_norm = spectral_norm(&matrix)?;
        let diagonal = diagonal_of(&matrix);
        Ok(Self {
            matrix,
            spectral_norm,
            diagonal,
        })
    }

    /// Pauli `axis` on `qubit`, identity elsewhere.
    pub fn pauli(axis: Pauli, qubit: usize, n_qubits: usize) -> Result<Self> {
        Self::new(pauli_on(axis, qubit, n_qubits)?)
    }

    /// `Z` on qubit 0: the readout used by the classifier.
    pub fn z0(n_qubits: usize) -> Result<Self> {
        Self::pauli(Pauli::Z, 0, n_qubits)
    }

    /// Skips validation; only for tests that need a deliberately broken observable.
    #[cfg(test)]
    pub(crate) fn unchecked(matrix: CMatrix<T>) -> Self {
        Self {
            matrix,
            spectral_norm: T::one(),
            diagonal: None,
        }
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn n_qubits(&self) -> usize {
        self.matrix.rows().trailing_zeros() as usize
    }

    /// `‖M‖∞`.
    pub fn spectral_norm(&self) -> T {
        self.spectral_norm
    }

    /// Diagonal entries when the matrix is diagonal in the computational basis.
    pub fn diagonal(&self) -> Option<&[T]> {
        self.diagonal.as_deref()
    }
}

fn diagonal_of<T: Real>(m: &CMatrix<T>) -> Option<Vec<T>> {
    let d = m.rows();
    for r in 0..d {
        for c in 0..d {
            if r != c && m[(r, c)].norm_sqr() != T::zero() {
                return None;
            }
        }
    }
    Some((0..d).map(|i| m[(i, i)].re).collect())
}
