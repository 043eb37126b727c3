//! Dense complex linear algebra and quantum primitives.

pub mod gates;
pub mod linalg;
pub mod matrix;
pub mod observable;
pub mod state;

pub use gates::{cx, pauli_on, pauli_x, pauli_y, pauli_z, rotation_gate, Pauli};
pub use linalg::{hermitian_eigenvalues, min_eigenvalue, spectral_norm};
pub use matrix::CMatrix;
pub use observable::Observable;
pub use state::{QuantumState, StateKind};
