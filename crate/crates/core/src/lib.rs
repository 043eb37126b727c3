//! Simulation and stability analysis of data re-uploading quantum classifiers.
//!
//! The numerical core (`qcore`, `ansatz`, `comb`, `grad`, `noise`) is generic
//! over the real scalar type; training, stability estimation, data loading and
//! the experiment harness run in `f64`.

pub mod ansatz;
pub mod comb;
pub mod data;
pub mod error;
pub mod experiment;
pub mod grad;
pub mod noise;
pub mod qcore;
pub mod random;
pub mod rng;
pub mod scalar;
pub mod stability;
pub mod train;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Real;

pub type ComplexMatrix = qcore::CMatrix<f64>;
pub type QuantumState = qcore::QuantumState<f64>;
pub type Observable = qcore::Observable<f64>;

pub type ComplexMatrix32 = qcore::CMatrix<f32>;
pub type QuantumState32 = qcore::QuantumState<f32>;
pub type Observable32 = qcore::Observable<f32>;
