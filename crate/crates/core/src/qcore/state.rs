//! Pure and mixed N-qubit states and gate application.
//!
//! Qubit 0 is the most significant bit of a computational-basis index.

use num_traits::{One, Zero};

use super::linalg::min_eigenvalue;
use super::matrix::CMatrix;
use super::observable::Observable;
use crate::error::{Error, Result};
use crate::scalar::{Real, C};

pub const MAX_STATE_QUBITS: usize = 24;
pub const NORM_TOL: f64 = 1e-12;
pub const UNITARY_TOL: f64 = 1e-10;
pub const PSD_FLOOR: f64 = 1e-10;
/// Imaginary residue of an expectation value above which the value is rejected.
pub const IMAG_RESIDUE_MAX: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StateKind {
    Pure,
    Density,
}

#[derive(Clone, Debug, PartialEq)]
enum Repr<T: Real> {
    Pure(Vec<C<T>>),
    Density(CMatrix<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState<T: Real> {
    n_qubits: usize,
    repr: Repr<T>,
}

fn dim_for(n_qubits: usize) -> Result<usize> {
    if n_qubits > MAX_STATE_QUBITS {
        return Err(Error::Capacity(format!(
            "{n_qubits} qubits exceeds the {MAX_STATE_QUBITS}-qubit limit"
        )));
    }
    Ok(1usize << n_qubits)
}

fn qubits_for(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::DimensionMismatch(format!(
            "dimension {dim} is not a power of two"
        )));
    }
    Ok(dim.trailing_zeros() as usize)
}

impl<T: Real> QuantumState<T> {
    /// `|0…0⟩` as a state vector.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        let mut v = vec![C::zero(); dim_for(n_qubits)?];
        v[0] = C::one();
        Ok(Self {
            n_qubits,
            repr: Repr::Pure(v),
        })
    }

    /// `|0…0⟩⟨0…0|` as a density matrix.
    pub fn zero_density(n_qubits: usize) -> Result<Self> {
        Self::zero(n_qubits).map(|s| s.to_density())
    }

    pub fn from_amplitudes(amplitudes: Vec<C<T>>) -> Result<Self> {
        let n_qubits = qubits_for(amplitudes.len())?;
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("non-finite amplitude".into()));
        }
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        if (norm - T::one()).abs() > T::tol(NORM_TOL) {
            return Err(Error::InvalidArgument(format!(
                "state vector norm {norm} differs from 1"
            )));
        }
        Ok(Self {
            n_qubits,
            repr: Repr::Pure(amplitudes),
        })
    }

    pub fn from_density(rho: CMatrix<T>) -> Result<Self> {
        if !rho.is_square() {
            return Err(Error::DimensionMismatch("density matrix must be square".into()));
        }
        let n_qubits = qubits_for(rho.rows())?;
        let dev = rho.hermiticity_deviation();
        if dev > T::tol(NORM_TOL) {
            return Err(Error::NonHermitian {
                deviation: dev.to_f64_lossy(),
            });
        }
        let tr = rho.trace();
        if (tr.re - T::one()).abs() > T::tol(NORM_TOL) || tr.im.abs() > T::tol(NORM_TOL) {
            return Err(Error::InvalidArgument(format!(
                "density matrix trace {tr} differs from 1"
            )));
        }
        let lowest = min_eigenvalue(&rho)?;
        if lowest < -T::tol(PSD_FLOOR) {
            return Err(Error::InvalidArgument(format!(
                "density matrix has negative eigenvalue {lowest}"
            )));
        }
        Ok(Self {
            n_qubits,
            repr: Repr::Density(rho),
        })
    }

    /// Wraps a density matrix produced internally by trace-preserving maps.
    pub(crate) fn density_unchecked(n_qubits: usize, rho: CMatrix<T>) -> Self {
        Self {
            n_qubits,
            repr: Repr::Density(rho),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn kind(&self) -> StateKind {
        match self.repr {
            Repr::Pure(_) => StateKind::Pure,
            Repr::Density(_) => StateKind::Density,
        }
    }

    pub fn amplitudes(&self) -> Option<&[C<T>]> {
        match &self.repr {
            Repr::Pure(v) => Some(v),
            Repr::Density(_) => None,
        }
    }

    pub fn density(&self) -> Option<&CMatrix<T>> {
        match &self.repr {
            Repr::Pure(_) => None,
            Repr::Density(m) => Some(m),
        }
    }

    pub(crate) fn density_mut(&mut self) -> Option<&mut CMatrix<T>> {
        match &mut self.repr {
            Repr::Pure(_) => None,
            Repr::Density(m) => Some(m),
        }
    }

    /// Density matrix of this state (`|ψ⟩⟨ψ|` for pure states).
    pub fn density_matrix(&self) -> CMatrix<T> {
        match &self.repr {
            Repr::Density(m) => m.clone(),
            Repr::Pure(v) => {
                let d = v.len();
                let mut m = CMatrix::zeros(d, d);
                for r in 0..d {
                    for c in 0..d {
                        m[(r, c)] = v[r] * v[c].conj();
                    }
                }
                m
            }
        }
    }

    pub fn to_density(&self) -> Self {
        Self {
            n_qubits: self.n_qubits,
            repr: Repr::Density(self.density_matrix()),
        }
    }

    /// `‖ψ‖²` for pure states, `tr ρ` for mixed states.
    pub fn trace(&self) -> T {
        match &self.repr {
            Repr::Pure(v) => v.iter().map(|z| z.norm_sqr()).sum(),
            Repr::Density(m) => m.trace().re,
        }
    }

    /// Applies `gate` to `targets` and returns the new state.
    pub fn apply_gate(&self, gate: &CMatrix<T>, targets: &[usize]) -> Result<Self> {
        let mut out = self.clone();
        out.apply_gate_mut(gate, targets)?;
        Ok(out)
    }

    pub fn apply_gate_mut(&mut self, gate: &CMatrix<T>, targets: &[usize]) -> Result<()> {
        validate_targets(self.n_qubits, targets)?;
        let k = targets.len();
        if gate.rows() != 1 << k || gate.cols() != 1 << k {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} gate on {k} target qubit(s)",
                gate.rows(),
                gate.cols()
            )));
        }
        let dev = gate.unitarity_deviation();
        if dev > T::tol(UNITARY_TOL) {
            return Err(Error::NonUnitary {
                deviation: dev.to_f64_lossy(),
            });
        }
        let n = self.n_qubits;
        match &mut self.repr {
            Repr::Pure(v) => apply_local(v, n, targets, gate),
            Repr::Density(rho) => conjugate_local(rho, n, targets, gate),
        }
        Ok(())
    }

    /// `⟨ψ|M|ψ⟩` or `tr[ρM]`.
    pub fn expectation(&self, obs: &Observable<T>) -> Result<T> {
        let m = obs.matrix();
        if m.rows() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "observable of dimension {} on a {}-qubit state",
                m.rows(),
                self.n_qubits
            )));
        }
        let value: C<T> = match &self.repr {
            Repr::Pure(v) => return expectation_vec(v, obs),
            Repr::Density(rho) => {
                let d = self.dim();
                let mut acc = C::zero();
                for r in 0..d {
                    for c in 0..d {
                        acc += rho[(r, c)] * m[(c, r)];
                    }
                }
                acc
            }
        };
        real_part_checked(value)
    }
}

/// `⟨ψ|M|ψ⟩` for a raw amplitude vector of matching dimension.
pub(crate) fn expectation_vec<T: Real>(v: &[C<T>], obs: &Observable<T>) -> Result<T> {
    if let Some(d) = obs.diagonal() {
        return Ok(v.iter().zip(d).map(|(a, &w)| a.norm_sqr() * w).sum());
    }
    let mv = obs.matrix().mul_vec(v)?;
    real_part_checked(v.iter().zip(&mv).map(|(a, b)| a.conj() * b).sum())
}

pub(crate) fn real_part_checked<T: Real>(value: C<T>) -> Result<T> {
    if value.im.abs() > T::tol(IMAG_RESIDUE_MAX) {
        return Err(Error::NumericalIntegrity(format!(
            "expectation value has imaginary residue {}",
            value.im
        )));
    }
    Ok(value.re)
}

fn validate_targets(n_qubits: usize, targets: &[usize]) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::InvalidArgument("gate needs at least one target".into()));
    }
    for (i, &t) in targets.iter().enumerate() {
        if t >= n_qubits {
            return Err(Error::InvalidArgument(format!(
                "target qubit {t} out of range for {n_qubits} qubits"
            )));
        }
        if targets[..i].contains(&t) {
            return Err(Error::DuplicateTarget(t));
        }
    }
    Ok(())
}

/// Basis indices addressed by a local gate: for each local index `l`
/// (first target most significant), the bit pattern to OR onto a base index.
fn local_offsets(n_qubits: usize, targets: &[usize]) -> (usize, Vec<usize>) {
    let k = targets.len();
    let bits: Vec<usize> = targets.iter().map(|&t| 1 << (n_qubits - 1 - t)).collect();
    let mask = bits.iter().fold(0, |m, b| m | b);
    let offsets = (0..1usize << k)
        .map(|l| {
            (0..k)
                .filter(|j| l >> (k - 1 - j) & 1 == 1)
                .fold(0, |acc, j| acc | bits[j])
        })
        .collect();
    (mask, offsets)
}

/// `v ← G v` with `G` embedded on `targets`.
pub(crate) fn apply_local<T: Real>(v: &mut [C<T>], n_qubits: usize, targets: &[usize], gate: &CMatrix<T>) {
    let (mask, offsets) = local_offsets(n_qubits, targets);
    let size = offsets.len();
    let mut buf = vec![C::zero(); size];
    for base in (0..v.len()).filter(|b| b & mask == 0) {
        for (slot, &off) in buf.iter_mut().zip(&offsets) {
            *slot = v[base | off];
        }
        for (r, &off) in offsets.iter().enumerate() {
            v[base | off] = gate.row(r).iter().zip(&buf).map(|(&g, &a)| g * a).sum();
        }
    }
}

/// `ρ ← G ρ G†` with `G` embedded on `targets`.
pub(crate) fn conjugate_local<T: Real>(
    rho: &mut CMatrix<T>,
    n_qubits: usize,
    targets: &[usize],
    gate: &CMatrix<T>,
) {
    let (mask, offsets) = local_offsets(n_qubits, targets);
    let d = rho.rows();
    let size = offsets.len();
    let mut buf = vec![C::zero(); size];
    let gate_conj = gate.conj();
    for base in (0..d).filter(|b| b & mask == 0) {
        // columns: rows of ρ indexed by the gate
        for col in 0..d {
            for (slot, &off) in buf.iter_mut().zip(&offsets) {
                *slot = rho[(base | off, col)];
            }
            for (r, &off) in offsets.iter().enumerate() {
                rho[(base | off, col)] = gate.row(r).iter().zip(&buf).map(|(&g, &a)| g * a).sum();
            }
        }
        // rows: right-multiplying by G† acts as conj(G) on each row vector
        for row in 0..d {
            for (slot, &off) in buf.iter_mut().zip(&offsets) {
                *slot = rho[(row, base | off)];
            }
            for (r, &off) in offsets.iter().enumerate() {
                rho[(row, base | off)] = gate_conj.row(r).iter().zip(&buf).map(|(&g, &a)| g * a).sum();
            }
        }
    }
}

/// Real 2x2 rotation `[[c, -s], [s, c]]` on one qubit of a state vector.
#[inline]
pub(crate) fn apply_ry_vec<T: Real>(v: &mut [C<T>], n_qubits: usize, qubit: usize, cos: T, sin: T) {
    let bit = 1 << (n_qubits - 1 - qubit);
    for base in (0..v.len()).filter(|b| b & bit == 0) {
        let a0 = v[base];
        let a1 = v[base | bit];
        v[base] = a0.scale(cos) - a1.scale(sin);
        v[base | bit] = a0.scale(sin) + a1.scale(cos);
    }
}

#[inline]
pub(crate) fn apply_cx_vec<T: Real>(v: &mut [C<T>], n_qubits: usize, control: usize, target: usize) {
    let cbit = 1 << (n_qubits - 1 - control);
    let tbit = 1 << (n_qubits - 1 - target);
    for base in 0..v.len() {
        if base & cbit != 0 && base & tbit == 0 {
            v.swap(base, base | tbit);
        }
    }
}
