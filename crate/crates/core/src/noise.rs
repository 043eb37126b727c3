//! Local depolarizing noise after every gate.

use num_traits::One;

use crate::ansatz::{op_matrix, Angle, Op, ReuploadCircuit};
use crate::error::{Error, Result};
use crate::qcore::matrix::CMatrix;
use crate::qcore::observable::Observable;
use crate::qcore::state::{conjugate_local, QuantumState, StateKind};
use crate::scalar::{Real, C};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    p: f64,
}

impl NoiseSpec {
    pub fn new(p: f64) -> Result<Self> {
        check_probability(p)?;
        Ok(Self { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("noise probability {p} outside [0, 1]")));
    }
    Ok(())
}

/// `ρ ← (1−p)ρ + p · tr_q[ρ] ⊗ 1/2` on `qubit`.
pub fn depolarize<T: Real>(state: &QuantumState<T>, p: T, qubit: usize) -> Result<QuantumState<T>> {
    if state.kind() != StateKind::Density {
        return Err(Error::InvalidArgument("depolarizing needs a density matrix".into()));
    }
    check_probability(p.to_f64_lossy())?;
    if qubit >= state.n_qubits() {
        return Err(Error::InvalidArgument(format!(
            "qubit {qubit} out of range for {} qubits",
            state.n_qubits()
        )));
    }
    let mut out = state.clone();
    let n = out.n_qubits();
    depolarize_in_place(out.density_mut().expect("density"), n, qubit, p);
    Ok(out)
}

pub(crate) fn depolarize_in_place<T: Real>(rho: &mut CMatrix<T>, n_qubits: usize, qubit: usize, p: T) {
    if p.is_zero() {
        return;
    }
    let bit = 1 << (n_qubits - 1 - qubit);
    let d = rho.rows();
    let keep = T::one() - p;
    let half = T::lit(0.5);
    for r in (0..d).filter(|r| r & bit == 0) {
        for c in (0..d).filter(|c| c & bit == 0) {
            let a = rho[(r, c)];
            let b = rho[(r | bit, c | bit)];
            let mixed = (a + b).scale(half * p);
            rho[(r, c)] = a.scale(keep) + mixed;
            rho[(r | bit, c | bit)] = b.scale(keep) + mixed;
            rho[(r, c | bit)] = rho[(r, c | bit)].scale(keep);
            rho[(r | bit, c)] = rho[(r | bit, c)].scale(keep);
        }
    }
}

/// Final density matrix of the circuit with depolarizing noise of strength
/// `p` on every qubit a gate touches, after that gate. `Ry(0)` padding slots
/// count as gates.
pub fn noisy_state<T: Real>(circuit: &ReuploadCircuit, theta: &[T], x: &[T], p: T) -> Result<QuantumState<T>> {
    circuit.check_inputs(theta, x)?;
    check_probability(p.to_f64_lossy())?;
    let n = circuit.n_qubits();
    let d = 1usize << n;
    let mut rho = CMatrix::zeros(d, d);
    rho[(0, 0)] = C::one();
    for op in circuit.ops() {
        let (qs, count) = op.qubits().as_array();
        let idle = matches!(op, Op::Ry { angle: Angle::Zero, .. });
        if !idle {
            let g = op_matrix(op, theta, x)?;
            conjugate_local(&mut rho, n, &qs[..count], &g);
        }
        for &q in &qs[..count] {
            depolarize_in_place(&mut rho, n, q, p);
        }
    }
    Ok(QuantumState::density_unchecked(n, rho))
}

/// `tr[ρ_p M]` for the noisy circuit.
pub fn noisy_forward<T: Real>(circuit: &ReuploadCircuit, theta: &[T], x: &[T], obs: &Observable<T>, p: T) -> Result<T> {
    circuit.check_observable(obs)?;
    noisy_state(circuit, theta, x, p)?.expectation(obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{build_circuit, forward};
    use crate::qcore::gates::{pauli_x, pauli_y, pauli_z};
    use crate::qcore::linalg::min_eigenvalue;
    use crate::random::{random_angles, random_density};
    use crate::scalar::cr;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    /// `Σ_k K_k ρ K_k†` with `{√(1−3p/4) 1, √(p/4) X, √(p/4) Y, √(p/4) Z}` on `qubit`.
    fn kraus_depolarize(rho: &CMatrix<f64>, n: usize, qubit: usize, p: f64) -> CMatrix<f64> {
        let ops = [
            (CMatrix::identity(2), (1.0 - 0.75 * p).sqrt()),
            (pauli_x(), (p / 4.0).sqrt()),
            (pauli_y(), (p / 4.0).sqrt()),
            (pauli_z(), (p / 4.0).sqrt()),
        ];
        let mut out = CMatrix::zeros(rho.rows(), rho.cols());
        for (k, w) in ops {
            let mut full = CMatrix::identity(1);
            for q in 0..n {
                let f = if q == qubit { k.scale_real(w) } else { CMatrix::identity(2) };
                full = full.kron(&f).unwrap();
            }
            out = &out + &(&(&full * rho) * &full.adjoint());
        }
        out
    }

    fn kraus_forward(c: &ReuploadCircuit, theta: &[f64], x: &[f64], obs: &Observable<f64>, p: f64) -> f64 {
        let n = c.n_qubits();
        let mut rho = QuantumState::<f64>::zero_density(n).unwrap().density_matrix();
        for op in c.ops() {
            let (qs, count) = op.qubits().as_array();
            let g = op_matrix(op, theta, x).unwrap();
            let mut embedded = rho.clone();
            conjugate_local(&mut embedded, n, &qs[..count], &g);
            rho = embedded;
            for &q in &qs[..count] {
                rho = kraus_depolarize(&rho, n, q, p);
            }
        }
        (&rho * obs.matrix()).trace().re
    }

    #[test]
    fn zero_noise_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = QuantumState::from_density(random_density::<f64, _>(&mut rng, 4)).unwrap();
        assert_eq!(depolarize(&s, 0.0, 1).unwrap(), s);
    }

    #[test]
    fn full_noise_on_one_qubit_is_maximally_mixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = QuantumState::from_density(random_density::<f64, _>(&mut rng, 2)).unwrap();
        let out = depolarize(&s, 1.0, 0).unwrap();
        assert!(out.density().unwrap().max_abs_diff(&CMatrix::identity(2).scale_real(0.5)) < 1e-15);
    }

    #[test]
    fn plus_state_half_noise() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let plus = QuantumState::from_amplitudes(vec![cr(h), cr(h)]).unwrap().to_density();
        let out = depolarize(&plus, 0.5, 0).unwrap();
        let m = out.density().unwrap();
        assert!((m[(0, 1)].re - 0.25).abs() < 1e-15 && (m[(1, 0)].re - 0.25).abs() < 1e-15);
        assert!((m[(0, 0)].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn channel_errors() {
        let pure = QuantumState::<f64>::zero(1).unwrap();
        assert!(depolarize(&pure, 0.1, 0).is_err());
        let mixed = pure.to_density();
        assert!(depolarize(&mixed, 1.5, 0).is_err());
        assert!(depolarize(&mixed, -0.1, 0).is_err());
        assert!(depolarize(&mixed, 0.1, 1).is_err());
    }

    #[test]
    fn matches_kraus_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in [0.05, 0.3, 1.0] {
            let rho = random_density::<f64, _>(&mut rng, 8);
            let s = QuantumState::from_density(rho.clone()).unwrap();
            let got = depolarize(&s, p, 1).unwrap();
            assert!(got.density().unwrap().max_abs_diff(&kraus_depolarize(&rho, 3, 1, p)) < 1e-14);
        }
    }

    #[test]
    fn noiseless_limit_matches_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = build_circuit(3, 2, 4, 2).unwrap();
        let z = Observable::z0(3).unwrap();
        let th = random_angles(&mut rng, c.n_params(), 0.0, TAU);
        let x = random_angles(&mut rng, 4, 0.0, TAU);
        let a = noisy_forward(&c, &th, &x, &z, 0.0).unwrap();
        assert!((a - forward(&c, &th, &x, &z).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn two_qubit_circuit_matches_kraus_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = build_circuit(2, 2, 3, 2).unwrap();
        let z = Observable::z0(2).unwrap();
        for _ in 0..5 {
            let th = random_angles(&mut rng, c.n_params(), 0.0, TAU);
            let x = random_angles(&mut rng, 3, 0.0, TAU);
            let got = noisy_forward(&c, &th, &x, &z, 0.1).unwrap();
            assert!((got - kraus_forward(&c, &th, &x, &z, 0.1)).abs() < 1e-10);
        }
    }

    #[test]
    fn single_qubit_damping_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c = build_circuit(1, 3, 1, 2).unwrap();
        let z = Observable::z0(1).unwrap();
        let g = c.gate_count() as i32;
        let th = random_angles(&mut rng, c.n_params(), 0.0, TAU);
        let x = [1.3];
        let ideal = forward(&c, &th, &x, &z).unwrap();
        for p in [0.01, 0.1, 0.5] {
            let noisy = noisy_forward(&c, &th, &x, &z, p).unwrap();
            assert!((noisy - (1.0 - p).powi(g) * ideal).abs() < 1e-12);
        }
    }

    #[test]
    fn trace_and_positivity_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = build_circuit(2, 1, 2, 2).unwrap();
        let th = random_angles(&mut rng, c.n_params(), 0.0, TAU);
        let s = noisy_state(&c, &th, &[0.4, 2.0], 0.2).unwrap();
        let rho = s.density().unwrap();
        assert!((rho.trace().re - 1.0).abs() < 1e-12);
        assert!(min_eigenvalue(rho).unwrap() > -1e-10);
    }
}
