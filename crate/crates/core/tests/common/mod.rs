//! Randomized property checks shared by the integration suites and the
//! acceptance runner. Each check returns a [`Check`] with a one-line summary.

#![allow(dead_code)]

use std::f64::consts::TAU;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reupload::ansatz::{build_circuit, circuit_unitary, forward, BlockKind, ReuploadCircuit};
use reupload::comb::{
    choi_of_unitary_on, comb_output, link_product, reuploading_comb_output, sequential_comb, validate_comb,
    ChoiOperator, CombLayout, SystemLabel,
};
use reupload::grad::{finite_diff_grad, parameter_shift_grad_f};
use reupload::noise::{noisy_forward, noisy_state};
use reupload::qcore::gates::{pauli_on, Pauli};
use reupload::qcore::linalg::spectral_norm;
use reupload::qcore::{CMatrix, Observable, QuantumState};
use reupload::random::{random_angles, random_hermitian, random_matrix, random_unitary};
use num_complex::Complex64;

pub struct Check {
    pub ok: bool,
    pub detail: String,
}

impl Check {
    pub fn new(ok: bool, detail: impl Into<String>) -> Self {
        Self { ok, detail: detail.into() }
    }

    pub fn assert(self) {
        assert!(self.ok, "{}", self.detail);
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn mnist_dir() -> PathBuf {
    std::env::var_os("REUPLOAD_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

/// `cos(a/2)·1 − i·sin(a/2)·P` on qubit `q` of `n`, built from the Pauli
/// embedding rather than the rotation-gate routine.
pub fn embedded_rotation(axis: Pauli, q: usize, n: usize, a: f64) -> CMatrix<f64> {
    let p = pauli_on::<f64>(axis, q, n).unwrap();
    let id = CMatrix::<f64>::identity(1 << n);
    &id.scale_real((a / 2.0).cos()) + &p.scale(Complex64::new(0.0, -(a / 2.0).sin()))
}

/// `exp(A)` by its Taylor series.
pub fn taylor_exp(a: &CMatrix<f64>, terms: usize) -> CMatrix<f64> {
    let n = a.rows();
    let mut term = CMatrix::identity(n);
    let mut sum = CMatrix::identity(n);
    for k in 1..terms {
        term = (&term * a).scale_real(1.0 / k as f64);
        sum = &sum + &term;
    }
    sum
}

/// Largest singular value from the characteristic polynomial of `A†A`
/// (Faddeev–LeVerrier coefficients, bisection for the largest root).
pub fn charpoly_spectral_norm(a: &CMatrix<f64>) -> f64 {
    let h = &a.adjoint() * a;
    let n = h.rows();
    // p(λ) = λⁿ + c₁λⁿ⁻¹ + … + cₙ
    let mut coeffs = vec![1.0];
    let mut m = CMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        let prev = *coeffs.last().unwrap();
        m = &(&h * &m) + &CMatrix::identity(n).scale_real(prev);
        let ck = -(&h * &m).trace().re / k as f64;
        coeffs.push(ck);
    }
    let p = |x: f64| coeffs.iter().fold(0.0, |acc, &ci| acc * x + ci);
    let mut hi = h.trace().re.max(1e-300) * (1.0 + 1e-12) + 1e-12;
    // the largest root lies in (0, tr H]; p > 0 beyond it
    let mut lo = 0.0f64;
    let sign_hi = p(hi).signum();
    let mut step = hi / 4096.0;
    let mut x = hi;
    while x > 0.0 {
        let nx = (x - step).max(0.0);
        if p(nx).signum() != sign_hi || nx == 0.0 {
            lo = nx;
            hi = x;
            break;
        }
        x = nx;
        if step < 1e-6 * hi {
            step *= 2.0;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if p(mid).signum() == sign_hi {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (0.5 * (lo + hi)).sqrt()
}

fn random_circuit<R: Rng>(rng: &mut R, max_n: usize, max_l: usize, max_d: usize) -> ReuploadCircuit {
    let n = rng.random_range(1..=max_n);
    let l = rng.random_range(1..=max_l);
    let d = rng.random_range(1..=max_d);
    build_circuit(n, l, d, 2).unwrap()
}

/// Criterion 1: comb contraction against the statevector forward pass, plus
/// the full sequential comb for single-qubit circuits.
pub fn comb_equivalence(per_config: usize) -> Check {
    let mut r = rng(101);
    let mut worst = 0.0f64;
    let mut count = 0;
    for (n, l) in [(1, 1), (1, 2), (1, 3), (2, 1), (2, 2)] {
        let d = n + 1;
        let circ = build_circuit(n, l, d, 2).unwrap();
        let z = Observable::z0(n).unwrap();
        for _ in 0..per_config {
            let th = random_angles(&mut r, circ.n_params(), 0.0, TAU);
            let x = random_angles(&mut r, d, 0.0, TAU);
            let f = forward(&circ, &th, &x, &z).unwrap();
            worst = worst.max((reuploading_comb_output(&circ, &th, &x, &z).unwrap() - f).abs());
            count += 1;
        }
        if n == 1 {
            let th = random_angles(&mut r, circ.n_params(), 0.0, TAU);
            let x = random_angles(&mut r, d, 0.0, TAU);
            let f = forward(&circ, &th, &x, &z).unwrap();
            worst = worst.max((full_comb_output(&circ, &th, &x, &z) - f).abs());
        }
    }
    Check::new(worst <= 1e-9, format!("{count} instances, max |comb - forward| = {worst:.3e} (tol 1e-9)"))
}

/// Builds the whole comb from the trainable blocks and plugs the encoding
/// blocks into its slots.
pub fn full_comb_output(circ: &ReuploadCircuit, th: &[f64], x: &[f64], z: &Observable<f64>) -> f64 {
    let dim = 1 << circ.n_qubits();
    let layout = CombLayout::uniform(circ.layers(), dim).unwrap();
    let mut trainable = Vec::new();
    let mut slots = Vec::new();
    for b in circ.blocks() {
        let u = circ.block_unitary(b, th, x).unwrap();
        match b.kind {
            BlockKind::Trainable => trainable.push(u),
            BlockKind::Encoding => {
                let (i, o) = &layout.teeth[slots.len()];
                slots.push(choi_of_unitary_on(&u, &i.name, &o.name).unwrap());
            }
        }
    }
    let comb = sequential_comb(&trainable, &layout).unwrap();
    let rho = QuantumState::zero_density(circ.n_qubits()).unwrap();
    comb_output(&comb, &slots, z, &rho).unwrap()
}

/// Criterion 2: parameter shift against central differences.
pub fn gradient_agreement(circuits: usize) -> Check {
    let mut r = rng(202);
    let mut worst = 0.0f64;
    for _ in 0..circuits {
        let circ = random_circuit(&mut r, 4, 4, 5);
        let n = circ.n_qubits();
        let z = Observable::z0(n).unwrap();
        let th = random_angles(&mut r, circ.n_params(), 0.0, TAU);
        let x = random_angles(&mut r, circ.data_dim(), 0.0, TAU);
        let ps = parameter_shift_grad_f(&circ, &th, &x, &z).unwrap();
        let fd = finite_diff_grad(|t| forward(&circ, t, &x, &z), &th, 1e-5).unwrap();
        for (a, b) in ps.iter().zip(&fd) {
            worst = worst.max((a - b).abs());
        }
    }
    Check::new(worst <= 1e-6, format!("{circuits} circuits, max |shift - fd| = {worst:.3e} (tol 1e-6)"))
}

fn random_pauli<R: Rng>(r: &mut R) -> Pauli {
    [Pauli::X, Pauli::Y, Pauli::Z][r.random_range(0..3)]
}

/// `‖U(α) − U(β)‖ ≤ Σ|α_k − β_k|` for products of fixed gates and
/// single-Pauli rotations on random qubits.
pub fn unitary_distance_bound(trials: usize) -> Check {
    let mut r = rng(301);
    let mut violations = 0;
    let mut tightest = f64::INFINITY;
    for _ in 0..trials {
        let n = r.random_range(1..=3);
        let k = r.random_range(1..=6);
        let dim = 1 << n;
        let fixed: Vec<CMatrix<f64>> = (0..=k).map(|_| random_unitary(&mut r, dim)).collect();
        let gates: Vec<(Pauli, usize)> = (0..k).map(|_| (random_pauli(&mut r), r.random_range(0..n))).collect();
        let alpha = random_angles(&mut r, k, -TAU, TAU);
        let spread = [1e-3, 0.1, 1.0, TAU][r.random_range(0..4)];
        let beta: Vec<f64> = alpha.iter().map(|a| a + r.random_range(-spread..spread)).collect();
        let build = |angles: &[f64]| {
            let mut u = fixed[k].clone();
            for j in (0..k).rev() {
                let (axis, q) = gates[j];
                u = &(&fixed[j] * &embedded_rotation(axis, q, n, angles[j])) * &u;
            }
            u
        };
        let lhs = spectral_norm(&(&build(&alpha) - &build(&beta))).unwrap();
        let rhs: f64 = alpha.iter().zip(&beta).map(|(a, b)| (a - b).abs()).sum();
        if lhs > rhs + 1e-8 {
            violations += 1;
        }
        tightest = tightest.min(rhs - lhs);
    }
    Check::new(
        violations == 0,
        format!("unitary distance: {trials} trials, {violations} violations, min slack {tightest:.3e}"),
    )
}

/// Output distance on the re-uploading circuit, plus the unitary-level bound it rests on.
pub fn output_distance_bound(trials: usize) -> Check {
    let mut r = rng(302);
    let mut violations = 0;
    for _ in 0..trials {
        let circ = random_circuit(&mut r, 3, 3, 4);
        let n = circ.n_qubits();
        let obs = Observable::new(random_hermitian::<f64, _>(&mut r, 1 << n)).expect("observable");
        let th = random_angles(&mut r, circ.n_params(), 0.0, TAU);
        let scale = [1e-3, 0.1, 1.0][r.random_range(0..3)];
        let th2: Vec<f64> = th.iter().map(|t| t + r.random_range(-scale..scale)).collect();
        let x = random_angles(&mut r, circ.data_dim(), 0.0, TAU);
        let dth: f64 = th.iter().zip(&th2).map(|(a, b)| (a - b).abs()).sum();
        let df = (forward(&circ, &th, &x, &obs).unwrap() - forward(&circ, &th2, &x, &obs).unwrap()).abs();
        if df > 2.0 * obs.spectral_norm() * dth + 1e-8 {
            violations += 1;
        }
        if n <= 2 {
            let du = spectral_norm(&(&circuit_unitary(&circ, &th, &x).unwrap() - &circuit_unitary(&circ, &th2, &x).unwrap())).unwrap();
            if du > dth + 1e-8 {
                violations += 1;
            }
        }
    }
    Check::new(violations == 0, format!("output distance: {trials} trials, {violations} violations"))
}

/// Output-gradient distance: `|∂_j f(θ) − ∂_j f(θ′)| ≤ 2‖M‖ Σ|Δθ|`.
pub fn gradient_distance_bound(trials: usize) -> Check {
    let mut r = rng(303);
    let mut violations = 0;
    for _ in 0..trials {
        let circ = random_circuit(&mut r, 3, 3, 4);
        let z = Observable::z0(circ.n_qubits()).unwrap();
        let th = random_angles(&mut r, circ.n_params(), 0.0, TAU);
        let scale = [1e-3, 0.1, 1.0][r.random_range(0..3)];
        let th2: Vec<f64> = th.iter().map(|t| t + r.random_range(-scale..scale)).collect();
        let x = random_angles(&mut r, circ.data_dim(), 0.0, TAU);
        let g1 = parameter_shift_grad_f(&circ, &th, &x, &z).unwrap();
        let g2 = parameter_shift_grad_f(&circ, &th2, &x, &z).unwrap();
        let dth: f64 = th.iter().zip(&th2).map(|(a, b)| (a - b).abs()).sum();
        if g1.iter().zip(&g2).any(|(a, b)| (a - b).abs() > 2.0 * z.spectral_norm() * dth + 1e-8) {
            violations += 1;
        }
    }
    Check::new(violations == 0, format!("gradient distance: {trials} trials, {violations} violations"))
}

/// Output-gradient distance with different data; each feature difference
/// counts once per upload.
pub fn mixed_gradient_bound(trials: usize) -> Check {
    let mut r = rng(304);
    let mut violations = 0;
    for _ in 0..trials {
        let circ = random_circuit(&mut r, 3, 3, 4);
        let z = Observable::z0(circ.n_qubits()).unwrap();
        let th = random_angles(&mut r, circ.n_params(), 0.0, TAU);
        let scale = [1e-3, 0.1, 1.0][r.random_range(0..3)];
        let th2: Vec<f64> = th.iter().map(|t| t + r.random_range(-scale..scale)).collect();
        let x = random_angles(&mut r, circ.data_dim(), 0.0, TAU);
        let x2 = random_angles(&mut r, circ.data_dim(), 0.0, TAU);
        let g1 = parameter_shift_grad_f(&circ, &th, &x, &z).unwrap();
        let g2 = parameter_shift_grad_f(&circ, &th2, &x2, &z).unwrap();
        let dth: f64 = th.iter().zip(&th2).map(|(a, b)| (a - b).abs()).sum();
        let dx: f64 = circ.layers() as f64 * x.iter().zip(&x2).map(|(a, b)| (a - b).abs()).sum::<f64>();
        if g1.iter().zip(&g2).any(|(a, b)| (a - b).abs() > 2.0 * z.spectral_norm() * (dth + dx) + 1e-8) {
            violations += 1;
        }
    }
    Check::new(violations == 0, format!("mixed gradient: {trials} trials, {violations} violations"))
}

/// Single-qubit noisy output distance: `|f_p(θ) − f_p(θ′)| ≤ 2(1−p)^K ‖M‖ Σ|Δθ|`.
pub fn noisy_output_bound(trials: usize) -> Check {
    let mut r = rng(307);
    let mut violations = 0;
    for _ in 0..trials {
        let l = r.random_range(1..=3);
        let d = r.random_range(1..=3);
        let circ = build_circuit(1, l, d, 2).unwrap();
        let z = Observable::z0(1).unwrap();
        let p = [0.01, 0.1, 0.3][r.random_range(0..3)];
        let th = random_angles(&mut r, circ.n_params(), 0.0, TAU);
        let th2: Vec<f64> = th.iter().map(|t| t + r.random_range(-0.5..0.5)).collect();
        let x = random_angles(&mut r, d, 0.0, TAU);
        let df = (noisy_forward(&circ, &th, &x, &z, p).unwrap() - noisy_forward(&circ, &th2, &x, &z, p).unwrap()).abs();
        let dth: f64 = th.iter().zip(&th2).map(|(a, b)| (a - b).abs()).sum();
        if df > 2.0 * (1.0 - p).powi(circ.n_params() as i32) * dth + 1e-8 {
            violations += 1;
        }
    }
    Check::new(violations == 0, format!("noisy output (N=1): {trials} trials, {violations} violations"))
}

fn label(name: &str) -> SystemLabel {
    SystemLabel::new(name, 2).unwrap()
}

fn random_op<R: Rng>(r: &mut R, names: &[&str]) -> ChoiOperator<f64> {
    let systems: Vec<SystemLabel> = names.iter().map(|n| label(n)).collect();
    let d = 1 << names.len();
    ChoiOperator::new(systems, random_matrix(r, d, d)).unwrap()
}

fn aligned_diff(a: &ChoiOperator<f64>, b: &ChoiOperator<f64>) -> f64 {
    let order: Vec<&str> = a.systems().iter().map(|s| s.name.as_str()).collect();
    a.matrix().max_abs_diff(b.permute(&order).unwrap().matrix())
}

/// Criterion 4: link-product algebra and comb validation.
pub fn link_algebra(triples: usize, combs: usize) -> Check {
    let mut r = rng(404);
    let mut comm = 0.0f64;
    let mut assoc = 0.0f64;
    let mut compose = 0.0f64;
    for _ in 0..triples {
        let a = random_op(&mut r, &["a", "b"]);
        let b = random_op(&mut r, &["b", "c"]);
        let cc = random_op(&mut r, &["c", "d"]);
        let ab = link_product(&a, &b, &[label("b")]).unwrap();
        let ba = link_product(&b, &a, &[label("b")]).unwrap();
        comm = comm.max(aligned_diff(&ab, &ba));
        let left = link_product(&ab, &cc, &[label("c")]).unwrap();
        let bc = link_product(&b, &cc, &[label("c")]).unwrap();
        let right = link_product(&a, &bc, &[label("b")]).unwrap();
        assoc = assoc.max(aligned_diff(&left, &right));
    }
    for _ in 0..triples {
        let dim = [2, 4][r.random_range(0..2)];
        let u = random_unitary::<f64, _>(&mut r, dim);
        let v = random_unitary::<f64, _>(&mut r, dim);
        let ju = choi_of_unitary_on(&u, "a", "b").unwrap();
        let jv = choi_of_unitary_on(&v, "b", "c").unwrap();
        let shared = ju.systems()[1].clone();
        let linked = link_product(&ju, &jv, &[shared]).unwrap();
        let direct = choi_of_unitary_on(&(&v * &u), "a", "c").unwrap();
        compose = compose.max(aligned_diff(&direct, &linked));
    }
    let (mut accepted, mut rejected) = (0, 0);
    for k in 0..combs {
        let slots = 1 + k % 2;
        let layout = CombLayout::uniform(slots, 2).unwrap();
        let us: Vec<_> = (0..=slots).map(|_| random_unitary::<f64, _>(&mut r, 2)).collect();
        let comb = sequential_comb(&us, &layout).unwrap();
        if validate_comb(&comb, &layout).unwrap().is_comb {
            accepted += 1;
        }
        let eps = r.random_range(0.01..0.2);
        let h = random_hermitian::<f64, _>(&mut r, comb.dim()).scale_real(eps);
        let bad = ChoiOperator::new(comb.systems().to_vec(), comb.matrix() + &h).unwrap();
        if !validate_comb(&bad, &layout).unwrap().is_comb {
            rejected += 1;
        }
    }
    let ok = comm <= 1e-10 && assoc <= 1e-10 && compose <= 1e-10 && accepted == combs && rejected == combs;
    Check::new(
        ok,
        format!(
            "commutativity {comm:.2e}, associativity {assoc:.2e}, J_U*J_V vs J_VU {compose:.2e} (tol 1e-10); \
             accepted {accepted}/{combs} combs, rejected {rejected}/{combs} perturbed"
        ),
    )
}

/// Criterion 6: single-qubit damping law and trace preservation.
pub fn noise_law() -> Check {
    let mut r = rng(606);
    let z = Observable::z0(1).unwrap();
    let mut worst_law = 0.0f64;
    let mut worst_trace = 0.0f64;
    let mut max_gates = 0;
    for l in 1..=3 {
        for d in 1..=2 {
            let circ = build_circuit(1, l, d, 2).unwrap();
            let g = circ.gate_count();
            if g > 20 {
                continue;
            }
            max_gates = max_gates.max(g);
            let th = random_angles(&mut r, circ.n_params(), 0.0, TAU);
            let x = random_angles(&mut r, d, 0.0, TAU);
            let ideal = forward(&circ, &th, &x, &z).unwrap();
            for p in [0.01, 0.1, 0.5] {
                let noisy = noisy_forward(&circ, &th, &x, &z, p).unwrap();
                worst_law = worst_law.max((noisy - (1.0 - p).powi(g as i32) * ideal).abs());
            }
        }
    }
    for n in 1..=3 {
        let circ = build_circuit(n, 2, 3, 2).unwrap();
        let th = random_angles(&mut r, circ.n_params(), 0.0, TAU);
        let x = random_angles(&mut r, 3, 0.0, TAU);
        for p in [0.01, 0.1, 0.5] {
            let s = noisy_state(&circ, &th, &x, p).unwrap();
            worst_trace = worst_trace.max((s.trace() - 1.0).abs());
        }
    }
    Check::new(
        worst_law <= 1e-12 && worst_trace <= 1e-12,
        format!("damping law max dev {worst_law:.2e} (G ≤ {max_gates}), trace dev {worst_trace:.2e} (tol 1e-12)"),
    )
}
