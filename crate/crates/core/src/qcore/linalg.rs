//! Spectral routines: spectral norm by power iteration and Hermitian
//! eigenvalues by cyclic Jacobi rotations.

use num_traits::Zero;

use super::matrix::CMatrix;
use crate::error::{Error, Result};
use crate::scalar::{c, cr, Real, C};

pub const POWER_ITERATION_MAX: usize = 10_000;
pub const POWER_ITERATION_RTOL: f64 = 1e-10;

/// Largest singular value of `m`, via power iteration on `m† m`; falls back
/// to Jacobi eigenvalues when the top of the spectrum is nearly degenerate.
pub fn spectral_norm<T: Real>(m: &CMatrix<T>) -> Result<T> {
    if !m.is_finite() {
        return Err(Error::InvalidArgument(
            "spectral norm of a non-finite matrix".into(),
        ));
    }
    let gram = &m.adjoint() * m;
    let n = gram.rows();
    if n == 0 {
        return Ok(T::zero());
    }
    if gram.as_slice().iter().all(|z| z.is_zero()) {
        return Ok(T::zero());
    }

    let mut v = start_vector::<T>(n);
    let rtol = T::tol(POWER_ITERATION_RTOL);
    let mut lambda = T::zero();
    for iteration in 1..=POWER_ITERATION_MAX {
        let w = gram.mul_vec(&v)?;
        let next: T = v.iter().zip(&w).map(|(a, b)| (a.conj() * b).re).sum();
        let w_norm = norm(&w);
        if w_norm.is_zero() {
            return Ok(T::zero());
        }
        v = w.into_iter().map(|z| z / cr(w_norm)).collect();
        if iteration > 1 && (next - lambda).abs() <= rtol * next.abs() {
            return Ok(next.max(T::zero()).sqrt());
        }
        lambda = next;
    }
    let top = hermitian_eigenvalues(&gram)?.last().copied().unwrap_or_else(T::zero);
    Ok(top.max(T::zero()).sqrt())
}

fn norm<T: Real>(v: &[C<T>]) -> T {
    v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
}

/// Fixed dense start vector with no zero components.
fn start_vector<T: Real>(n: usize) -> Vec<C<T>> {
    let v: Vec<C<T>> = (0..n)
        .map(|k| {
            let k = T::lit(k as f64 + 1.0);
            c(T::one() + T::lit(0.1) * (k * T::lit(1.3)).sin(), T::lit(0.37) * (k * T::lit(0.7)).cos())
        })
        .collect();
    let nrm = norm(&v);
    v.into_iter().map(|z| z / cr(nrm)).collect()
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenvalues of a Hermitian matrix, ascending.
///
/// Only the Hermitian part of `m` is used; callers check Hermiticity first.
pub fn hermitian_eigenvalues<T: Real>(m: &CMatrix<T>) -> Result<Vec<T>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch("eigenvalues of a non-square matrix".into()));
    }
    let n = m.rows();
    let mut a = m.hermitian_part();
    let scale = a.frobenius_norm();
    let threshold = scale * T::epsilon() * T::lit(n.max(1) as f64);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: T = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[(p, q)].norm_sqr())
            .sum::<T>()
            .sqrt();
        if off <= threshold || off.is_zero() {
            let mut eig: Vec<T> = (0..n).map(|i| a[(i, i)].re).collect();
            eig.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
            return Ok(eig);
        }
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut a, p, q);
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: JACOBI_MAX_SWEEPS,
    })
}

/// One complex Jacobi rotation annihilating `a[p][q]`.
fn rotate<T: Real>(a: &mut CMatrix<T>, p: usize, q: usize) {
    let apq = a[(p, q)];
    let r = apq.norm();
    if r.is_zero() {
        return;
    }
    let n = a.rows();
    let phase = apq / cr(r);
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let theta = (aqq - app) / (T::lit(2.0) * r);
    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
    let cs = T::one() / (t * t + T::one()).sqrt();
    let sn = t * cs;

    // Q = diag-phase * real rotation, restricted to the (p, q) plane.
    let qpp = cr(cs);
    let qpq = cr(sn);
    let qqp = cr(-sn) * phase.conj();
    let qqq = cr(cs) * phase.conj();

    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * qpp + akq * qqp;
        a[(k, q)] = akp * qpq + akq * qqq;
    }
    for k in 0..n {
        let bpk = a[(p, k)];
        let bqk = a[(q, k)];
        a[(p, k)] = qpp.conj() * bpk + qqp.conj() * bqk;
        a[(q, k)] = qpq.conj() * bpk + qqq.conj() * bqk;
    }
    a[(p, q)] = C::zero();
    a[(q, p)] = C::zero();
    a[(p, p)] = cr(a[(p, p)].re);
    a[(q, q)] = cr(a[(q, q)].re);
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue<T: Real>(m: &CMatrix<T>) -> Result<T> {
    Ok(hermitian_eigenvalues(m)?
        .first()
        .copied()
        .unwrap_or_else(T::zero))
}
