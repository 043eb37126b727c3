//! Random instances for property checks and benchmarks: Haar-ish unitaries,
//! states, Hermitian observables.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::qcore::matrix::CMatrix;
use crate::scalar::{c, cr, Real, C};

fn gaussian<T: Real, R: Rng + ?Sized>(rng: &mut R) -> C<T> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(T::lit(re), T::lit(im))
}

/// Matrix with i.i.d. complex Gaussian entries.
pub fn random_matrix<T: Real, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix<T> {
    let data = (0..rows * cols).map(|_| gaussian(rng)).collect();
    CMatrix::from_vec(rows, cols, data).expect("shape")
}

/// Unitary from Gram-Schmidt on the columns of a complex Gaussian matrix.
pub fn random_unitary<T: Real, R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix<T> {
    let g = random_matrix::<T, R>(rng, n, n);
    let mut cols: Vec<Vec<C<T>>> = Vec::with_capacity(n);
    for j in 0..n {
        let mut v: Vec<C<T>> = (0..n).map(|i| g[(i, j)]).collect();
        for u in &cols {
            let proj: C<T> = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= proj * ui;
            }
        }
        let nrm = v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        cols.push(v.into_iter().map(|z| z / cr(nrm)).collect());
    }
    let mut u = CMatrix::zeros(n, n);
    for (j, col) in cols.iter().enumerate() {
        for (i, &z) in col.iter().enumerate() {
            u[(i, j)] = z;
        }
    }
    u
}

/// Normalized random state vector of dimension `dim`.
pub fn random_state_vector<T: Real, R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<C<T>> {
    let v: Vec<C<T>> = (0..dim).map(|_| gaussian(rng)).collect();
    let nrm = v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
    v.into_iter().map(|z| z / cr(nrm)).collect()
}

/// Random density matrix `G G† / tr(G G†)`.
pub fn random_density<T: Real, R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMatrix<T> {
    let g = random_matrix::<T, R>(rng, dim, dim);
    let rho = &g * &g.adjoint();
    let tr = rho.trace().re;
    rho.scale_real(T::one() / tr).hermitian_part()
}

/// Random Hermitian matrix `(G + G†) / 2`.
pub fn random_hermitian<T: Real, R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMatrix<T> {
    random_matrix::<T, R>(rng, dim, dim).hermitian_part()
}

/// Uniform angles in `[lo, hi)`.
pub fn random_angles<R: Rng + ?Sized>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}
