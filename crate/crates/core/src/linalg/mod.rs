//! Sparse and dense linear algebra kernels used by the discretization and solver.

mod cholesky;
mod dense;
mod sparse;

pub use cholesky::{reverse_cuthill_mckee, SpdFactorization};
pub use dense::{dense_generalized_eig, dense_sym_eig, dense_sym_eig_vectors, DENSE_LIMIT};
pub use sparse::{CsrMatrix, TripletMatrix};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}
