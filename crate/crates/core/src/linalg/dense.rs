use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest dense symmetric problem the oracle routines accept.
pub const DENSE_LIMIT: usize = 2000;

fn guard(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension { expected: a.nrows(), got: a.ncols() });
    }
    if a.nrows() > DENSE_LIMIT {
        return Err(Error::SizeGuard { size: a.nrows(), limit: DENSE_LIMIT });
    }
    Ok(())
}

/// Eigenvalues of a dense symmetric matrix, ascending.
pub fn dense_sym_eig(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    guard(a)?;
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Eigenpairs of a dense symmetric matrix, ascending; column `i` of the matrix pairs with value `i`.
pub fn dense_sym_eig_vectors(a: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    guard(a)?;
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), a.nrows(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Eigenvalues of the symmetric-definite pencil `A x = mu B x` with `B` positive definite.
pub fn dense_generalized_eig(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    guard(a)?;
    guard(b)?;
    let chol = b.clone().cholesky().ok_or(Error::NotSpd { row: 0, pivot: f64::NAN })?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or(Error::NotSpd { row: 0, pivot: 0.0 })?;
    let c = &linv * a * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    dense_sym_eig(&c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_eigenvalues() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 2.0]));
        assert_eq!(dense_sym_eig(&a).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn swap_matrix_eigenvalues() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let ev = dense_sym_eig(&a).unwrap();
        assert!((ev[0] + 1.0).abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn reconstruction_from_vectors() {
        let a = DMatrix::from_fn(6, 6, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        let (vals, q) = dense_sym_eig_vectors(&a).unwrap();
        let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vals));
        let err = (&q * lam * q.transpose() - &a).norm();
        assert!(err <= 1e-9 * a.norm());
    }

    #[test]
    fn size_guard() {
        let a = DMatrix::<f64>::zeros(DENSE_LIMIT + 1, DENSE_LIMIT + 1);
        assert!(matches!(dense_sym_eig(&a), Err(Error::SizeGuard { .. })));
    }

    #[test]
    fn generalized_pencil() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 8.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let ev = dense_generalized_eig(&a, &b).unwrap();
        assert!((ev[0] - 2.0).abs() < 1e-14 && (ev[1] - 4.0).abs() < 1e-14);
    }
}
