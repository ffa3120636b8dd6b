//! Sparse Cholesky factorization of SPD operators (backed by faer's
//! supernodal LL^T with fill-reducing ordering).

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::linalg::LltError;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Side};

use crate::error::{Error, Result};
use crate::sparse::SparseOperator;

pub struct SparseCholesky {
    n: usize,
    llt: Llt<u32, f64>,
}

impl SparseCholesky {
    /// Factorizes a symmetric operator. Only the lower triangle is read.
    pub fn factor(a: &SparseOperator) -> Result<Self> {
        let n = a.dim();
        // a symmetric CSR matrix is its own CSC transpose
        let symbolic = SymbolicSparseColMatRef::new_checked(n, n, a.row_ptr(), None, a.col_idx());
        let mat = SparseColMatRef::new(symbolic, a.values());
        let sym = SymbolicLlt::try_new(mat.symbolic(), Side::Lower)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let llt = Llt::try_new_with_symbolic(sym, mat, Side::Lower).map_err(|e| match e {
            LltError::Numeric(faer::linalg::cholesky::llt::factor::LltError::NonPositivePivot { index }) => {
                Error::NotPositiveDefinite { pivot: index }
            }
            LltError::Generic(e) => Error::Factorization(format!("{e:?}")),
        })?;
        Ok(Self { n, llt })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        assert_eq!(rhs.len(), self.n);
        if self.n == 0 {
            return;
        }
        let m = MatMut::from_column_major_slice_mut(rhs, self.n, 1);
        self.llt.solve_in_place(m);
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal_system() {
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = SparseOperator::from_triplets(n, &t);
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let b = a.mul(&x);
        let chol = SparseCholesky::factor(&a).unwrap();
        let y = chol.solve(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn reports_indefinite_matrix() {
        let a = SparseOperator::from_triplets(2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(matches!(
            SparseCholesky::factor(&a),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }
}
