//! Sparse symmetric positive definite solves with a fixed sparsity pattern.
//!
//! The pattern (lower triangle, duplicates allowed) is fixed once; each
//! factorization only supplies the values in the same order, so the
//! symbolic analysis and fill-reducing ordering are computed a single time.

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{Pair, SparseColMat, SymbolicSparseColMat};
use faer::Side;

use crate::error::{Error, Result};

/// Alias kept local to this module; the argsort type lives in `faer::sparse`.
type Argsort = faer::sparse::Argsort<usize>;

pub struct SpdPattern {
    n: usize,
    entries: usize,
    symbolic: SymbolicSparseColMat<usize>,
    argsort: Argsort,
    llt: SymbolicLlt<usize>,
}

impl SpdPattern {
    /// `entries` are `(row, col)` pairs with `row ≥ col`.
    pub fn new(n: usize, entries: &[(usize, usize)]) -> Result<Self> {
        debug_assert!(entries.iter().all(|&(r, c)| r >= c && r < n));
        let pairs: Vec<Pair<usize, usize>> =
            entries.iter().map(|&(row, col)| Pair { row, col }).collect();
        let (symbolic, argsort) = SymbolicSparseColMat::try_new_from_indices(n, n, &pairs)
            .map_err(|e| Error::Linear(format!("pattern: {e:?}")))?;
        let llt = SymbolicLlt::try_new(symbolic.rb(), Side::Lower)
            .map_err(|e| Error::Linear(format!("symbolic factorization: {e:?}")))?;
        Ok(Self {
            n,
            entries: entries.len(),
            symbolic,
            argsort,
            llt,
        })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Factors the matrix with the given entry values and solves in place.
    pub fn solve(&self, values: &[f64], rhs: &mut [f64]) -> Result<()> {
        if values.len() != self.entries || rhs.len() != self.n {
            return Err(Error::Linear("value or right-hand side length mismatch".into()));
        }
        let mat = SparseColMat::new_from_argsort(self.symbolic.clone(), &self.argsort, values)
            .map_err(|e| Error::Linear(format!("assembly: {e:?}")))?;
        let llt = Llt::try_new_with_symbolic(self.llt.clone(), mat.rb(), Side::Lower)
            .map_err(|e| Error::Linear(format!("matrix is not positive definite: {e:?}")))?;
        let mut b = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        llt.solve_in_place(b.as_mut());
        for (i, r) in rhs.iter_mut().enumerate() {
            *r = b[(i, 0)];
        }
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Linear("non-finite solution".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_system() {
        // 1D Dirichlet Laplacian with duplicated diagonal contributions
        let n = 50;
        let mut entries = Vec::new();
        let mut values = Vec::new();
        for i in 0..n {
            entries.push((i, i));
            values.push(1.0);
            entries.push((i, i));
            values.push(1.0);
            if i > 0 {
                entries.push((i, i - 1));
                values.push(-1.0);
            }
        }
        let pattern = SpdPattern::new(n, &entries).unwrap();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b: Vec<f64> = (0..n)
            .map(|i| {
                2.0 * x[i] - if i > 0 { x[i - 1] } else { 0.0 } - if i + 1 < n { x[i + 1] } else { 0.0 }
            })
            .collect();
        pattern.solve(&values, &mut b).unwrap();
        for i in 0..n {
            assert!((b[i] - x[i]).abs() < 1e-11);
        }
        // same pattern, new values
        let scaled: Vec<f64> = values.iter().map(|v| 2.0 * v).collect();
        let mut b2: Vec<f64> = x.iter().map(|_| 0.0).collect();
        pattern.solve(&scaled, &mut b2).unwrap();
        assert!(b2.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn indefinite_is_rejected() {
        let pattern = SpdPattern::new(2, &[(0, 0), (1, 0), (1, 1)]).unwrap();
        let mut b = vec![1.0, 1.0];
        assert!(pattern.solve(&[1.0, 2.0, 1.0], &mut b).is_err());
    }
}
