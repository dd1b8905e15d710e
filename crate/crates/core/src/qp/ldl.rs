//! Sparse LDLᵀ factorization of symmetric quasi-definite matrices, with a
//! fixed sparsity pattern analysed once and refactorized with new values.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::mat::MatMut;
use faer::sparse::linalg::cholesky::{factorize_symbolic_cholesky, LdltRef, SymbolicCholesky};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, Par, Side};

pub(crate) struct SparseLdl {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    symbolic: SymbolicCholesky<usize>,
    /// Expected sign of each pivot: `+1` for the primal block, `−1` for the
    /// dual block. Pivots with the wrong sign or tiny magnitude are
    /// replaced during factorization.
    signs: Vec<i8>,
    factor: Vec<f64>,
    factor_buf: MemBuffer,
    solve_buf: MemBuffer,
    factored: bool,
}

impl SparseLdl {
    /// Analyses the pattern given by `entries` (either triangle; duplicates
    /// allowed). The diagonal is always part of the pattern.
    pub fn new(n: usize, entries: impl IntoIterator<Item = (usize, usize)>, signs: Vec<i8>) -> Option<Self> {
        assert_eq!(signs.len(), n);
        let mut cols: Vec<Vec<usize>> = (0..n).map(|j| vec![j]).collect();
        for (i, j) in entries {
            let (r, c) = (i.min(j), i.max(j));
            cols[c].push(r);
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for col in &mut cols {
            col.sort_unstable();
            col.dedup();
            row_idx.extend_from_slice(col);
            col_ptr.push(row_idx.len());
        }
        let pattern = SymbolicSparseColMatRef::new_checked(n, n, &col_ptr, None, &row_idx);
        let symbolic =
            factorize_symbolic_cholesky(pattern, Side::Upper, Default::default(), Default::default()).ok()?;
        let factor = vec![0.0; symbolic.len_val()];
        let factor_buf =
            MemBuffer::new(symbolic.factorize_numeric_ldlt_scratch::<f64>(Par::Seq, Default::default()));
        let solve_buf = MemBuffer::new(symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
        Some(Self {
            n,
            col_ptr,
            row_idx,
            symbolic,
            signs,
            factor,
            factor_buf,
            solve_buf,
            factored: false,
        })
    }

    /// Number of stored upper-triangle entries.
    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Position of entry `(i, j)` in the value array passed to `factor`.
    pub fn slot(&self, i: usize, j: usize) -> usize {
        let (r, c) = (i.min(j), i.max(j));
        let col = &self.row_idx[self.col_ptr[c]..self.col_ptr[c + 1]];
        self.col_ptr[c] + col.binary_search(&r).expect("entry is in the pattern")
    }

    /// Numeric factorization; `values` follows the slot order. Pivots whose
    /// magnitude falls below `eps` (or whose sign is wrong) are set to
    /// `±delta`.
    pub fn factor(&mut self, values: &[f64], delta: f64, eps: f64) -> bool {
        assert_eq!(values.len(), self.nnz());
        let mat = SparseColMatRef::new(
            SymbolicSparseColMatRef::new_checked(self.n, self.n, &self.col_ptr, None, &self.row_idx),
            values,
        );
        let regularization = LdltRegularization {
            dynamic_regularization_signs: Some(&self.signs),
            dynamic_regularization_delta: delta,
            dynamic_regularization_epsilon: eps,
        };
        let ok = self
            .symbolic
            .factorize_numeric_ldlt(
                &mut self.factor,
                mat,
                Side::Upper,
                regularization,
                Par::Seq,
                MemStack::new(&mut self.factor_buf),
                Default::default(),
            )
            .is_ok();
        self.factored = ok && self.factor.iter().all(|v| v.is_finite());
        self.factored
    }

    pub fn solve(&mut self, rhs: &mut [f64]) {
        assert!(self.factored, "solve before a successful factorization");
        let ldl = LdltRef::new(&self.symbolic, &self.factor);
        let mat = MatMut::from_column_major_slice_mut(rhs, self.n, 1);
        ldl.solve_in_place_with_conj(Conj::No, mat, Par::Seq, MemStack::new(&mut self.solve_buf));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_a_quasi_definite_system() {
        // [[2, 1], [1, -1]] x = [3, 0]  →  x = (1, 1)
        let mut ldl = SparseLdl::new(2, [(0, 1)], vec![1, -1]).unwrap();
        let mut vals = vec![0.0; ldl.nnz()];
        vals[ldl.slot(0, 0)] = 2.0;
        vals[ldl.slot(0, 1)] = 1.0;
        vals[ldl.slot(1, 1)] = -1.0;
        assert!(ldl.factor(&vals, 1e-12, 1e-14));
        let mut rhs = vec![3.0, 0.0];
        ldl.solve(&mut rhs);
        assert!((rhs[0] - 1.0).abs() < 1e-14 && (rhs[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn refactorizes_with_new_values() {
        let mut ldl = SparseLdl::new(3, [(0, 2), (1, 2)], vec![1, 1, -1]).unwrap();
        for scale in [1.0, 4.0] {
            let mut vals = vec![0.0; ldl.nnz()];
            vals[ldl.slot(0, 0)] = scale;
            vals[ldl.slot(1, 1)] = scale;
            vals[ldl.slot(0, 2)] = 1.0;
            vals[ldl.slot(1, 2)] = 1.0;
            vals[ldl.slot(2, 2)] = -1e-8;
            assert!(ldl.factor(&vals, 1e-10, 1e-14));
            // minimize scale/2 |x|² subject to x0 + x1 = 2
            let mut rhs = vec![0.0, 0.0, 2.0];
            ldl.solve(&mut rhs);
            assert!((rhs[0] - 1.0).abs() < 1e-6, "{rhs:?}");
            assert!((rhs[2] + scale).abs() < 1e-5, "{rhs:?}");
        }
    }
}
