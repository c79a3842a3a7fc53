//! Compressed sparse column storage and direct solvers backed by faer.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::LltRegularization;
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, LltRef, SymbolicCholesky, SymmetricOrdering,
};
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::linalg::SupernodalThreshold;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par, Side};

use crate::error::{Error, Result};

/// Accumulates `(row, col, value)` entries; duplicates are summed on build.
#[derive(Clone, Debug)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        TripletBuilder {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        TripletBuilder {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    /// Sorts by (col, row) and sums duplicates. Summation order follows insertion
    /// order, so the result is deterministic.
    pub fn build(mut self) -> CscMatrix {
        self.entries.sort_by_key(|&(r, c, _)| (c, r));
        let mut col_ptr = vec![0usize; self.ncols + 1];
        let mut row_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_idx.push(r);
                values.push(v);
                col_ptr[c + 1] += 1;
                last = Some((r, c));
            }
        }
        for c in 0..self.ncols {
            col_ptr[c + 1] += col_ptr[c];
        }
        CscMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            col_ptr,
            row_idx,
            values,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CscMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut t = TripletBuilder::new(nrows, ncols);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push(i, j, v);
                }
            }
        }
        t.build()
    }

    /// Wraps raw CSC arrays; row indices must be sorted and unique per column.
    pub fn from_raw(
        nrows: usize,
        ncols: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        assert_eq!(col_ptr.len(), ncols + 1);
        assert_eq!(row_idx.len(), values.len());
        assert_eq!(col_ptr[ncols], row_idx.len());
        debug_assert!((0..ncols).all(|c| row_idx[col_ptr[c]..col_ptr[c + 1]]
            .windows(2)
            .all(|w| w[0] < w[1])));
        CscMatrix {
            nrows,
            ncols,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.col_ptr[col]..self.col_ptr[col + 1];
        match self.row_idx[range.clone()].binary_search(&row) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for c in 0..self.ncols {
            let xc = x[c];
            if xc == 0.0 {
                continue;
            }
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[k]] += self.values[k] * xc;
            }
        }
        y
    }

    /// `y = Aᵀ x`
    pub fn transpose_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        (0..self.ncols)
            .map(|c| {
                (self.col_ptr[c]..self.col_ptr[c + 1])
                    .map(|k| self.values[k] * x[self.row_idx[k]])
                    .sum()
            })
            .collect()
    }

    /// `xᵀ A x`
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let ax = self.mul_vec(x);
        ax.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, s: f64) -> CscMatrix {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= s);
        m
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for c in 0..self.ncols {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                d[self.row_idx[k]][c] += self.values[k];
            }
        }
        d
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for c in 0..self.ncols {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[k];
                worst = worst.max((self.values[k] - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// Keeps the rows and columns selected by `map` (old index → new index).
    pub fn submatrix(
        &self,
        row_map: &[Option<usize>],
        col_map: &[Option<usize>],
        nrows: usize,
        ncols: usize,
    ) -> CscMatrix {
        let mut t = TripletBuilder::with_capacity(nrows, ncols, self.nnz());
        for c in 0..self.ncols {
            let Some(nc) = col_map[c] else { continue };
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                if let Some(nr) = row_map[self.row_idx[k]] {
                    t.push(nr, nc, self.values[k]);
                }
            }
        }
        t.build()
    }

    /// Sum `a·self + b·other` over the union pattern.
    pub fn linear_combination(&self, a: f64, other: &CscMatrix, b: f64) -> CscMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t = TripletBuilder::with_capacity(self.nrows, self.ncols, self.nnz() + other.nnz());
        for (m, s) in [(self, a), (other, b)] {
            for c in 0..m.ncols {
                for k in m.col_ptr[c]..m.col_ptr[c + 1] {
                    t.push(m.row_idx[k], c, s * m.values[k]);
                }
            }
        }
        t.build()
    }

    fn symbolic(&self) -> SymbolicSparseColMatRef<'_, usize> {
        // Row indices are sorted and unique by construction.
        SymbolicSparseColMatRef::new_checked(self.nrows, self.ncols, &self.col_ptr, None, &self.row_idx)
    }

    fn faer_ref(&self) -> SparseColMatRef<'_, usize, f64> {
        SparseColMatRef::new(self.symbolic(), &self.values)
    }

    pub fn same_pattern(&self, other: &CscMatrix) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && self.col_ptr == other.col_ptr
            && self.row_idx == other.row_idx
    }
}

fn solve_columns<S: Solve<f64>>(solver: &S, rhs: &[f64]) -> Vec<f64> {
    let mut x = rhs.to_vec();
    let n = x.len();
    let mat = MatMut::from_column_major_slice_mut(&mut x, n, 1);
    solver.solve_in_place(mat);
    x
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
/// Only the lower triangle is read. The symbolic analysis and the factor
/// storage are kept, so matrices with the same pattern refactor without
/// allocating.
pub struct Cholesky {
    pattern: CscMatrix,
    symbolic: SymbolicCholesky<usize>,
    factor: Vec<f64>,
    lower: Vec<f64>,
    lower_pattern: (Vec<usize>, Vec<usize>),
    lower_map: Vec<usize>,
    scratch: MemBuffer,
}

impl Cholesky {
    pub fn new(matrix: &CscMatrix) -> Result<Self> {
        if matrix.nrows != matrix.ncols {
            return Err(Error::Solver(
                "Cholesky factorization needs a square matrix".into(),
            ));
        }
        let n = matrix.nrows;
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut lower_map = Vec::new();
        col_ptr.push(0);
        for c in 0..n {
            for k in matrix.col_ptr[c]..matrix.col_ptr[c + 1] {
                if matrix.row_idx[k] >= c {
                    row_idx.push(matrix.row_idx[k]);
                    lower_map.push(k);
                }
            }
            col_ptr.push(row_idx.len());
        }
        let sym = SymbolicSparseColMatRef::new_checked(n, n, &col_ptr, None, &row_idx);
        let symbolic = factorize_symbolic_cholesky(
            sym,
            Side::Lower,
            SymmetricOrdering::Amd,
            CholeskySymbolicParams {
                // The plate systems have dense nodal blocks, which the
                // supernodal kernels handle several times faster.
                supernodal_flop_ratio_threshold: SupernodalThreshold::FORCE_SUPERNODAL,
                ..Default::default()
            },
        )
        .map_err(|e| Error::Solver(format!("symbolic Cholesky analysis failed: {e:?}")))?;
        let req = symbolic
            .factorize_numeric_llt_scratch::<f64>(Par::Seq, Default::default())
            .or(symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
        let mut chol = Cholesky {
            pattern: CscMatrix {
                values: Vec::new(),
                ..matrix.clone()
            },
            factor: vec![0.0; symbolic.len_val()],
            symbolic,
            lower: vec![0.0; lower_map.len()],
            lower_pattern: (col_ptr, row_idx),
            lower_map,
            scratch: MemBuffer::new(req),
        };
        chol.numeric(matrix)?;
        Ok(chol)
    }

    fn numeric(&mut self, matrix: &CscMatrix) -> Result<()> {
        for (dst, &k) in self.lower.iter_mut().zip(&self.lower_map) {
            *dst = matrix.values[k];
        }
        let n = self.pattern.nrows;
        let (col_ptr, row_idx) = &self.lower_pattern;
        let sym = SymbolicSparseColMatRef::new_checked(n, n, col_ptr, None, row_idx);
        self.symbolic
            .factorize_numeric_llt(
                &mut self.factor,
                SparseColMatRef::new(sym, &self.lower),
                Side::Lower,
                LltRegularization::default(),
                Par::Seq,
                MemStack::new(&mut self.scratch),
                Default::default(),
            )
            .map_err(|e| Error::Solver(format!("matrix is not positive definite: {e:?}")))?;
        Ok(())
    }

    /// Refactors with new values; falls back to a fresh analysis when the
    /// pattern changed.
    pub fn refactor(&mut self, matrix: &CscMatrix) -> Result<()> {
        if self.pattern.same_pattern(matrix) {
            self.numeric(matrix)
        } else {
            *self = Cholesky::new(matrix)?;
            Ok(())
        }
    }

    pub fn dim(&self) -> usize {
        self.pattern.nrows
    }

    /// Number of stored entries in the factor.
    pub fn factor_len(&self) -> usize {
        self.factor.len()
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.dim());
        let mut x = rhs.to_vec();
        let n = x.len();
        let req = self.symbolic.solve_in_place_scratch::<f64>(1, Par::Seq);
        let mut buf = MemBuffer::new(req);
        LltRef::new(&self.symbolic, &self.factor).solve_in_place_with_conj(
            Conj::No,
            MatMut::from_column_major_slice_mut(&mut x, n, 1),
            Par::Seq,
            MemStack::new(&mut buf),
        );
        x
    }
}

/// Sparse LU factorization for general (including indefinite) square systems.
pub struct SparseLu {
    dim: usize,
    numeric: Lu<usize, f64>,
}

impl SparseLu {
    pub fn new(matrix: &CscMatrix) -> Result<Self> {
        if matrix.nrows != matrix.ncols {
            return Err(Error::Solver("LU factorization needs a square matrix".into()));
        }
        let symbolic = SymbolicLu::try_new(matrix.symbolic())
            .map_err(|e| Error::Solver(format!("symbolic LU analysis failed: {e:?}")))?;
        let numeric = Lu::try_new_with_symbolic(symbolic, matrix.faer_ref())
            .map_err(|e| Error::Solver(format!("LU factorization failed: {e:?}")))?;
        Ok(SparseLu {
            dim: matrix.nrows,
            numeric,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.dim);
        solve_columns(&self.numeric, rhs)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CscMatrix {
        let mut t = TripletBuilder::new(n, n);
        for i in 0..n {
            t.push(i, i, 2.0);
            if i > 0 {
                t.push(i, i - 1, -1.0);
                t.push(i - 1, i, -1.0);
            }
        }
        t.build()
    }

    #[test]
    fn duplicates_are_summed() {
        let mut t = TripletBuilder::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(1, 0, 2.0);
        t.push(0, 0, 3.0);
        let m = t.build();
        assert_eq!(m.get(0, 0), 4.0);
        assert_eq!(m.get(1, 0), 2.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn cholesky_solves_and_refactors() {
        let a = laplace_1d(50);
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = a.mul_vec(&x);
        let mut chol = Cholesky::new(&a).unwrap();
        let got = chol.solve(&b);
        assert!(got.iter().zip(&x).all(|(g, e)| (g - e).abs() < 1e-10));

        let a2 = a.scaled(3.0);
        chol.refactor(&a2).unwrap();
        let got = chol.solve(&a2.mul_vec(&x));
        assert!(got.iter().zip(&x).all(|(g, e)| (g - e).abs() < 1e-10));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = CscMatrix::from_dense(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(Cholesky::new(&a).is_err());
    }

    #[test]
    fn lu_solves_saddle_system() {
        // [2 1; 1 0] is symmetric indefinite.
        let a = CscMatrix::from_dense(&[vec![2.0, 1.0], vec![1.0, 0.0]]);
        let lu = SparseLu::new(&a).unwrap();
        let x = lu.solve(&[3.0, 1.0]);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn transpose_product_matches_dense() {
        let a = CscMatrix::from_dense(&[vec![1.0, 0.0, 2.0], vec![0.0, 3.0, -1.0]]);
        assert_eq!(a.transpose_mul_vec(&[1.0, 2.0]), vec![1.0, 6.0, 0.0]);
        assert_eq!(a.mul_vec(&[1.0, 1.0, 1.0]), vec![3.0, 2.0]);
    }
}
