//! Compressed-row sparse matrices and a profile (skyline) Cholesky factorization.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Result, SgfeError};
use crate::linalg::LinearOperator;

/// Compressed sparse row matrix with sorted, duplicate-free column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        let mut next = counts.clone();
        for &(r, c, v) in triplets {
            let k = next[r];
            cols[k] = c;
            vals[k] = v;
            next[r] += 1;
        }

        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            scratch.clear();
            scratch.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            scratch.sort_unstable_by_key(|&(c, _)| c);
            for &(c, v) in &scratch {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &t)
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let t: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(d.len(), d.len(), &t)
    }

    /// Converts a dense matrix, dropping entries with |a_ij| <= drop_tol.
    pub fn from_dense(a: &DMatrix<f64>, drop_tol: f64) -> Self {
        let mut t = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)].abs() > drop_tol {
                    t.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(a.nrows(), a.ncols(), &t)
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

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates the stored entries of row `r` as (col, value).
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols))
            .map(|i| self.get(i, i))
            .collect()
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yr = acc;
        }
    }

    /// y += alpha * A x
    pub fn mul_vec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yr += alpha * acc;
        }
    }

    /// y = A^T x
    pub fn mul_vec_transpose(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        y.iter_mut().for_each(|v| *v = 0.0);
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[k]] += self.values[k] * xr;
            }
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                t.push((c, r, v));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// Extracts the submatrix with the given row and column index lists.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (new, &old) in cols.iter().enumerate() {
            col_map[old] = new;
        }
        let mut t = Vec::new();
        for (new_r, &old_r) in rows.iter().enumerate() {
            for (c, v) in self.row(old_r) {
                if col_map[c] != usize::MAX {
                    t.push((new_r, col_map[c], v));
                }
            }
        }
        Self::from_triplets(rows.len(), cols.len(), &t)
    }

    /// Block diagonal matrix with `copies` copies of `self` on the diagonal.
    pub fn block_diagonal(&self, copies: usize) -> Self {
        let mut t = Vec::with_capacity(self.nnz() * copies);
        for b in 0..copies {
            for r in 0..self.nrows {
                for (c, v) in self.row(r) {
                    t.push((b * self.nrows + r, b * self.ncols + c, v));
                }
            }
        }
        Self::from_triplets(self.nrows * copies, self.ncols * copies, &t)
    }

    /// Horizontal concatenation [self, other].
    pub fn hcat(&self, other: &SparseMatrix) -> Self {
        assert_eq!(self.nrows, other.nrows);
        let mut t = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.nrows {
            t.extend(self.row(r).map(|(c, v)| (r, c, v)));
            t.extend(other.row(r).map(|(c, v)| (r, self.ncols + c, v)));
        }
        Self::from_triplets(self.nrows, self.ncols + other.ncols, &t)
    }

    /// Product self^T * other * self (Galerkin coarse operator when `self` is a prolongation).
    pub fn galerkin(&self, fine: &SparseMatrix) -> Self {
        let p = self;
        let pt = p.transpose();
        let ap = fine.matmul(p);
        pt.matmul(&ap)
    }

    pub fn matmul(&self, other: &SparseMatrix) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut t = Vec::new();
        let mut acc = vec![0.0; other.ncols];
        let mut touched: Vec<usize> = Vec::new();
        let mut mark = vec![false; other.ncols];
        for r in 0..self.nrows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if !mark[c] {
                        mark[c] = true;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            for &c in &touched {
                t.push((r, c, acc[c]));
                acc[c] = 0.0;
                mark[c] = false;
            }
            touched.clear();
        }
        Self::from_triplets(self.nrows, other.ncols, &t)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                d[(r, c)] += v;
            }
        }
        d
    }

    /// Maximum of |A - A^T| over all entries.
    pub fn asymmetry(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// Writes the matrix in MatrixMarket coordinate format (1-based indices).
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                writeln!(w, "{} {} {:.17e}", r + 1, c + 1, v)?;
            }
        }
        Ok(())
    }
}

impl LinearOperator for SparseMatrix {
    fn nrows(&self) -> usize {
        self.nrows
    }
    fn ncols(&self) -> usize {
        self.ncols
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec(x, y);
    }
}

/// Writes a dense matrix in MatrixMarket array format.
pub fn write_dense_matrix_market<W: Write>(a: &DMatrix<f64>, mut w: W) -> std::io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} {}", a.nrows(), a.ncols())?;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            writeln!(w, "{:.17e}", a[(i, j)])?;
        }
    }
    Ok(())
}

/// Cholesky factor L (A = L L^T) stored by rows in variable-band (skyline) form.
///
/// Row `i` holds entries for columns `first[i]..=i`. Fill-in stays inside the
/// envelope, so structured-grid numberings give storage linear in n times the
/// bandwidth.
#[derive(Debug, Clone)]
pub struct ProfileCholesky {
    n: usize,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl ProfileCholesky {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(SgfeError::DimensionMismatch {
                context: "cholesky",
                expected: n,
                actual: a.ncols(),
            });
        }
        let first: Vec<usize> = (0..n)
            .map(|i| {
                a.row(i)
                    .map(|(c, _)| c)
                    .filter(|&c| c <= i)
                    .min()
                    .unwrap_or(i)
            })
            .collect();
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            start.push(start[i] + (i - first[i] + 1));
        }
        let mut data = vec![0.0; start[n]];
        for i in 0..n {
            for (c, v) in a.row(i) {
                if c <= i {
                    data[start[i] + c - first[i]] = v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = data[start[i] + j - fi];
                let ri = &data[start[i] + lo - fi..start[i] + j - fi];
                let rj = &data[start[j] + lo - fj..start[j] + j - fj];
                s -= ri.iter().zip(rj).map(|(x, y)| x * y).sum::<f64>();
                if j == i {
                    if !(s > 0.0) {
                        return Err(SgfeError::NotPositiveDefinite { row: i, pivot: s });
                    }
                    data[start[i] + i - fi] = s.sqrt();
                } else {
                    let ljj = data[start[j] + j - fj];
                    data[start[i] + j - fi] = s / ljj;
                }
            }
        }
        Ok(Self {
            n,
            first,
            start,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves A x = b in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        // forward: L y = b
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let mut s = x[i];
            for (k, &l) in row[..i - fi].iter().enumerate() {
                s -= l * x[fi + k];
            }
            x[i] = s / row[i - fi];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            x[i] /= row[i - fi];
            let xi = x[i];
            for (k, &l) in row[..i - fi].iter().enumerate() {
                x[fi + k] -= l * xi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        SparseMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn duplicates_are_summed() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.5), (1, 0, -1.0)]);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 1), 3.5);
        assert_eq!(a.get(1, 1), 0.0);
    }

    #[test]
    fn transpose_matvec_matches_transpose_matrix() {
        let a = SparseMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, 2.0), (1, 1, -3.0)]);
        let x = [1.0, 2.0];
        let mut y1 = [0.0; 3];
        let mut y2 = [0.0; 3];
        a.mul_vec_transpose(&x, &mut y1);
        a.transpose().mul_vec(&x, &mut y2);
        assert_eq!(y1, y2);
    }

    #[test]
    fn profile_cholesky_solves_tridiagonal() {
        let a = laplace_1d(20);
        let chol = ProfileCholesky::factor(&a).unwrap();
        let x_true: Vec<f64> = (0..20).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; 20];
        a.mul_vec(&x_true, &mut b);
        let x = chol.solve(&b);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn profile_cholesky_rejects_indefinite() {
        let a = SparseMatrix::from_triplets(
            2,
            2,
            &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)],
        );
        assert!(matches!(
            ProfileCholesky::factor(&a),
            Err(SgfeError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn matmul_matches_dense() {
        let a = laplace_1d(5);
        let p = SparseMatrix::from_triplets(
            5,
            2,
            &[
                (0, 0, 0.5),
                (1, 0, 1.0),
                (2, 0, 0.5),
                (2, 1, 0.5),
                (3, 1, 1.0),
                (4, 1, 0.5),
            ],
        );
        let g = p.galerkin(&a).to_dense();
        let gd = p.to_dense().transpose() * a.to_dense() * p.to_dense();
        assert!((g - gd).abs().max() < 1e-14);
    }

    #[test]
    fn matrix_market_header() {
        let a = SparseMatrix::identity(2);
        let mut buf = Vec::new();
        a.write_matrix_market(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 "));
    }
}
