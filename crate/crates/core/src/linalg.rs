//! Small dense-vector kernels shared by the solvers.

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// y += alpha * x
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

/// Removes the mean of each consecutive chunk of length `chunk`.
pub fn remove_chunk_means(x: &mut [f64], chunk: usize) {
    if chunk == 0 {
        return;
    }
    for panel in x.chunks_mut(chunk) {
        let mean = panel.iter().sum::<f64>() / panel.len() as f64;
        for v in panel.iter_mut() {
            *v -= mean;
        }
    }
}

/// Linear operator on `f64` vectors.
pub trait LinearOperator: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// y = Op x (overwrites y)
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// The identity operator of a given size.
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn nrows(&self) -> usize {
        self.0
    }
    fn ncols(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

/// Wraps a dense matrix as an operator (tests and oracles).
pub struct DenseOperator(pub nalgebra::DMatrix<f64>);

impl LinearOperator for DenseOperator {
    fn nrows(&self) -> usize {
        self.0.nrows()
    }
    fn ncols(&self) -> usize {
        self.0.ncols()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let xv = nalgebra::DVectorView::from_slice(x, x.len());
        let r = &self.0 * xv;
        y.copy_from_slice(r.as_slice());
    }
}

/// Materializes an operator column by column.
pub fn to_dense(op: &dyn LinearOperator) -> nalgebra::DMatrix<f64> {
    let (m, n) = (op.nrows(), op.ncols());
    let mut out = nalgebra::DMatrix::zeros(m, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; m];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut col);
        out.column_mut(j).copy_from_slice(&col);
        e[j] = 0.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_means_removed() {
        let mut x = vec![1.0, 2.0, 3.0, 10.0, 10.0, 10.0];
        remove_chunk_means(&mut x, 3);
        assert_eq!(x, vec![-1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }
}
