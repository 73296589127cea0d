//! Multivariate Legendre chaos on [-√3, √3]^M and the coupling matrices G_m.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SgfeError};
use crate::solvers::lanczos::{lanczos_extreme, LanczosOptions, Which};
use crate::sparse::SparseMatrix;

/// Dense eigensolves are used up to this basis size.
pub const DENSE_EIG_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChaosBasis {
    pub dim: usize,
    pub degree: usize,
    /// Multi-indices in graded-lexicographic order (zero index first).
    pub indices: Vec<Vec<usize>>,
}

impl ChaosBasis {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// C(n, k) in floating point-free integer arithmetic.
pub fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n.saturating_sub(k));
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

fn push_degree(dim: usize, degree: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if prefix.len() + 1 == dim {
        prefix.push(degree);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    // larger leading entries first
    for first in (0..=degree).rev() {
        prefix.push(first);
        push_degree(dim, degree - first, prefix, out);
        prefix.pop();
    }
}

/// Complete total-degree basis: all α ∈ ℕ₀^M with |α| ≤ k.
pub fn build_basis(dim: usize, degree: usize) -> ChaosBasis {
    let mut indices = Vec::with_capacity(binomial(dim + degree, degree));
    if dim == 0 {
        indices.push(Vec::new());
    } else {
        for d in 0..=degree {
            push_degree(dim, d, &mut Vec::with_capacity(dim), &mut indices);
        }
    }
    ChaosBasis {
        dim,
        degree,
        indices,
    }
}

/// ⟨y ψ_{i} ψ_{i+1}⟩ for the Legendre polynomials orthonormal on uniform [-√3, √3].
pub fn recurrence_coefficient(i: usize) -> f64 {
    let i = i as f64;
    3f64.sqrt() * (i + 1.0) / ((2.0 * i + 1.0) * (2.0 * i + 3.0)).sqrt()
}

/// The M coupling matrices G_m[α, β] = ⟨y_m ψ_α ψ_β⟩.
pub fn build_g(basis: &ChaosBasis) -> Vec<SparseMatrix> {
    let q = basis.len();
    let lookup: std::collections::HashMap<&[usize], usize> = basis
        .indices
        .iter()
        .enumerate()
        .map(|(i, a)| (a.as_slice(), i))
        .collect();
    (0..basis.dim)
        .map(|m| {
            let mut triplets = Vec::new();
            let mut shifted = vec![0usize; basis.dim];
            for (row, alpha) in basis.indices.iter().enumerate() {
                shifted.copy_from_slice(alpha);
                shifted[m] += 1;
                if let Some(&col) = lookup.get(shifted.as_slice()) {
                    let c = recurrence_coefficient(alpha[m]);
                    triplets.push((row, col, c));
                    triplets.push((col, row, c));
                }
            }
            SparseMatrix::from_triplets(q, q, &triplets)
        })
        .collect()
}

/// Extreme eigenvalues (min, max) of a symmetric matrix.
pub fn extreme_eigs_g(g: &SparseMatrix) -> Result<(f64, f64)> {
    let n = g.nrows();
    if n == 0 {
        return Err(SgfeError::InvalidParameter("empty matrix".into()));
    }
    if n <= DENSE_EIG_LIMIT {
        let ev = g.to_dense().symmetric_eigenvalues();
        let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        return Ok((lo, hi));
    }
    let opts = LanczosOptions::default();
    let lo = lanczos_extreme(g, None, Which::Min, &opts)?.value;
    let hi = lanczos_extreme(g, None, Which::Max, &opts)?.value;
    Ok((lo, hi))
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Dense G_m, for export and checks.
pub fn dense_g(g: &SparseMatrix) -> DMatrix<f64> {
    g.to_dense()
}
