//! Preconditioned Lanczos with full reorthogonalization for extreme eigenvalues
//! of P·A, where A is symmetric and P symmetric positive definite.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SgfeError};
use crate::linalg::{axpy, dot, LinearOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Which {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanczosOptions {
    /// Relative Ritz residual tolerance.
    pub tol: f64,
    pub max_steps: usize,
    pub seed: u64,
    pub max_restarts: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_steps: 400,
            seed: 7,
            max_restarts: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanczosResult {
    pub value: f64,
    pub steps: usize,
    pub restarts: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumBounds {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
    pub converged: bool,
}

enum Attempt {
    Done {
        ritz: Vec<f64>,
        residuals: Vec<f64>,
        steps: usize,
        converged: bool,
    },
    Breakdown,
}

fn run(
    op: &dyn LinearOperator,
    precond: Option<&dyn LinearOperator>,
    opts: &LanczosOptions,
    seed: u64,
    wanted: &dyn Fn(&[f64], &[f64]) -> bool,
) -> Result<Attempt> {
    let n = op.nrows();
    let apply_p = |x: &[f64], y: &mut [f64]| match precond {
        Some(p) => p.apply(x, y),
        None => y.copy_from_slice(x),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut z = vec![0.0; n];
    apply_p(&u, &mut z);
    let b0 = dot(&u, &z);
    if !(b0 > 0.0) || !b0.is_finite() {
        return Ok(Attempt::Breakdown);
    }
    let b0 = b0.sqrt();
    // v: dual vectors, w = P v: primal vectors
    let mut vs: Vec<Vec<f64>> = vec![u.iter().map(|x| x / b0).collect()];
    let mut ws: Vec<Vec<f64>> = vec![z.iter().map(|x| x / b0).collect()];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let max_steps = opts.max_steps.min(n).max(1);
    let mut scale = 0.0f64;

    loop {
        let j = alphas.len();
        op.apply(&ws[j], &mut u);
        if j > 0 {
            axpy(-betas[j - 1], &vs[j - 1], &mut u);
        }
        let alpha = dot(&ws[j], &u);
        axpy(-alpha, &vs[j], &mut u);
        for _ in 0..2 {
            for (v, w) in vs.iter().zip(&ws) {
                let c = dot(w, &u);
                axpy(-c, v, &mut u);
            }
        }
        alphas.push(alpha);
        scale = scale.max(alpha.abs());
        apply_p(&u, &mut z);
        let bsq = dot(&u, &z);
        if !bsq.is_finite() || bsq < -1e-12 * scale * scale {
            return Ok(Attempt::Breakdown);
        }
        let beta = bsq.max(0.0).sqrt();

        let k = alphas.len();
        let lucky = beta <= 1e-12 * scale.max(f64::MIN_POSITIVE);
        let check = lucky || k == max_steps || k % 5 == 0 || k < 5;
        if check {
            let mut t = DMatrix::<f64>::zeros(k, k);
            for i in 0..k {
                t[(i, i)] = alphas[i];
                if i + 1 < k {
                    t[(i, i + 1)] = betas[i];
                    t[(i + 1, i)] = betas[i];
                }
            }
            let eig = SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let ritz: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
            let residuals: Vec<f64> = order
                .iter()
                .map(|&i| {
                    if lucky {
                        0.0
                    } else {
                        beta * eig.eigenvectors[(k - 1, i)].abs()
                    }
                })
                .collect();
            if lucky || wanted(&ritz, &residuals) || k == max_steps {
                let converged = lucky || wanted(&ritz, &residuals);
                return Ok(Attempt::Done {
                    ritz,
                    residuals,
                    steps: k,
                    converged,
                });
            }
        }
        betas.push(beta);
        vs.push(u.iter().map(|x| x / beta).collect());
        ws.push(z.iter().map(|x| x / beta).collect());
    }
}

fn drive(
    op: &dyn LinearOperator,
    precond: Option<&dyn LinearOperator>,
    opts: &LanczosOptions,
    wanted: &dyn Fn(&[f64], &[f64]) -> bool,
) -> Result<(Vec<f64>, Vec<f64>, usize, usize, bool)> {
    if op.nrows() != op.ncols() {
        return Err(SgfeError::DimensionMismatch {
            context: "lanczos operator",
            expected: op.nrows(),
            actual: op.ncols(),
        });
    }
    if let Some(p) = precond {
        if p.nrows() != op.nrows() {
            return Err(SgfeError::DimensionMismatch {
                context: "lanczos preconditioner",
                expected: op.nrows(),
                actual: p.nrows(),
            });
        }
    }
    for restart in 0..=opts.max_restarts {
        let seed = opts.seed.wrapping_add(restart as u64 * 0x9E37_79B9);
        if let Attempt::Done {
            ritz,
            residuals,
            steps,
            converged,
        } = run(op, precond, opts, seed, wanted)?
        {
            return Ok((ritz, residuals, steps, restart, converged));
        }
    }
    Err(SgfeError::Breakdown(format!(
        "lanczos broke down after {} restarts",
        opts.max_restarts
    )))
}

fn ok(value: f64, res: f64, tol: f64) -> bool {
    res <= tol * value.abs().max(f64::MIN_POSITIVE)
}

/// Extreme eigenvalue of `precond * op` (or of `op` alone when no preconditioner is given).
pub fn lanczos_extreme(
    op: &dyn LinearOperator,
    precond: Option<&dyn LinearOperator>,
    which: Which,
    opts: &LanczosOptions,
) -> Result<LanczosResult> {
    let tol = opts.tol;
    let pick = move |r: &[f64], res: &[f64]| match which {
        Which::Min => (r[0], res[0]),
        Which::Max => (r[r.len() - 1], res[r.len() - 1]),
    };
    let wanted = move |r: &[f64], res: &[f64]| {
        let (v, e) = pick(r, res);
        ok(v, e, tol)
    };
    let (ritz, residuals, steps, restarts, converged) = drive(op, precond, opts, &wanted)?;
    Ok(LanczosResult {
        value: pick(&ritz, &residuals).0,
        steps,
        restarts,
        converged,
    })
}

/// Both extreme eigenvalues from one Krylov sequence.
pub fn lanczos_bounds(
    op: &dyn LinearOperator,
    precond: Option<&dyn LinearOperator>,
    opts: &LanczosOptions,
) -> Result<SpectrumBounds> {
    let tol = opts.tol;
    let wanted = move |r: &[f64], res: &[f64]| {
        let k = r.len() - 1;
        ok(r[0], res[0], tol) && ok(r[k], res[k], tol)
    };
    let (ritz, _, steps, _, converged) = drive(op, precond, opts, &wanted)?;
    Ok(SpectrumBounds {
        min: ritz[0],
        max: ritz[ritz.len() - 1],
        steps,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseOperator;
    use crate::sparse::SparseMatrix;

    fn laplacian_1d(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        SparseMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn matches_analytic_spectrum() {
        let n = 60;
        let a = laplacian_1d(n);
        let opts = LanczosOptions {
            tol: 1e-10,
            ..Default::default()
        };
        let lo = lanczos_extreme(&a, None, Which::Min, &opts).unwrap();
        let hi = lanczos_extreme(&a, None, Which::Max, &opts).unwrap();
        let h = std::f64::consts::PI / (n as f64 + 1.0);
        let exact_lo = 2.0 - 2.0 * h.cos();
        let exact_hi = 2.0 - 2.0 * (n as f64 * h).cos();
        assert!((lo.value - exact_lo).abs() < 1e-8 * exact_hi);
        assert!((hi.value - exact_hi).abs() < 1e-8 * exact_hi);
    }

    #[test]
    fn identity_pencil() {
        let a = laplacian_1d(30);
        let inv = DenseOperator(a.to_dense().try_inverse().unwrap());
        let b = lanczos_bounds(&a, Some(&inv), &LanczosOptions::default()).unwrap();
        assert!((b.min - 1.0).abs() < 1e-8 && (b.max - 1.0).abs() < 1e-8);
    }

    #[test]
    fn preconditioned_matches_dense_generalized() {
        let n = 40;
        let a = laplacian_1d(n);
        let d: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
        let pinv = SparseMatrix::from_diagonal(&d.iter().map(|x| 1.0 / x).collect::<Vec<_>>());
        let opts = LanczosOptions {
            tol: 1e-10,
            ..Default::default()
        };
        let b = lanczos_bounds(&a, Some(&pinv), &opts).unwrap();
        let s = DMatrix::from_fn(n, n, |i, j| a.get(i, j) / (d[i] * d[j]).sqrt());
        let ev = s.symmetric_eigenvalues();
        let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((b.min - lo).abs() < 1e-6 * lo.abs());
        assert!((b.max - hi).abs() < 1e-6 * hi);
    }

    #[test]
    fn independent_of_seed() {
        let a = laplacian_1d(80);
        let vals: Vec<f64> = (0..5)
            .map(|s| {
                let opts = LanczosOptions {
                    seed: s,
                    tol: 1e-9,
                    ..Default::default()
                };
                lanczos_extreme(&a, None, Which::Max, &opts).unwrap().value
            })
            .collect();
        for v in &vals {
            assert!((v - vals[0]).abs() < 1e-6 * vals[0]);
        }
    }

    #[test]
    fn indefinite_preconditioner_is_reported() {
        let a = laplacian_1d(10);
        let neg = SparseMatrix::from_diagonal(&[-1.0; 10]);
        assert!(matches!(
            lanczos_extreme(&a, Some(&neg), Which::Min, &LanczosOptions::default()),
            Err(SgfeError::Breakdown(_))
        ));
    }
}
