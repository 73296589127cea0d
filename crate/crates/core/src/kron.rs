//! Matrix-free Kronecker-sum operators Σ G_t ⊗ K_t and the SG saddle-point operator.
//!
//! Vectors are stored panel by panel: entry `alpha * n + i` holds FE dof `i`
//! of chaos mode `alpha`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SgfeError};
use crate::fem::{CavityLoad, FeMatrices};
use crate::linalg::{axpy, LinearOperator};
use crate::sparse::SparseMatrix;

/// Largest total system size for which dense oracle matrices are built.
pub const DENSE_LIMIT: usize = 6000;

/// Stochastic factor of one Kronecker term.
#[derive(Debug, Clone)]
pub enum SgFactor {
    Identity,
    Matrix(Arc<SparseMatrix>),
}

#[derive(Debug, Clone)]
pub struct KronTerm {
    pub sg: SgFactor,
    pub fe: Arc<SparseMatrix>,
}

#[derive(Debug)]
pub struct KronOperator {
    q: usize,
    rows: usize,
    cols: usize,
    terms: Vec<KronTerm>,
    applications: AtomicUsize,
    fe_matvecs: AtomicUsize,
}

impl Clone for KronOperator {
    fn clone(&self) -> Self {
        Self {
            q: self.q,
            rows: self.rows,
            cols: self.cols,
            terms: self.terms.clone(),
            applications: AtomicUsize::new(0),
            fe_matvecs: AtomicUsize::new(0),
        }
    }
}

impl KronOperator {
    pub fn new(q: usize, terms: Vec<KronTerm>) -> Result<Self> {
        let first = terms.first().ok_or_else(|| {
            SgfeError::InvalidParameter("Kronecker operator needs at least one term".into())
        })?;
        let (rows, cols) = (first.fe.nrows(), first.fe.ncols());
        for t in &terms {
            if t.fe.nrows() != rows || t.fe.ncols() != cols {
                return Err(SgfeError::DimensionMismatch {
                    context: "Kronecker FE factor",
                    expected: rows * cols,
                    actual: t.fe.nrows() * t.fe.ncols(),
                });
            }
            if let SgFactor::Matrix(g) = &t.sg {
                if g.nrows() != q || g.ncols() != q {
                    return Err(SgfeError::DimensionMismatch {
                        context: "Kronecker SG factor",
                        expected: q,
                        actual: g.nrows(),
                    });
                }
            }
        }
        Ok(Self {
            q,
            rows,
            cols,
            terms,
            applications: AtomicUsize::new(0),
            fe_matvecs: AtomicUsize::new(0),
        })
    }

    /// I ⊗ K
    pub fn blockwise(q: usize, fe: Arc<SparseMatrix>) -> Self {
        Self::new(
            q,
            vec![KronTerm {
                sg: SgFactor::Identity,
                fe,
            }],
        )
        .expect("single term is consistent")
    }

    pub fn num_modes(&self) -> usize {
        self.q
    }

    pub fn fe_rows(&self) -> usize {
        self.rows
    }

    pub fn fe_cols(&self) -> usize {
        self.cols
    }

    pub fn terms(&self) -> &[KronTerm] {
        &self.terms
    }

    pub fn applications(&self) -> usize {
        self.applications.load(Ordering::Relaxed)
    }

    pub fn fe_matvecs(&self) -> usize {
        self.fe_matvecs.load(Ordering::Relaxed)
    }

    pub fn reset_counters(&self) {
        self.applications.store(0, Ordering::Relaxed);
        self.fe_matvecs.store(0, Ordering::Relaxed);
    }

    /// Checked application.
    pub fn try_apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.q * self.cols {
            return Err(SgfeError::DimensionMismatch {
                context: "Kronecker input",
                expected: self.q * self.cols,
                actual: x.len(),
            });
        }
        if y.len() != self.q * self.rows {
            return Err(SgfeError::DimensionMismatch {
                context: "Kronecker output",
                expected: self.q * self.rows,
                actual: y.len(),
            });
        }
        self.apply_unchecked(x, y);
        Ok(())
    }

    fn apply_unchecked(&self, x: &[f64], y: &mut [f64]) {
        self.applications.fetch_add(1, Ordering::Relaxed);
        self.fe_matvecs
            .fetch_add(self.terms.len() * self.q, Ordering::Relaxed);
        let (r, c) = (self.rows, self.cols);
        y.iter_mut().for_each(|v| *v = 0.0);
        let mut prod = vec![0.0; self.q * r];
        for term in &self.terms {
            // FE factor on every panel, then combine panels with the SG factor
            match &term.sg {
                SgFactor::Identity => {
                    y.par_chunks_mut(r)
                        .zip(x.par_chunks(c))
                        .for_each(|(yb, xb)| term.fe.mul_vec_add(1.0, xb, yb));
                }
                SgFactor::Matrix(g) => {
                    prod.par_chunks_mut(r)
                        .zip(x.par_chunks(c))
                        .for_each(|(pb, xb)| term.fe.mul_vec(xb, pb));
                    y.par_chunks_mut(r).enumerate().for_each(|(beta, yb)| {
                        for (alpha, gval) in g.row(beta) {
                            axpy(gval, &prod[alpha * r..(alpha + 1) * r], yb);
                        }
                    });
                }
            }
        }
    }

    /// Explicit Σ G_t ⊗ K_t.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let n = self.q * self.rows.max(self.cols);
        if n > DENSE_LIMIT {
            return Err(SgfeError::SizeGuard {
                size: n,
                limit: DENSE_LIMIT,
            });
        }
        let mut out = DMatrix::zeros(self.q * self.rows, self.q * self.cols);
        for term in &self.terms {
            let g = match &term.sg {
                SgFactor::Identity => DMatrix::identity(self.q, self.q),
                SgFactor::Matrix(g) => g.to_dense(),
            };
            out += g.kronecker(&term.fe.to_dense());
        }
        Ok(out)
    }
}

impl LinearOperator for KronOperator {
    fn nrows(&self) -> usize {
        self.q * self.rows
    }
    fn ncols(&self) -> usize {
        self.q * self.cols
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.try_apply(x, y)
            .expect("Kronecker operator dimension mismatch");
    }
}

/// Matvec tallies for the solver cost comparison.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatvecCounts {
    pub a: usize,
    pub b: usize,
    pub bt: usize,
    pub laplacian_inv: usize,
}

/// The SG saddle-point operator [𝒜 ℬᵀ; ℬ 0].
#[derive(Debug, Clone)]
pub struct SaddleOperator {
    pub a: KronOperator,
    pub b: KronOperator,
    pub bt: KronOperator,
}

impl SaddleOperator {
    /// 𝒜 = I ⊗ A_0 + Σ G_m ⊗ A_m, ℬ = I ⊗ B.
    pub fn new(fem: &FeMatrices, g: &[SparseMatrix], q: usize) -> Result<Self> {
        if g.len() != fem.a_fluct.len() {
            return Err(SgfeError::DimensionMismatch {
                context: "number of SG coupling matrices",
                expected: fem.a_fluct.len(),
                actual: g.len(),
            });
        }
        let mut terms = vec![KronTerm {
            sg: SgFactor::Identity,
            fe: Arc::new(fem.a_mean.clone()),
        }];
        for (gm, am) in g.iter().zip(&fem.a_fluct) {
            terms.push(KronTerm {
                sg: SgFactor::Matrix(Arc::new(gm.clone())),
                fe: Arc::new(am.clone()),
            });
        }
        Ok(Self {
            a: KronOperator::new(q, terms)?,
            b: KronOperator::blockwise(q, Arc::new(fem.b.clone())),
            bt: KronOperator::blockwise(q, Arc::new(fem.b.transpose())),
        })
    }

    pub fn num_modes(&self) -> usize {
        self.a.num_modes()
    }

    /// Q N_u
    pub fn velocity_len(&self) -> usize {
        self.a.nrows()
    }

    /// Q N_p
    pub fn pressure_len(&self) -> usize {
        self.b.nrows()
    }

    pub fn pressure_panel(&self) -> usize {
        self.b.fe_rows()
    }

    pub fn counts(&self) -> MatvecCounts {
        MatvecCounts {
            a: self.a.applications(),
            b: self.b.applications(),
            bt: self.bt.applications(),
            laplacian_inv: 0,
        }
    }

    pub fn reset_counters(&self) {
        self.a.reset_counters();
        self.b.reset_counters();
        self.bt.reset_counters();
    }

    /// Dense 𝒞.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let (nu, np) = (self.velocity_len(), self.pressure_len());
        if nu + np > DENSE_LIMIT {
            return Err(SgfeError::SizeGuard {
                size: nu + np,
                limit: DENSE_LIMIT,
            });
        }
        let a = self.a.to_dense()?;
        let b = self.b.to_dense()?;
        let mut c = DMatrix::zeros(nu + np, nu + np);
        c.view_mut((0, 0), (nu, nu)).copy_from(&a);
        c.view_mut((nu, 0), (np, nu)).copy_from(&b);
        c.view_mut((0, nu), (nu, np)).copy_from(&b.transpose());
        Ok(c)
    }

    /// SG right-hand side from the lifted boundary data: f = Σ_t (G_t e_0) ⊗ f_t, t = e_0 ⊗ t_0.
    pub fn load_vector(&self, g: &[SparseMatrix], load: &CavityLoad) -> Vec<f64> {
        let (nu, np) = (self.a.fe_rows(), self.b.fe_rows());
        let q = self.num_modes();
        let mut rhs = vec![0.0; q * (nu + np)];
        rhs[..nu].copy_from_slice(&load.rhs_f);
        for (gm, fm) in g.iter().zip(&load.rhs_f_fluct) {
            for beta in 0..q {
                let c = gm.get(beta, 0);
                if c != 0.0 {
                    axpy(c, fm, &mut rhs[beta * nu..(beta + 1) * nu]);
                }
            }
        }
        rhs[q * nu..q * nu + np].copy_from_slice(&load.rhs_t);
        rhs
    }
}

impl LinearOperator for SaddleOperator {
    fn nrows(&self) -> usize {
        self.velocity_len() + self.pressure_len()
    }
    fn ncols(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nu = self.velocity_len();
        let (xu, xp) = x.split_at(nu);
        let (yu, yp) = y.split_at_mut(nu);
        self.a.apply(xu, yu);
        let mut tmp = vec![0.0; nu];
        self.bt.apply(xp, &mut tmp);
        axpy(1.0, &tmp, yu);
        self.b.apply(xu, yp);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::{build_basis, build_g};
    use crate::fem::FeMatrices;
    use crate::linalg::{dot, to_dense};
    use crate::mesh::build_structured_mesh;
    use crate::random_field::build_kle_2d;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(level: u32, m: usize, k: usize) -> (SaddleOperator, Vec<SparseMatrix>) {
        let mesh = build_structured_mesh(level).unwrap();
        let kle = build_kle_2d(1.0, 1.0, m, 1.0, 0.1).unwrap();
        let fem = FeMatrices::assemble(&mesh, &|_, _| 1.0, &kle.fluctuation_fns()).unwrap();
        let basis = build_basis(m, k);
        let g = build_g(&basis);
        (SaddleOperator::new(&fem, &g, basis.len()).unwrap(), g)
    }

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        num / b
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
            .max(f64::MIN_POSITIVE)
    }

    #[test]
    fn matches_dense_kronecker_assembly() {
        let (op, _) = instance(1, 2, 1);
        let dense = op.a.to_dense().unwrap();
        let n = op.velocity_len();
        for seed in 0..5 {
            let x = random_vec(n, seed);
            let mut y = vec![0.0; n];
            op.a.apply(&x, &mut y);
            let yd = &dense * nalgebra::DVector::from_vec(x);
            assert!(rel_err(&y, yd.as_slice()) < 1e-12);
        }
        let probe = to_dense(&op.a);
        assert!((probe - &dense).abs().max() < 1e-12 * dense.abs().max());
    }

    #[test]
    fn deterministic_case_is_blockwise() {
        let (op, _) = instance(1, 0, 0);
        assert_eq!(op.num_modes(), 1);
        let (op3, _) = instance(1, 2, 1);
        let nu = op3.a.fe_rows();
        let a0 = op3.a.terms()[0].fe.clone();
        let only_mean = KronOperator::blockwise(3, a0.clone());
        let x = random_vec(3 * nu, 4);
        let mut y = vec![0.0; 3 * nu];
        only_mean.apply(&x, &mut y);
        for p in 0..3 {
            let mut e = vec![0.0; nu];
            a0.mul_vec(&x[p * nu..(p + 1) * nu], &mut e);
            assert_eq!(&y[p * nu..(p + 1) * nu], e.as_slice());
        }
    }

    #[test]
    fn b_blocks_and_adjoint() {
        let (op, _) = instance(1, 2, 1);
        let db = op.b.to_dense().unwrap();
        let u = random_vec(op.velocity_len(), 1);
        let p = random_vec(op.pressure_len(), 2);
        let mut bu = vec![0.0; op.pressure_len()];
        let mut btp = vec![0.0; op.velocity_len()];
        op.b.apply(&u, &mut bu);
        op.bt.apply(&p, &mut btp);
        let bud = &db * nalgebra::DVector::from_vec(u.clone());
        assert!(rel_err(&bu, bud.as_slice()) < 1e-12);
        assert!(
            (dot(&bu, &p) - dot(&u, &btp)).abs()
                < 1e-12 * dot(&bu, &bu).sqrt().max(1.0) * dot(&p, &p).sqrt()
        );
    }

    #[test]
    fn saddle_operator_is_symmetric_and_indefinite() {
        let (op, _) = instance(1, 1, 1);
        let c = op.to_dense().unwrap();
        assert_eq!((&c - c.transpose()).abs().max(), 0.0);
        let ev = c.symmetric_eigenvalues();
        assert!(ev.iter().any(|&l| l > 1e-8) && ev.iter().any(|&l| l < -1e-8));
    }

    #[test]
    fn counters_track_applications() {
        let (op, _) = instance(1, 2, 1);
        op.reset_counters();
        let x = random_vec(op.nrows(), 3);
        let mut y = vec![0.0; op.nrows()];
        op.apply(&x, &mut y);
        assert_eq!(
            op.counts(),
            MatvecCounts {
                a: 1,
                b: 1,
                bt: 1,
                laplacian_inv: 0
            }
        );
        // (M + 1) FE products per panel
        assert_eq!(op.a.fe_matvecs(), 3 * 3);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let (op, _) = instance(1, 1, 1);
        let mut y = vec![0.0; op.velocity_len()];
        assert!(matches!(
            op.a.try_apply(&[1.0; 3], &mut y),
            Err(SgfeError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn size_guard() {
        let (op, _) = instance(3, 4, 2);
        assert!(matches!(op.to_dense(), Err(SgfeError::SizeGuard { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn apply_is_linear_and_symmetric(s1 in 0u64..1000, s2 in 0u64..1000, c in -3.0f64..3.0) {
            let (op, _) = instance(1, 2, 2);
            let n = op.velocity_len();
            let (u, v) = (random_vec(n, s1), random_vec(n, s2 + 1000));
            let mut au = vec![0.0; n];
            let mut av = vec![0.0; n];
            let mut acomb = vec![0.0; n];
            op.a.apply(&u, &mut au);
            op.a.apply(&v, &mut av);
            let comb: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + c * b).collect();
            op.a.apply(&comb, &mut acomb);
            let expect: Vec<f64> = au.iter().zip(&av).map(|(a, b)| a + c * b).collect();
            prop_assert!(rel_err(&acomb, &expect) < 1e-12);
            let lhs = dot(&au, &v);
            let rhs = dot(&u, &av);
            let scale = dot(&u, &u).sqrt() * dot(&v, &v).sqrt() * op.a.to_dense().unwrap().norm();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }
    }
}
