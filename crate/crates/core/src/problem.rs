//! Assembly of one driven-cavity SGFE instance.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chaos::{build_basis, build_g, ChaosBasis};
use crate::error::{Result, SgfeError};
use crate::fem::{build_cavity_rhs, regularized_lid, CavityLoad, FeMatrices};
use crate::kron::{SaddleOperator, DENSE_LIMIT};
use crate::linalg::LinearOperator;
use crate::mesh::{build_structured_mesh, Mesh};
use crate::precond::{BlockPrecond, HOperator, LaplacianMode, LaplacianPrecond};
use crate::random_field::{build_kle_2d, KleExpansion};
use crate::sparse::SparseMatrix;

/// Discretization and input-model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub level: u32,
    /// Number of KLE terms (stochastic dimension).
    pub terms: usize,
    /// Total chaos degree.
    pub degree: usize,
    pub nu0: f64,
    pub sigma: f64,
    pub b1: f64,
    pub b2: f64,
}

impl Default for ProblemParams {
    fn default() -> Self {
        Self {
            level: 4,
            terms: 6,
            degree: 2,
            nu0: 1.0,
            sigma: 0.1,
            b1: 1.0,
            b2: 1.0,
        }
    }
}

#[derive(Debug)]
pub struct SgProblem {
    pub params: ProblemParams,
    pub mesh: Mesh,
    pub kle: KleExpansion,
    pub basis: ChaosBasis,
    pub g: Vec<SparseMatrix>,
    pub fem: FeMatrices,
    pub load: CavityLoad,
    pub op: Arc<SaddleOperator>,
    pub rhs: Vec<f64>,
}

/// Chaos moments of both velocity components at the domain center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterStatistics {
    pub mean: [f64; 2],
    pub variance: [f64; 2],
}

impl SgProblem {
    pub fn build(params: ProblemParams) -> Result<Self> {
        let mesh = build_structured_mesh(params.level)?;
        let kle = build_kle_2d(params.b1, params.b2, params.terms, params.nu0, params.sigma)?;
        let nu0 = params.nu0;
        let fem = FeMatrices::assemble(&mesh, &move |_, _| nu0, &kle.fluctuation_fns())?;
        let load = build_cavity_rhs(&mesh, &fem, &regularized_lid)?;
        let basis = build_basis(params.terms, params.degree);
        let g = build_g(&basis);
        let op = Arc::new(SaddleOperator::new(&fem, &g, basis.len())?);
        let rhs = op.load_vector(&g, &load);
        Ok(Self {
            params,
            mesh,
            kle,
            basis,
            g,
            fem,
            load,
            op,
            rhs,
        })
    }

    pub fn num_modes(&self) -> usize {
        self.basis.len()
    }

    pub fn laplacian(&self, mode: LaplacianMode) -> Result<Arc<LaplacianPrecond>> {
        Ok(Arc::new(LaplacianPrecond::new(
            mode,
            &self.fem,
            self.params.level,
        )?))
    }

    pub fn block_diagonal(&self, lap: Arc<LaplacianPrecond>) -> BlockPrecond {
        BlockPrecond::block_diagonal(lap, self.op.clone(), self.fem.diag_p.clone())
    }

    pub fn block_triangular(
        &self,
        lap: Arc<LaplacianPrecond>,
        scaling: f64,
    ) -> Result<(BlockPrecond, HOperator)> {
        let p2 =
            BlockPrecond::block_triangular(lap, self.op.clone(), self.fem.diag_p.clone(), scaling)?;
        let h = HOperator::new(&p2);
        Ok((p2, h))
    }

    /// Orthonormal constant-pressure vectors, one per chaos mode.
    pub fn pressure_nullspace(&self) -> DMatrix<f64> {
        let (nu, np) = (self.op.velocity_len(), self.fem.n_p());
        let q = self.num_modes();
        let mut n = DMatrix::zeros(nu + q * np, q);
        let c = 1.0 / (np as f64).sqrt();
        for alpha in 0..q {
            for i in 0..np {
                n[(nu + alpha * np + i, alpha)] = c;
            }
        }
        n
    }

    /// Direct solve of the bordered system [𝒞 N; Nᵀ 0], giving the solution
    /// with zero pressure mean in every chaos mode.
    pub fn dense_direct_solve(&self) -> Result<Vec<f64>> {
        let n = self.op.nrows();
        if n > DENSE_LIMIT {
            return Err(SgfeError::SizeGuard {
                size: n,
                limit: DENSE_LIMIT,
            });
        }
        let q = self.num_modes();
        let c = self.op.to_dense()?;
        let null = self.pressure_nullspace();
        let mut k = DMatrix::zeros(n + q, n + q);
        k.view_mut((0, 0), (n, n)).copy_from(&c);
        k.view_mut((0, n), (n, q)).copy_from(&null);
        k.view_mut((n, 0), (q, n)).copy_from(&null.transpose());
        let mut rhs = DVector::zeros(n + q);
        rhs.rows_mut(0, n).copy_from_slice(&self.rhs);
        let sol = k.lu().solve(&rhs).ok_or_else(|| {
            SgfeError::Breakdown("bordered saddle-point matrix is singular".into())
        })?;
        Ok(sol.rows(0, n).iter().copied().collect())
    }

    /// Mean (mode 0) and variance (sum of squares of the other modes) at (0, 0).
    pub fn center_statistics(&self, solution: &[f64]) -> Result<CenterStatistics> {
        let interior = self.mesh.p2_interior();
        let center = interior
            .iter()
            .position(|&node| {
                let p = self.mesh.p2_coords()[node];
                p[0].abs() < 1e-14 && p[1].abs() < 1e-14
            })
            .ok_or_else(|| SgfeError::InvalidParameter("mesh has no node at the center".into()))?;
        let nu = self.fem.n_u();
        let ns = self.fem.n_scalar;
        let mut mean = [0.0; 2];
        let mut variance = [0.0; 2];
        for c in 0..2 {
            for alpha in 0..self.num_modes() {
                let v = solution[alpha * nu + c * ns + center];
                if alpha == 0 {
                    mean[c] = v;
                } else {
                    variance[c] += v * v;
                }
            }
        }
        Ok(CenterStatistics { mean, variance })
    }
}
