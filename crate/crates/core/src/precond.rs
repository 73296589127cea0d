//! FE Laplacian preconditioners, the block preconditioners P1 (diagonal) and
//! P2 (triangular), the H operator and the choice of the scaling parameter.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::{build_basis, build_g};
use crate::error::{Result, SgfeError};
use crate::fem::FeMatrices;
use crate::kron::{SaddleOperator, DENSE_LIMIT};
use crate::linalg::{axpy, dot, norm, LinearOperator};
use crate::mesh::build_structured_mesh;
use crate::multigrid::Multigrid;
use crate::random_field::{check_positivity, KleExpansion};
use crate::solvers::lanczos::{lanczos_bounds, lanczos_extreme, LanczosOptions, Which};
use crate::sparse::{ProfileCholesky, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaplacianMode {
    /// Direct solve with the unit-coefficient Laplacian A.
    ExactUnweighted,
    /// Direct solve with the mean-viscosity Laplacian A_0.
    ExactMean,
    /// One geometric V(2,2) cycle on the unit Laplacian.
    Multigrid,
}

impl std::str::FromStr for LaplacianMode {
    type Err = SgfeError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact-unweighted" => Ok(Self::ExactUnweighted),
            "exact-mean" => Ok(Self::ExactMean),
            "multigrid" => Ok(Self::Multigrid),
            other => Err(SgfeError::InvalidParameter(format!(
                "unknown Laplacian mode '{other}'"
            ))),
        }
    }
}

#[derive(Debug)]
enum ScalarSolver {
    Direct(ProfileCholesky),
    Multigrid(Multigrid),
}

/// The FE building block Ã⁻¹, acting componentwise on velocity vectors.
#[derive(Debug)]
pub struct LaplacianPrecond {
    mode: LaplacianMode,
    n_scalar: usize,
    /// Scalar matrix Ã stands for (exact modes) or approximates (multigrid).
    reference: SparseMatrix,
    solver: ScalarSolver,
    /// Spectral equivalence constants (δ, Δ) of Ã against the unit Laplacian A.
    equivalence: (f64, f64),
    applications: AtomicUsize,
}

impl LaplacianPrecond {
    pub fn new(mode: LaplacianMode, fem: &FeMatrices, level: u32) -> Result<Self> {
        let n_scalar = fem.n_scalar;
        let (reference, solver, equivalence) = match mode {
            LaplacianMode::ExactUnweighted => {
                let chol = ProfileCholesky::factor(&fem.scalar_unit)?;
                (
                    fem.scalar_unit.clone(),
                    ScalarSolver::Direct(chol),
                    (1.0, 1.0),
                )
            }
            LaplacianMode::ExactMean => {
                let chol = ProfileCholesky::factor(&fem.scalar_mean)?;
                let range = mean_rayleigh_range(fem)?;
                (
                    fem.scalar_mean.clone(),
                    ScalarSolver::Direct(chol),
                    (1.0 / range.1, 1.0 / range.0),
                )
            }
            LaplacianMode::Multigrid => {
                let mg = Multigrid::new(level)?;
                if mg.size() != n_scalar {
                    return Err(SgfeError::DimensionMismatch {
                        context: "multigrid hierarchy vs mesh",
                        expected: n_scalar,
                        actual: mg.size(),
                    });
                }
                let reference = fem.scalar_unit.clone();
                let bounds = measure_vcycle_equivalence(&mg)?;
                (reference, ScalarSolver::Multigrid(mg), bounds)
            }
        };
        Ok(Self {
            mode,
            n_scalar,
            reference,
            solver,
            equivalence,
            applications: AtomicUsize::new(0),
        })
    }

    pub fn mode(&self) -> LaplacianMode {
        self.mode
    }

    /// N_u
    pub fn velocity_len(&self) -> usize {
        2 * self.n_scalar
    }

    /// (δ, Δ) with δ vᵀÃv ≤ vᵀAv ≤ Δ vᵀÃv; measured values for multigrid.
    pub fn equivalence(&self) -> (f64, f64) {
        self.equivalence
    }

    /// Lower constant used for the analytical scaling: measured δ rounded down
    /// to two digits for multigrid, exact otherwise.
    pub fn certified_delta(&self) -> f64 {
        match self.mode {
            LaplacianMode::Multigrid => (self.equivalence.0 * 100.0).floor() / 100.0,
            _ => self.equivalence.0,
        }
    }

    pub fn applications(&self) -> usize {
        self.applications.load(Ordering::Relaxed)
    }

    pub fn reset_counters(&self) {
        self.applications.store(0, Ordering::Relaxed);
    }

    fn scalar_inverse(&self, r: &[f64], out: &mut [f64]) {
        match &self.solver {
            ScalarSolver::Direct(chol) => {
                out.copy_from_slice(r);
                chol.solve_in_place(out);
            }
            ScalarSolver::Multigrid(mg) => mg.vcycle(r, out).expect("hierarchy matches the mesh"),
        }
    }

    /// Ã⁻¹ on one velocity vector (both components).
    pub fn apply_inverse_single(&self, r: &[f64], out: &mut [f64]) {
        let n = self.n_scalar;
        for c in 0..2 {
            self.scalar_inverse(&r[c * n..(c + 1) * n], &mut out[c * n..(c + 1) * n]);
        }
    }

    /// (scale · I ⊗ Ã)⁻¹ on a stack of velocity panels; counted as one application.
    pub fn apply_inverse_blockwise(&self, r: &[f64], out: &mut [f64], scale: f64) -> Result<()> {
        let nu = self.velocity_len();
        if r.len() % nu != 0 || r.len() != out.len() {
            return Err(SgfeError::DimensionMismatch {
                context: "Laplacian preconditioner input",
                expected: nu,
                actual: r.len(),
            });
        }
        self.applications.fetch_add(1, Ordering::Relaxed);
        out.par_chunks_mut(self.n_scalar)
            .zip(r.par_chunks(self.n_scalar))
            .for_each(|(o, x)| {
                self.scalar_inverse(x, o);
                if scale != 1.0 {
                    o.iter_mut().for_each(|v| *v /= scale);
                }
            });
        Ok(())
    }

    /// Ã v on one scalar component. Multigrid inverts the V-cycle by PCG
    /// preconditioned with the unit Laplacian.
    fn scalar_forward(&self, v: &[f64], out: &mut [f64]) {
        match &self.solver {
            ScalarSolver::Direct(_) => self.reference.mul_vec(v, out),
            ScalarSolver::Multigrid(mg) => {
                let op =
                    |x: &[f64], y: &mut [f64]| mg.vcycle(x, y).expect("hierarchy matches the mesh");
                let prec = |x: &[f64], y: &mut [f64]| self.reference.mul_vec(x, y);
                pcg(&op, &prec, v, out, 1e-13, 500);
            }
        }
    }

    /// Ã on a stack of velocity panels.
    pub fn apply_forward_blockwise(&self, v: &[f64], out: &mut [f64]) {
        out.par_chunks_mut(self.n_scalar)
            .zip(v.par_chunks(self.n_scalar))
            .for_each(|(o, x)| self.scalar_forward(x, o));
    }

    /// Dense scalar Ã (one component).
    pub fn dense_scalar_forward(&self) -> Result<DMatrix<f64>> {
        let n = self.n_scalar;
        if n > DENSE_LIMIT {
            return Err(SgfeError::SizeGuard {
                size: n,
                limit: DENSE_LIMIT,
            });
        }
        match &self.solver {
            ScalarSolver::Direct(_) => Ok(self.reference.to_dense()),
            ScalarSolver::Multigrid(mg) => {
                let mut inv = DMatrix::zeros(n, n);
                let mut e = vec![0.0; n];
                let mut col = vec![0.0; n];
                for j in 0..n {
                    e[j] = 1.0;
                    mg.vcycle(&e, &mut col)?;
                    inv.column_mut(j).copy_from_slice(&col);
                    e[j] = 0.0;
                }
                let sym = (&inv + inv.transpose()) * 0.5;
                sym.cholesky().map(|c| c.inverse()).ok_or_else(|| {
                    SgfeError::Breakdown("V-cycle matrix is not positive definite".into())
                })
            }
        }
    }

    /// Dense velocity Ã = blockdiag(Ã_s, Ã_s).
    pub fn dense_forward(&self) -> Result<DMatrix<f64>> {
        let s = self.dense_scalar_forward()?;
        let n = self.n_scalar;
        let mut out = DMatrix::zeros(2 * n, 2 * n);
        out.view_mut((0, 0), (n, n)).copy_from(&s);
        out.view_mut((n, n), (n, n)).copy_from(&s);
        Ok(out)
    }
}

/// Preconditioned CG for small inner solves.
fn pcg(
    op: &dyn Fn(&[f64], &mut [f64]),
    prec: &dyn Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iters: usize,
) {
    let n = b.len();
    x.iter_mut().for_each(|v| *v = 0.0);
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return;
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    prec(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..max_iters {
        op(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        if norm(&r) <= tol * bnorm {
            return;
        }
        prec(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
}

/// Range of vᵀA_0v / vᵀAv via Lanczos (exact bounds for constant means).
fn mean_rayleigh_range(fem: &FeMatrices) -> Result<(f64, f64)> {
    let chol = ProfileCholesky::factor(&fem.scalar_unit)?;
    struct Inv<'a>(&'a ProfileCholesky);
    impl LinearOperator for Inv<'_> {
        fn nrows(&self) -> usize {
            self.0.dim()
        }
        fn ncols(&self) -> usize {
            self.0.dim()
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            y.copy_from_slice(x);
            self.0.solve_in_place(y);
        }
    }
    let opts = LanczosOptions {
        tol: 1e-10,
        ..Default::default()
    };
    let b = lanczos_bounds(&fem.scalar_mean, Some(&Inv(&chol)), &opts)?;
    Ok((b.min, b.max))
}

struct VcycleOp<'a>(&'a Multigrid);

impl LinearOperator for VcycleOp<'_> {
    fn nrows(&self) -> usize {
        self.0.size()
    }
    fn ncols(&self) -> usize {
        self.0.size()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.0.vcycle(x, y).expect("sizes match");
    }
}

/// Extreme eigenvalues of B_mg A for the V-cycle operator B_mg.
pub fn measure_vcycle_equivalence(mg: &Multigrid) -> Result<(f64, f64)> {
    let opts = LanczosOptions {
        tol: 1e-8,
        ..Default::default()
    };
    let b = lanczos_bounds(mg.matrix(), Some(&VcycleOp(mg)), &opts)?;
    Ok((b.min, b.max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrecondKind {
    /// blockdiag(I ⊗ Ã, I ⊗ D_p)
    BlockDiagonal,
    /// [a I ⊗ Ã, 0; ℬ, -I ⊗ D_p]
    BlockTriangular,
}

/// Mean-based block preconditioner applied through its inverse.
#[derive(Debug, Clone)]
pub struct BlockPrecond {
    pub kind: PrecondKind,
    pub laplacian: Arc<LaplacianPrecond>,
    pub op: Arc<SaddleOperator>,
    pub diag_p: Vec<f64>,
    pub scaling: f64,
}

impl BlockPrecond {
    pub fn block_diagonal(
        laplacian: Arc<LaplacianPrecond>,
        op: Arc<SaddleOperator>,
        diag_p: Vec<f64>,
    ) -> Self {
        Self {
            kind: PrecondKind::BlockDiagonal,
            laplacian,
            op,
            diag_p,
            scaling: 1.0,
        }
    }

    pub fn block_triangular(
        laplacian: Arc<LaplacianPrecond>,
        op: Arc<SaddleOperator>,
        diag_p: Vec<f64>,
        scaling: f64,
    ) -> Result<Self> {
        if !(scaling > 0.0) || !scaling.is_finite() {
            return Err(SgfeError::InvalidParameter(format!(
                "scaling must be positive, got {scaling}"
            )));
        }
        Ok(Self {
            kind: PrecondKind::BlockTriangular,
            laplacian,
            op,
            diag_p,
            scaling,
        })
    }

    fn velocity_len(&self) -> usize {
        self.op.velocity_len()
    }

    /// (I ⊗ D_p)⁻¹ in place.
    pub fn apply_schur_inverse(&self, p: &mut [f64]) {
        let np = self.diag_p.len();
        p.par_chunks_mut(np).for_each(|panel| {
            for (v, d) in panel.iter_mut().zip(&self.diag_p) {
                *v /= d;
            }
        });
    }

    /// (I ⊗ D_p) in place.
    pub fn apply_schur(&self, p: &mut [f64]) {
        let np = self.diag_p.len();
        p.par_chunks_mut(np).for_each(|panel| {
            for (v, d) in panel.iter_mut().zip(&self.diag_p) {
                *v *= d;
            }
        });
    }

    pub fn try_apply(&self, r: &[f64], out: &mut [f64]) -> Result<()> {
        let nu = self.velocity_len();
        if r.len() != self.op.nrows() || out.len() != r.len() {
            return Err(SgfeError::DimensionMismatch {
                context: "block preconditioner",
                expected: self.op.nrows(),
                actual: r.len(),
            });
        }
        let (ru, rp) = r.split_at(nu);
        let (ou, op) = out.split_at_mut(nu);
        match self.kind {
            PrecondKind::BlockDiagonal => {
                self.laplacian.apply_inverse_blockwise(ru, ou, 1.0)?;
                op.copy_from_slice(rp);
                self.apply_schur_inverse(op);
            }
            PrecondKind::BlockTriangular => {
                self.laplacian
                    .apply_inverse_blockwise(ru, ou, self.scaling)?;
                self.op.b.try_apply(ou, op)?;
                axpy(-1.0, rp, op);
                self.apply_schur_inverse(op);
            }
        }
        Ok(())
    }

    /// Dense forward matrix P (not its inverse).
    pub fn to_dense_forward(&self) -> Result<DMatrix<f64>> {
        let q = self.op.num_modes();
        let (nu, np) = (self.velocity_len(), self.op.pressure_len());
        if nu + np > DENSE_LIMIT {
            return Err(SgfeError::SizeGuard {
                size: nu + np,
                limit: DENSE_LIMIT,
            });
        }
        let at = self.laplacian.dense_forward()?;
        let eye = DMatrix::<f64>::identity(q, q);
        let mut p = DMatrix::zeros(nu + np, nu + np);
        let dp = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.diag_p));
        let sdp = eye.kronecker(&dp);
        match self.kind {
            PrecondKind::BlockDiagonal => {
                p.view_mut((0, 0), (nu, nu)).copy_from(&eye.kronecker(&at));
                p.view_mut((nu, nu), (np, np)).copy_from(&sdp);
            }
            PrecondKind::BlockTriangular => {
                p.view_mut((0, 0), (nu, nu))
                    .copy_from(&(eye.kronecker(&at) * self.scaling));
                p.view_mut((nu, 0), (np, nu))
                    .copy_from(&self.op.b.to_dense()?);
                p.view_mut((nu, nu), (np, np)).copy_from(&(-sdp));
            }
        }
        Ok(p)
    }
}

impl LinearOperator for BlockPrecond {
    fn nrows(&self) -> usize {
        self.op.nrows()
    }
    fn ncols(&self) -> usize {
        self.op.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.try_apply(x, y)
            .expect("block preconditioner dimension mismatch");
    }
}

/// H = blockdiag(𝒜 - a I ⊗ Ã, I ⊗ D_p).
#[derive(Debug, Clone)]
pub struct HOperator {
    pub scaling: f64,
    pub laplacian: Arc<LaplacianPrecond>,
    pub op: Arc<SaddleOperator>,
    pub diag_p: Vec<f64>,
}

impl HOperator {
    pub fn new(p2: &BlockPrecond) -> Self {
        Self {
            scaling: p2.scaling,
            laplacian: p2.laplacian.clone(),
            op: p2.op.clone(),
            diag_p: p2.diag_p.clone(),
        }
    }

    pub fn with_scaling(&self, scaling: f64) -> Self {
        Self {
            scaling,
            ..self.clone()
        }
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let q = self.op.num_modes();
        let (nu, np) = (self.op.velocity_len(), self.op.pressure_len());
        if nu + np > DENSE_LIMIT {
            return Err(SgfeError::SizeGuard {
                size: nu + np,
                limit: DENSE_LIMIT,
            });
        }
        let eye = DMatrix::<f64>::identity(q, q);
        let a = self.op.a.to_dense()?;
        let at = eye.kronecker(&self.laplacian.dense_forward()?);
        let mut h = DMatrix::zeros(nu + np, nu + np);
        h.view_mut((0, 0), (nu, nu))
            .copy_from(&(a - at * self.scaling));
        let dp = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.diag_p));
        h.view_mut((nu, nu), (np, np))
            .copy_from(&eye.kronecker(&dp));
        Ok(h)
    }
}

impl LinearOperator for HOperator {
    fn nrows(&self) -> usize {
        self.op.nrows()
    }
    fn ncols(&self) -> usize {
        self.op.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nu = self.op.velocity_len();
        let (xu, xp) = x.split_at(nu);
        let (yu, yp) = y.split_at_mut(nu);
        self.op.a.apply(xu, yu);
        if self.scaling != 0.0 {
            let mut t = vec![0.0; nu];
            self.laplacian.apply_forward_blockwise(xu, &mut t);
            axpy(-self.scaling, &t, yu);
        }
        let np = self.diag_p.len();
        for (yb, xb) in yp.chunks_mut(np).zip(xp.chunks(np)) {
            for ((y, x), d) in yb.iter_mut().zip(xb).zip(&self.diag_p) {
                *y = d * x;
            }
        }
    }
}

/// (I ⊗ Ã)⁻¹ as an operator, for Lanczos on Ã⁻¹𝒜.
pub struct BlockLaplacianInverse<'a> {
    pub laplacian: &'a LaplacianPrecond,
    pub len: usize,
}

impl LinearOperator for BlockLaplacianInverse<'_> {
    fn nrows(&self) -> usize {
        self.len
    }
    fn ncols(&self) -> usize {
        self.len
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.laplacian
            .apply_inverse_blockwise(x, y, 1.0)
            .expect("panel sizes match");
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "ratio")]
pub enum ScalingStrategy {
    /// a = (ν̲₀ - √3σχ) δ
    Analytical,
    /// a = a_δ · λ_min(Ã⁻¹𝒜) on a coarse mesh
    Numerical,
    /// a = r · λ_min(Ã⁻¹𝒜) on a coarse mesh
    FixedRatio(f64),
}

/// Default safety factor a_δ for the numerical scaling.
pub const DEFAULT_SAFETY: f64 = 0.95;

/// Lower bound of Ã⁻¹𝒜 implied by the viscosity bounds: (ν̲₀ - √3σχ) δ.
pub fn analytical_scaling(kle: &KleExpansion, delta: f64) -> Result<f64> {
    let pos = check_positivity(kle);
    if !pos.is_positive {
        return Err(SgfeError::PositivityViolated {
            nu_lower: pos.nu_lower,
            sigma: kle.sigma,
            chi: kle.chi_total,
        });
    }
    Ok(pos.nu_lower * delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingEstimate {
    /// λ_min(Ã⁻¹𝒜) on the coarse mesh
    pub a_star: f64,
    pub level: u32,
    pub lanczos_steps: usize,
    /// Lower equivalence constant of the Laplacian preconditioner used for the estimate.
    pub laplacian_delta: f64,
}

/// λ_min(Ã⁻¹𝒜) for the SG problem rebuilt on mesh `level`.
pub fn numerical_scaling(
    kle: &KleExpansion,
    degree: usize,
    mode: LaplacianMode,
    level: u32,
    opts: &LanczosOptions,
) -> Result<ScalingEstimate> {
    let mesh = build_structured_mesh(level)?;
    let nu0 = kle.nu0;
    let fem = FeMatrices::assemble(&mesh, &move |_, _| nu0, &kle.fluctuation_fns())?;
    let basis = build_basis(kle.num_terms(), degree);
    let g = build_g(&basis);
    let op = SaddleOperator::new(&fem, &g, basis.len())?;
    let lap = LaplacianPrecond::new(mode, &fem, level)?;
    let mut est = min_laplacian_eigenvalue(&op, &lap, opts)?;
    est.level = level;
    Ok(est)
}

/// λ_min(Ã⁻¹𝒜) for an already assembled operator.
pub fn min_laplacian_eigenvalue(
    op: &SaddleOperator,
    lap: &LaplacianPrecond,
    opts: &LanczosOptions,
) -> Result<ScalingEstimate> {
    let inv = BlockLaplacianInverse {
        laplacian: lap,
        len: op.velocity_len(),
    };
    let r = lanczos_extreme(&op.a, Some(&inv), Which::Min, opts)?;
    Ok(ScalingEstimate {
        a_star: r.value,
        level: 0,
        lanczos_steps: r.steps,
        laplacian_delta: lap.equivalence().0,
    })
}
