//! Eigenvalue bound formulas for the preconditioned SGFE operators and dense
//! containment checks on small instances.

use std::io::Write;

use nalgebra::{Complex, DMatrix, Schur};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SgfeError};
use crate::fem::FeMatrices;
use crate::kron::DENSE_LIMIT;
use crate::linalg::LinearOperator;
use crate::precond::{LaplacianMode, DEFAULT_SAFETY};
use crate::problem::{ProblemParams, SgProblem};
use crate::random_field::{check_positivity, KleExpansion};

/// Lower mass-lumping constant θ² for linear triangles.
pub const THETA_SQ: f64 = 0.5;
/// Upper mass-lumping constant Θ² for linear triangles.
pub const CAP_THETA_SQ: f64 = 2.0;

/// (δ̂, Δ̂) = ((ν̲₀ - √3σχ)δ, (ν̄₀ + √3σχ)Δ).
pub fn bound_laplacian(kle: &KleExpansion, delta: f64, cap_delta: f64) -> (f64, f64) {
    let pos = check_positivity(kle);
    (pos.nu_lower * delta, pos.nu_upper * cap_delta)
}

/// (θ²γ² / (ν̄₀ + √3σχ), Θ² / (ν̲₀ - √3σχ)).
pub fn bound_schur(kle: &KleExpansion, gamma: f64) -> (f64, f64) {
    let pos = check_positivity(kle);
    (
        THETA_SQ * gamma * gamma / pos.nu_upper,
        CAP_THETA_SQ / pos.nu_lower,
    )
}

/// (δθ²γ², ΔΘ²).
pub fn bound_approx_schur(delta: f64, cap_delta: f64, gamma: f64) -> (f64, f64) {
    (delta * THETA_SQ * gamma * gamma, cap_delta * CAP_THETA_SQ)
}

/// Negative part [-a, -b] and positive part [c, d] of the block-diagonal spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockDiagInterval {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl BlockDiagInterval {
    pub fn contains(&self, lambda: f64, tol: f64) -> bool {
        (lambda >= -self.a - tol && lambda <= -self.b + tol)
            || (lambda >= self.c - tol && lambda <= self.d + tol)
    }
}

pub fn blockdiag_interval(
    delta_hat: f64,
    cap_delta_hat: f64,
    theta_hat: f64,
    cap_theta_hat: f64,
) -> BlockDiagInterval {
    BlockDiagInterval {
        a: ((delta_hat * delta_hat + 4.0 * cap_theta_hat).sqrt() - delta_hat) / 2.0,
        b: ((cap_delta_hat * cap_delta_hat + 4.0 * theta_hat).sqrt() - cap_delta_hat) / 2.0,
        c: delta_hat,
        d: (cap_delta_hat + (cap_delta_hat * cap_delta_hat + 4.0 * cap_theta_hat).sqrt()) / 2.0,
    }
}

/// [1 - ζ₂, 1 - ζ₁] for the block-triangular preconditioner with a = a_δ δ̂.
pub fn blocktri_interval(
    a_delta: f64,
    delta_hat: f64,
    cap_delta_hat: f64,
    gamma_hat: f64,
    cap_gamma_hat: f64,
) -> Result<(f64, f64)> {
    if !(a_delta > 0.0 && a_delta < 1.0) {
        return Err(SgfeError::InvalidParameter(format!(
            "a_delta must lie in (0, 1), got {a_delta}"
        )));
    }
    let ratio = cap_delta_hat / (a_delta * delta_hat);
    let half = |g: f64| (2.0 - (1.0 + g) * ratio) / 2.0;
    let disc = |g: f64| half(g).powi(2) + ratio - 1.0;
    let (d1, d2) = (disc(cap_gamma_hat), disc(gamma_hat));
    if d1 < 0.0 || d2 < 0.0 {
        return Err(SgfeError::InvalidParameter(
            "interval formula inapplicable for these constants (negative discriminant)".into(),
        ));
    }
    let zeta1 = half(cap_gamma_hat) - d1.sqrt();
    let zeta2 = half(gamma_hat) + d2.sqrt();
    Ok((1.0 - zeta2, 1.0 - zeta1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSet {
    pub delta_hat: f64,
    pub cap_delta_hat: f64,
    pub schur_lo: f64,
    pub schur_hi: f64,
    pub approx_schur_lo: f64,
    pub approx_schur_hi: f64,
    pub theta_sq: f64,
    pub cap_theta_sq: f64,
    pub gamma: f64,
    pub delta: f64,
    pub cap_delta: f64,
}

impl BoundSet {
    pub fn new(kle: &KleExpansion, delta: f64, cap_delta: f64, gamma: f64) -> Self {
        let (delta_hat, cap_delta_hat) = bound_laplacian(kle, delta, cap_delta);
        let (schur_lo, schur_hi) = bound_schur(kle, gamma);
        let (approx_schur_lo, approx_schur_hi) = bound_approx_schur(delta, cap_delta, gamma);
        Self {
            delta_hat,
            cap_delta_hat,
            schur_lo,
            schur_hi,
            approx_schur_lo,
            approx_schur_hi,
            theta_sq: THETA_SQ,
            cap_theta_sq: CAP_THETA_SQ,
            gamma,
            delta,
            cap_delta,
        }
    }
}

// ---- dense eigen helpers ----

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Eigenvalues of the symmetric-definite pencil (a, b), ascending.
pub fn generalized_symmetric_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| SgfeError::Breakdown("pencil matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv_a = l
        .solve_lower_triangular(a)
        .ok_or_else(|| SgfeError::Breakdown("singular Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&linv_a.transpose())
        .ok_or_else(|| SgfeError::Breakdown("singular Cholesky factor".into()))?;
    let sym = (&c + c.transpose()) * 0.5;
    Ok(sorted(
        sym.symmetric_eigenvalues().iter().copied().collect(),
    ))
}

/// Eigenvalues of a general square matrix. The unshifted Schur iteration can
/// cycle on exactly degenerate spectra, so a stalled attempt is retried on a
/// random orthogonal similarity transform.
pub fn nonsymmetric_eigenvalues(m: DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    const MAX_SWEEPS: usize = 20_000;
    const DEFLATION_TOL: f64 = 1e-14;
    if let Some(schur) = Schur::try_new(m.clone(), DEFLATION_TOL, MAX_SWEEPS) {
        return Ok(schur.complex_eigenvalues().iter().copied().collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..3 {
        let n = m.nrows();
        let g = DMatrix::from_fn(n, n, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let q = g.qr().q();
        let rotated = q.transpose() * &m * &q;
        if let Some(schur) = Schur::try_new(rotated, DEFLATION_TOL, MAX_SWEEPS) {
            return Ok(schur.complex_eigenvalues().iter().copied().collect());
        }
    }
    Err(SgfeError::Breakdown(
        "Schur iteration did not converge".into(),
    ))
}

/// Removes the `count` eigenvalues of smallest modulus after checking they vanish.
pub fn deflate_zeros(values: &[f64], count: usize, tol: f64) -> Result<Vec<f64>> {
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].abs().total_cmp(&values[j].abs()));
    for &i in &idx[..count] {
        if values[i].abs() > tol * scale {
            return Err(SgfeError::ContainmentViolated(format!(
                "expected {count} null eigenvalues, found {} of size {:e}",
                i, values[i]
            )));
        }
    }
    let drop: std::collections::HashSet<usize> = idx[..count].iter().copied().collect();
    Ok(sorted(
        (0..values.len())
            .filter(|i| !drop.contains(i))
            .map(|i| values[i])
            .collect(),
    ))
}

/// Orthonormal basis of the complement of per-panel constant pressures.
pub fn nullspace_complement(
    velocity_len: usize,
    modes: usize,
    pressure_panel: usize,
) -> DMatrix<f64> {
    let n = velocity_len + modes * pressure_panel;
    let cols = n - modes;
    let mut z = DMatrix::zeros(n, cols);
    for i in 0..velocity_len {
        z[(i, i)] = 1.0;
    }
    let mut col = velocity_len;
    for alpha in 0..modes {
        let off = velocity_len + alpha * pressure_panel;
        // Helmert contrasts
        for k in 1..pressure_panel {
            let s = 1.0 / ((k * (k + 1)) as f64).sqrt();
            for i in 0..k {
                z[(off + i, col)] = s;
            }
            z[(off + k, col)] = -(k as f64) * s;
            col += 1;
        }
    }
    z
}

/// γ: square root of the smallest nonzero eigenvalue of (B A⁻¹ Bᵀ, M_p).
pub fn measure_infsup(fem: &FeMatrices) -> Result<f64> {
    let ev = infsup_spectrum(fem)?;
    let g2 = ev[0];
    if g2 <= 0.0 {
        return Err(SgfeError::ContainmentViolated(format!(
            "smallest nonzero Schur eigenvalue is {g2}"
        )));
    }
    Ok(g2.sqrt())
}

/// Eigenvalues of (B A⁻¹ Bᵀ, M_p) with the constant mode removed, ascending.
pub fn infsup_spectrum(fem: &FeMatrices) -> Result<Vec<f64>> {
    if fem.n_u() > DENSE_LIMIT {
        return Err(SgfeError::SizeGuard {
            size: fem.n_u(),
            limit: DENSE_LIMIT,
        });
    }
    let b = fem.b.to_dense();
    let a = fem.a_unit.to_dense();
    let a_inv_bt = a
        .cholesky()
        .ok_or_else(|| SgfeError::Breakdown("Laplacian not positive definite".into()))?
        .solve(&b.transpose());
    let s = &b * a_inv_bt;
    let ev = generalized_symmetric_eigenvalues(&s, &fem.mass_p.to_dense())?;
    deflate_zeros(&ev, 1, 1e-10)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub bound_lo: f64,
    pub bound_hi: f64,
    pub measured_min: f64,
    pub measured_max: f64,
    /// min(measured_min - bound_lo, bound_hi - measured_max)
    pub margin: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl BoundCheck {
    pub fn new(name: &str, lo: f64, hi: f64, values: &[f64], tol: f64) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let margin = (min - lo).min(hi - max);
        Self {
            name: name.into(),
            bound_lo: lo,
            bound_hi: hi,
            measured_min: min,
            measured_max: max,
            margin,
            tolerance: tol,
            passed: margin >= -tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyParams {
    pub problem: ProblemParams,
    pub mode: LaplacianMode,
    /// a = safety · λ_min(Ã⁻¹𝒜) for the block-triangular checks.
    pub safety: f64,
}

impl Default for VerifyParams {
    fn default() -> Self {
        Self {
            problem: ProblemParams {
                level: 2,
                terms: 2,
                degree: 2,
                nu0: 1.0,
                sigma: 0.1,
                b1: 1.0,
                b2: 1.0,
            },
            mode: LaplacianMode::ExactUnweighted,
            safety: DEFAULT_SAFETY,
        }
    }
}

/// Raw spectra from the dense checks, for callers that need more than margins.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Spectra {
    pub laplacian: Vec<f64>,
    pub schur: Vec<f64>,
    pub approx_schur: Vec<f64>,
    pub mass_lumping: Vec<f64>,
    pub blockdiag: Vec<f64>,
    /// Real parts of the block-triangular spectrum.
    pub blocktri_re: Vec<f64>,
    pub blocktri_max_imag: f64,
    pub h_min_eig: f64,
    pub h_asymmetry: f64,
    pub h_product_sym_min_eig: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub params: VerifyParams,
    pub bounds: BoundSet,
    pub blockdiag: BlockDiagInterval,
    /// None when the ζ formulas are inapplicable.
    pub blocktri: Option<(f64, f64)>,
    pub gamma_convention: String,
    /// λ_min(Ã⁻¹𝒜) measured on this instance.
    pub a_star: f64,
    pub scaling: f64,
    pub chi_truncated: f64,
    pub checks: Vec<BoundCheck>,
    pub all_passed: bool,
    #[serde(skip)]
    pub spectra: Spectra,
}

impl BoundReport {
    pub fn ensure_passed(&self) -> Result<()> {
        let failed: Vec<String> = self
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| {
                format!(
                    "{}: measured [{:.6e}, {:.6e}] outside [{:.6e}, {:.6e}]",
                    c.name, c.measured_min, c.measured_max, c.bound_lo, c.bound_hi
                )
            })
            .collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(SgfeError::ContainmentViolated(failed.join("; ")))
        }
    }

    pub fn write_markdown<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let p = &self.params.problem;
        writeln!(
            w,
            "# Bound verification (level {}, M {}, k {}, sigma {})",
            p.level, p.terms, p.degree, p.sigma
        )?;
        writeln!(w)?;
        writeln!(
            w,
            "| check | bound lo | bound hi | measured min | measured max | margin | pass |"
        )?;
        writeln!(w, "|---|---|---|---|---|---|---|")?;
        for c in &self.checks {
            writeln!(
                w,
                "| {} | {:.6} | {:.6} | {:.6} | {:.6} | {:.3e} | {} |",
                c.name,
                c.bound_lo,
                c.bound_hi,
                c.measured_min,
                c.measured_max,
                c.margin,
                if c.passed { "yes" } else { "NO" }
            )?;
        }
        Ok(())
    }
}

/// Builds the instance and runs every dense containment check.
pub fn verify_instance(params: &VerifyParams) -> Result<BoundReport> {
    let problem = SgProblem::build(params.problem)?;
    verify_problem(&problem, params)
}

pub fn verify_problem(problem: &SgProblem, params: &VerifyParams) -> Result<BoundReport> {
    let n = problem.op.nrows();
    if n > DENSE_LIMIT {
        return Err(SgfeError::SizeGuard {
            size: n,
            limit: DENSE_LIMIT,
        });
    }
    let pos = check_positivity(&problem.kle);
    if !pos.is_positive {
        return Err(SgfeError::PositivityViolated {
            nu_lower: pos.nu_lower,
            sigma: problem.kle.sigma,
            chi: problem.kle.chi_total,
        });
    }
    let q = problem.num_modes();
    let (nu, np) = (problem.op.velocity_len(), problem.fem.n_p());
    let lap = problem.laplacian(params.mode)?;
    let (delta, cap_delta) = lap.equivalence();
    let gamma = measure_infsup(&problem.fem)?;
    let bounds = BoundSet::new(&problem.kle, delta, cap_delta, gamma);
    let mut spectra = Spectra::default();
    let mut checks = Vec::new();

    let eye = DMatrix::<f64>::identity(q, q);
    let a_sg = problem.op.a.to_dense()?;
    let at_sg = eye.kronecker(&lap.dense_forward()?);

    // Ã⁻¹𝒜
    spectra.laplacian = generalized_symmetric_eigenvalues(&a_sg, &at_sg)?;
    checks.push(BoundCheck::new(
        "laplacian",
        bounds.delta_hat,
        bounds.cap_delta_hat,
        &spectra.laplacian,
        1e-10,
    ));
    let a_star = spectra.laplacian[0];

    // Schur pencils against I ⊗ D_p
    let b_sg = problem.op.b.to_dense()?;
    let dp = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&problem.fem.diag_p));
    let dp_sg = eye.kronecker(&dp);
    let schur = |block: &DMatrix<f64>| -> Result<Vec<f64>> {
        let x = block
            .clone()
            .cholesky()
            .ok_or_else(|| SgfeError::Breakdown("velocity block not positive definite".into()))?
            .solve(&b_sg.transpose());
        let s = &b_sg * x;
        let ev = generalized_symmetric_eigenvalues(&((&s + s.transpose()) * 0.5), &dp_sg)?;
        deflate_zeros(&ev, q, 1e-10)
    };
    spectra.schur = schur(&a_sg)?;
    checks.push(BoundCheck::new(
        "schur",
        bounds.schur_lo,
        bounds.schur_hi,
        &spectra.schur,
        1e-10,
    ));
    spectra.approx_schur = schur(&at_sg)?;
    checks.push(BoundCheck::new(
        "approx-schur",
        bounds.approx_schur_lo,
        bounds.approx_schur_hi,
        &spectra.approx_schur,
        1e-10,
    ));
    spectra.mass_lumping = generalized_symmetric_eigenvalues(&problem.fem.mass_p.to_dense(), &dp)?;
    checks.push(BoundCheck::new(
        "mass-lumping",
        THETA_SQ,
        CAP_THETA_SQ,
        &spectra.mass_lumping,
        1e-12,
    ));

    // P1⁻¹𝒞 as the pencil (𝒞, P1)
    let c = problem.op.to_dense()?;
    let p1 = problem.block_diagonal(lap.clone());
    let p1d = p1.to_dense_forward()?;
    let ev = generalized_symmetric_eigenvalues(&c, &p1d)?;
    spectra.blockdiag = deflate_zeros(&ev, q, 1e-10)?;
    let blockdiag = blockdiag_interval(
        bounds.delta_hat,
        bounds.cap_delta_hat,
        bounds.approx_schur_lo,
        bounds.approx_schur_hi,
    );
    let neg: Vec<f64> = spectra
        .blockdiag
        .iter()
        .copied()
        .filter(|&l| l < 0.0)
        .collect();
    let posv: Vec<f64> = spectra
        .blockdiag
        .iter()
        .copied()
        .filter(|&l| l > 0.0)
        .collect();
    checks.push(BoundCheck::new(
        "blockdiag-negative",
        -blockdiag.a,
        -blockdiag.b,
        &neg,
        1e-8,
    ));
    checks.push(BoundCheck::new(
        "blockdiag-positive",
        blockdiag.c,
        blockdiag.d,
        &posv,
        1e-8,
    ));

    // P2⁻¹𝒞 restricted to the complement of the constant pressures
    let z = nullspace_complement(nu, q, np);
    let blocktri_spectrum = |scaling: f64| -> Result<(DMatrix<f64>, Vec<f64>, f64)> {
        let (p2, _) = problem.block_triangular(lap.clone(), scaling)?;
        let x = p2.to_dense_forward()?.lu().solve(&c).ok_or_else(|| {
            SgfeError::Breakdown("block-triangular preconditioner is singular".into())
        })?;
        let eig = nonsymmetric_eigenvalues(z.transpose() * &x * &z)?;
        let radius = eig.iter().fold(0.0f64, |m, l| m.max(l.norm()));
        let max_imag = eig.iter().fold(0.0f64, |m, l| m.max(l.im.abs())) / radius;
        Ok((x, sorted(eig.iter().map(|l| l.re).collect()), max_imag))
    };

    // a = safety · a*, the numerically scaled preconditioner
    let scaling = params.safety * a_star;
    let (x, re, max_imag) = blocktri_spectrum(scaling)?;
    spectra.blocktri_re = re;
    spectra.blocktri_max_imag = max_imag;
    checks.push(BoundCheck::new(
        "blocktri-real",
        0.0,
        1e-8,
        &[max_imag],
        0.0,
    ));
    checks.push(BoundCheck::new(
        "blocktri-positive",
        0.0,
        f64::INFINITY,
        &spectra.blocktri_re[..1],
        0.0,
    ));

    // a = a_δ δ̂ with the analytical constants, as the interval formulas assume
    let blocktri = blocktri_interval(
        params.safety,
        bounds.delta_hat,
        bounds.cap_delta_hat,
        bounds.schur_lo,
        bounds.schur_hi,
    )
    .ok();
    if let Some((lo, hi)) = blocktri {
        let (_, re_ana, _) = blocktri_spectrum(params.safety * bounds.delta_hat)?;
        checks.push(BoundCheck::new("blocktri-interval", lo, hi, &re_ana, 1e-6));
    }
    let h = crate::precond::HOperator::new(&problem.block_triangular(lap.clone(), scaling)?.0);

    let hd = h.to_dense()?;
    let h_ev = hd.symmetric_eigenvalues();
    spectra.h_min_eig = h_ev.iter().copied().fold(f64::INFINITY, f64::min);
    checks.push(BoundCheck::new(
        "h-positive",
        0.0,
        f64::INFINITY,
        &[spectra.h_min_eig],
        0.0,
    ));
    let hx = &hd * &x;
    spectra.h_asymmetry = (&hx - hx.transpose()).norm() / hx.norm();
    checks.push(BoundCheck::new(
        "h-symmetry",
        0.0,
        1e-10,
        &[spectra.h_asymmetry],
        0.0,
    ));
    let sym = z.transpose() * ((&hx + hx.transpose()) * 0.5) * &z;
    spectra.h_product_sym_min_eig = sym
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    checks.push(BoundCheck::new(
        "h-product-positive",
        0.0,
        f64::INFINITY,
        &[spectra.h_product_sym_min_eig],
        0.0,
    ));

    let all_passed = checks.iter().all(|c| c.passed);
    Ok(BoundReport {
        params: *params,
        bounds,
        blockdiag,
        blocktri,
        gamma_convention: "gamma_hat, Gamma_hat = unscaled Schur bounds (schur_lo, schur_hi)"
            .into(),
        a_star,
        scaling,
        chi_truncated: problem.kle.chi_total,
        checks,
        all_passed,
        spectra,
    })
}
