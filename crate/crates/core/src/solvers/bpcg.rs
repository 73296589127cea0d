//! Conjugate gradients on P2⁻¹𝒞 in the inner product
//! ⟨x, y⟩_H = x_uᵀ(𝒜 - aÃ)y_u + x_pᵀ S̃ y_p, reorganized so that H is never
//! applied: each iteration costs one 𝒜, two ℬ, one ℬᵀ and one Ã⁻¹ besides the
//! true-residual check.

use std::time::Instant;

use crate::error::{Result, SgfeError};
use crate::kron::SaddleOperator;
use crate::linalg::{axpy, dot, norm, remove_chunk_means, LinearOperator};
use crate::precond::{BlockPrecond, HOperator, PrecondKind};

use super::{Observer, SolveConfig, SolveReport};

pub fn bpcg_solve(
    op: &SaddleOperator,
    p2: &BlockPrecond,
    h: &HOperator,
    b: &[f64],
    cfg: &SolveConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    bpcg_observed(op, p2, h, b, cfg, None)
}

pub fn bpcg_observed(
    op: &SaddleOperator,
    p2: &BlockPrecond,
    h: &HOperator,
    b: &[f64],
    cfg: &SolveConfig,
    mut observer: Option<Observer<'_>>,
) -> Result<(Vec<f64>, SolveReport)> {
    cfg.validate()?;
    if p2.kind != PrecondKind::BlockTriangular {
        return Err(SgfeError::InvalidParameter(
            "BPCG needs the block-triangular preconditioner".into(),
        ));
    }
    if (p2.scaling - h.scaling).abs() > 0.0 {
        return Err(SgfeError::InvalidParameter(format!(
            "preconditioner scaling {} differs from the H scaling {}",
            p2.scaling, h.scaling
        )));
    }
    let nu = op.velocity_len();
    let n = op.nrows();
    if b.len() != n {
        return Err(SgfeError::DimensionMismatch {
            context: "BPCG right-hand side",
            expected: n,
            actual: b.len(),
        });
    }
    let a = p2.scaling;
    let lap = &p2.laplacian;
    let start = Instant::now();
    op.reset_counters();
    lap.reset_counters();

    let bnorm = norm(b);
    let mut z = vec![0.0; n];
    let mut history = vec![if bnorm > 0.0 { 1.0 } else { 0.0 }];
    let mut h_history = Vec::new();
    let finish =
        |z: Vec<f64>, iters: usize, converged: bool, history: Vec<f64>, h_history: Vec<f64>| {
            let final_rel = *history.last().unwrap_or(&0.0);
            let mut counts = op.counts();
            counts.laplacian_inv = lap.applications();
            let report = SolveReport {
                solver: "bpcg".into(),
                iterations: iters,
                converged,
                residual_history: if cfg.record_history {
                    history
                } else {
                    vec![final_rel]
                },
                preconditioned_history: if cfg.record_history {
                    h_history
                } else {
                    Vec::new()
                },
                final_relative_residual: final_rel,
                matvec_counts: counts,
                scaling_used: Some(a),
                wall_time_s: start.elapsed().as_secs_f64(),
            };
            (z, report)
        };
    if bnorm == 0.0 {
        return Ok(finish(z, 0, true, history, h_history));
    }
    let np_panel = op.pressure_panel();

    // r = P2⁻¹ b together with g = (a Ã r_u, S̃ r_p)
    let mut r = vec![0.0; n];
    let mut g = vec![0.0; n];
    {
        let (ru, rp) = r.split_at_mut(nu);
        lap.apply_inverse_blockwise(&b[..nu], ru, a)?;
        op.b.apply(ru, rp);
        axpy(-1.0, &b[nu..], rp);
        g[..nu].copy_from_slice(&b[..nu]);
        g[nu..].copy_from_slice(rp);
        p2.apply_schur_inverse(rp);
    }
    let mut a_r = vec![0.0; nu];
    op.a.apply(&r[..nu], &mut a_r);
    let h_inner = |r: &[f64], a_r: &[f64], g: &[f64]| {
        dot(&r[..nu], a_r) - dot(&r[..nu], &g[..nu]) + dot(&r[nu..], &g[nu..])
    };
    let mut rho = h_inner(&r, &a_r, &g);
    check_positive(rho, 0, a, cfg)?;
    h_history.push(rho.max(0.0).sqrt());

    let mut d = r.clone();
    let mut a_d = a_r.clone();
    let mut cd = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s_p = vec![0.0; n - nu];
    let mut work = vec![0.0; n];

    for itn in 1..=cfg.max_iters {
        // 𝒞 d from the stored 𝒜 d
        {
            let (cu, cp) = cd.split_at_mut(nu);
            op.bt.apply(&d[nu..], cu);
            axpy(1.0, &a_d, cu);
            op.b.apply(&d[..nu], cp);
        }
        // y = P2⁻¹ 𝒞d, keeping s_p = S̃ y_p
        {
            let (yu, yp) = y.split_at_mut(nu);
            lap.apply_inverse_blockwise(&cd[..nu], yu, a)?;
            op.b.apply(yu, &mut s_p);
            axpy(-1.0, &cd[nu..], &mut s_p);
            yp.copy_from_slice(&s_p);
            p2.apply_schur_inverse(yp);
        }
        let kappa = dot(&a_d, &y[..nu]) - dot(&d[..nu], &cd[..nu]) + dot(&d[nu..], &s_p);
        check_positive(kappa, itn, a, cfg)?;
        let alpha = rho / kappa;
        axpy(alpha, &d, &mut z);
        axpy(-alpha, &y, &mut r);
        axpy(-alpha, &cd[..nu], &mut g[..nu]);
        axpy(-alpha, &s_p, &mut g[nu..]);
        if cfg.pressure_projection {
            remove_chunk_means(&mut z[nu..], np_panel);
        }

        op.a.apply(&r[..nu], &mut a_r);
        let rho_new = h_inner(&r, &a_r, &g);

        op.apply(&z, &mut work);
        let rel = work
            .iter()
            .zip(b)
            .map(|(cz, bi)| (bi - cz).powi(2))
            .sum::<f64>()
            .sqrt()
            / bnorm;
        history.push(rel);
        h_history.push(rho_new.max(0.0).sqrt());
        if let Some(obs) = observer.as_mut() {
            obs(itn, &z);
        }
        if !rel.is_finite() {
            return Err(SgfeError::Breakdown(format!(
                "non-finite residual at BPCG iteration {itn}"
            )));
        }
        if rel <= cfg.tolerance {
            return Ok(finish(z, itn, true, history, h_history));
        }
        if rho_new == 0.0 {
            return Ok(finish(z, itn, false, history, h_history));
        }
        check_positive(rho_new, itn, a, cfg)?;
        let beta = rho_new / rho;
        rho = rho_new;
        for (di, ri) in d.iter_mut().zip(&r) {
            *di = ri + beta * *di;
        }
        for (adi, ari) in a_d.iter_mut().zip(&a_r) {
            *adi = ari + beta * *adi;
        }
    }
    Ok(finish(z, cfg.max_iters, false, history, h_history))
}

fn check_positive(value: f64, iteration: usize, scaling: f64, cfg: &SolveConfig) -> Result<()> {
    if value.is_nan() {
        return Err(SgfeError::Breakdown(format!(
            "NaN in BPCG recurrence at iteration {iteration}"
        )));
    }
    if cfg.require_h_positive && value <= 0.0 {
        return Err(SgfeError::IndefiniteInnerProduct {
            iteration,
            value,
            scaling,
        });
    }
    if value == 0.0 {
        return Err(SgfeError::Breakdown(format!(
            "zero H inner product at iteration {iteration}"
        )));
    }
    Ok(())
}
