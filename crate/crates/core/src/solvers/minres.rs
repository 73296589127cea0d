//! Preconditioned MINRES (Paige-Saunders) with an SPD preconditioner.

use std::time::Instant;

use crate::error::{Result, SgfeError};
use crate::kron::SaddleOperator;
use crate::linalg::{axpy, dot, norm, remove_chunk_means, LinearOperator};
use crate::precond::{BlockPrecond, PrecondKind};

use super::{Observer, SolveConfig, SolveReport};

fn true_residual(op: &dyn LinearOperator, b: &[f64], z: &[f64], work: &mut [f64]) -> f64 {
    op.apply(z, work);
    work.iter()
        .zip(b)
        .map(|(cz, bi)| (bi - cz).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// MINRES on the saddle-point system with the block-diagonal preconditioner.
pub fn minres_solve(
    op: &SaddleOperator,
    p1: &BlockPrecond,
    b: &[f64],
    cfg: &SolveConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    minres_observed(op, p1, b, cfg, None)
}

pub fn minres_observed(
    op: &SaddleOperator,
    p1: &BlockPrecond,
    b: &[f64],
    cfg: &SolveConfig,
    mut observer: Option<Observer<'_>>,
) -> Result<(Vec<f64>, SolveReport)> {
    cfg.validate()?;
    if p1.kind != PrecondKind::BlockDiagonal {
        return Err(SgfeError::InvalidParameter(
            "MINRES needs the block-diagonal preconditioner".into(),
        ));
    }
    minres_generic(
        op,
        p1,
        b,
        cfg,
        op.velocity_len(),
        op.pressure_panel(),
        &mut observer,
        || {
            let mut c = op.counts();
            c.laplacian_inv = p1.laplacian.applications();
            c
        },
        || {
            op.reset_counters();
            p1.laplacian.reset_counters();
        },
    )
}

/// MINRES for any symmetric operator and SPD preconditioner. `pressure_offset`
/// and `pressure_panel` describe where the projected block starts.
#[allow(clippy::too_many_arguments)]
pub(crate) fn minres_generic(
    op: &dyn LinearOperator,
    prec: &dyn LinearOperator,
    b: &[f64],
    cfg: &SolveConfig,
    pressure_offset: usize,
    pressure_panel: usize,
    observer: &mut Option<Observer<'_>>,
    counts: impl Fn() -> crate::kron::MatvecCounts,
    reset: impl Fn(),
) -> Result<(Vec<f64>, SolveReport)> {
    let n = op.nrows();
    if b.len() != n {
        return Err(SgfeError::DimensionMismatch {
            context: "MINRES right-hand side",
            expected: n,
            actual: b.len(),
        });
    }
    let start = Instant::now();
    reset();
    let bnorm = norm(b);
    let mut z = vec![0.0; n];
    let mut history = vec![if bnorm > 0.0 { 1.0 } else { 0.0 }];
    let mut prec_history = Vec::new();
    let finish =
        |z: Vec<f64>, iters: usize, converged: bool, history: Vec<f64>, prec_history: Vec<f64>| {
            let final_rel = *history.last().unwrap_or(&0.0);
            let report = SolveReport {
                solver: "minres".into(),
                iterations: iters,
                converged,
                residual_history: if cfg.record_history {
                    history
                } else {
                    vec![final_rel]
                },
                preconditioned_history: if cfg.record_history {
                    prec_history
                } else {
                    Vec::new()
                },
                final_relative_residual: final_rel,
                matvec_counts: counts(),
                scaling_used: None,
                wall_time_s: start.elapsed().as_secs_f64(),
            };
            (z, report)
        };
    if bnorm == 0.0 {
        return Ok(finish(z, 0, true, history, prec_history));
    }

    let mut r1 = b.to_vec();
    let mut r2 = b.to_vec();
    let mut y = vec![0.0; n];
    prec.apply(&r1, &mut y);
    let beta1 = dot(&r1, &y);
    if !(beta1 > 0.0) {
        return Err(SgfeError::Breakdown(format!(
            "preconditioner is not positive definite (rᵀP⁻¹r = {beta1})"
        )));
    }
    let beta1 = beta1.sqrt();
    prec_history.push(beta1);
    let (mut oldb, mut beta) = (0.0, beta1);
    let (mut dbar, mut epsln, mut phibar) = (0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let mut w = vec![0.0; n];
    let mut w1 = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut work = vec![0.0; n];

    for itn in 1..=cfg.max_iters {
        let s = 1.0 / beta;
        for (vi, yi) in v.iter_mut().zip(&y) {
            *vi = s * yi;
        }
        op.apply(&v, &mut y);
        if itn >= 2 {
            axpy(-beta / oldb, &r1, &mut y);
        }
        let alfa = dot(&v, &y);
        axpy(-alfa / beta, &r2, &mut y);
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        prec.apply(&r2, &mut y);
        oldb = beta;
        let bsq = dot(&r2, &y);
        if bsq.is_nan() || !alfa.is_finite() {
            return Err(SgfeError::Breakdown(format!(
                "NaN in MINRES recurrence at iteration {itn}"
            )));
        }
        if bsq < 0.0 && bsq.abs() > 1e-14 * beta1 * beta1 {
            return Err(SgfeError::Breakdown(
                "preconditioner is not positive definite".into(),
            ));
        }
        beta = bsq.max(0.0).sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        std::mem::swap(&mut w1, &mut w2);
        std::mem::swap(&mut w2, &mut w);
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma;
        }
        axpy(phi, &w, &mut z);
        if cfg.pressure_projection && pressure_panel > 0 {
            remove_chunk_means(&mut z[pressure_offset..], pressure_panel);
        }

        let rel = true_residual(op, b, &z, &mut work) / bnorm;
        history.push(rel);
        prec_history.push(phibar);
        if let Some(obs) = observer.as_mut() {
            obs(itn, &z);
        }
        if rel <= cfg.tolerance {
            return Ok(finish(z, itn, true, history, prec_history));
        }
        if beta == 0.0 {
            // exact invariant subspace; the iterate cannot improve further
            return Ok(finish(z, itn, false, history, prec_history));
        }
    }
    Ok(finish(z, cfg.max_iters, false, history, prec_history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{DenseOperator, Identity};
    use nalgebra::DMatrix;

    fn run(
        op: &dyn LinearOperator,
        prec: &dyn LinearOperator,
        b: &[f64],
        cfg: &SolveConfig,
    ) -> (Vec<f64>, SolveReport) {
        minres_generic(
            op,
            prec,
            b,
            cfg,
            b.len(),
            0,
            &mut None,
            crate::kron::MatvecCounts::default,
            || {},
        )
        .unwrap()
    }

    #[test]
    fn identity_converges_in_one_step() {
        let b = vec![1.0, -2.0, 3.0];
        let (z, rep) = run(&Identity(3), &Identity(3), &b, &SolveConfig::default());
        assert!(rep.converged);
        assert_eq!(rep.iterations, 1);
        for (a, b) in z.iter().zip(&b) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn indefinite_dense_system() {
        let n = 12;
        let a = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                if i % 3 == 0 {
                    -(1.0 + i as f64)
                } else {
                    2.0 + i as f64
                }
            } else if i.abs_diff(j) == 1 {
                0.5
            } else {
                0.0
            }
        });
        let prec = DenseOperator(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0 / a[(i, i)].abs()
            } else {
                0.0
            }
        }));
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let cfg = SolveConfig {
            tolerance: 1e-12,
            ..Default::default()
        };
        let (z, rep) = run(&DenseOperator(a.clone()), &prec, &b, &cfg);
        assert!(rep.converged);
        let exact = a.lu().solve(&nalgebra::DVector::from_vec(b)).unwrap();
        for (x, e) in z.iter().zip(exact.iter()) {
            assert!((x - e).abs() < 1e-9);
        }
        // minimum-residual property of the recurrence norm
        for w in rep.preconditioned_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let (z, rep) = run(
            &Identity(4),
            &Identity(4),
            &[0.0; 4],
            &SolveConfig::default(),
        );
        assert!(rep.converged && z.iter().all(|&v| v == 0.0));
    }
}
