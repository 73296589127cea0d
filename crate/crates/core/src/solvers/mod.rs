//! Krylov solvers for the SG saddle-point system.

pub mod bpcg;
pub mod lanczos;
pub mod minres;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SgfeError};
use crate::kron::MatvecCounts;
use crate::precond::ScalingStrategy;

pub use bpcg::bpcg_solve;
pub use minres::minres_solve;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Target for ‖b - 𝒞z‖ / ‖b‖.
    pub tolerance: f64,
    pub max_iters: usize,
    pub scaling: ScalingStrategy,
    pub record_history: bool,
    /// Remove the per-mode pressure mean from the iterate.
    pub pressure_projection: bool,
    /// Treat a nonpositive H inner product as an error (BPCG).
    pub require_h_positive: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iters: 1000,
            scaling: ScalingStrategy::Numerical,
            record_history: true,
            pressure_projection: true,
            require_h_positive: true,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(SgfeError::InvalidParameter(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iters == 0 {
            return Err(SgfeError::InvalidParameter(
                "max_iters must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub solver: String,
    pub iterations: usize,
    pub converged: bool,
    /// True relative residual after each iteration (entry 0 is the initial guess).
    pub residual_history: Vec<f64>,
    /// Preconditioned residual norm from the recurrence (MINRES) or √⟨r, r⟩_H (BPCG).
    pub preconditioned_history: Vec<f64>,
    pub final_relative_residual: f64,
    pub matvec_counts: MatvecCounts,
    pub scaling_used: Option<f64>,
    pub wall_time_s: f64,
}

/// Called after every iteration with (iteration, current iterate).
pub type Observer<'a> = &'a mut dyn FnMut(usize, &[f64]);
