//! Experiment drivers behind the command-line tool: single solves, parameter
//! sweeps, the scaling study, bound-verification grids and matrix export.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{verify_instance, BoundReport, VerifyParams};
use crate::chaos::extreme_eigs_g;
use crate::error::{Result, SgfeError};
use crate::mesh::MAX_LEVEL;
use crate::precond::{
    analytical_scaling, min_laplacian_eigenvalue, numerical_scaling, LaplacianMode,
    LaplacianPrecond, ScalingStrategy, DEFAULT_SAFETY,
};
use crate::problem::{CenterStatistics, ProblemParams, SgProblem};
use crate::random_field::KleSummary;
use crate::solvers::lanczos::LanczosOptions;
use crate::solvers::{bpcg_solve, minres_solve, SolveConfig, SolveReport};

/// Ratios a/a* probed by the scaling study.
pub const DEFAULT_RATIOS: [f64; 13] = [
    0.1, 0.2, 0.4, 0.48, 0.6, 0.8, 1.0, 1.2, 1.4, 2.0, 3.0, 5.0, 10.0,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverKind {
    Minres,
    BpcgAnalytical,
    BpcgNumerical,
    /// BPCG with a = r · a*.
    BpcgRatio(f64),
}

impl SolverKind {
    pub const COMPARED: [SolverKind; 3] = [
        SolverKind::Minres,
        SolverKind::BpcgAnalytical,
        SolverKind::BpcgNumerical,
    ];
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverKind::Minres => write!(f, "minres"),
            SolverKind::BpcgAnalytical => write!(f, "bpcg-ana"),
            SolverKind::BpcgNumerical => write!(f, "bpcg-num"),
            SolverKind::BpcgRatio(r) => write!(f, "bpcg-ratio:{r}"),
        }
    }
}

impl FromStr for SolverKind {
    type Err = SgfeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minres" => Ok(SolverKind::Minres),
            "bpcg-ana" => Ok(SolverKind::BpcgAnalytical),
            "bpcg-num" => Ok(SolverKind::BpcgNumerical),
            _ => {
                let r = s
                    .strip_prefix("bpcg-ratio:")
                    .and_then(|r| r.parse::<f64>().ok())
                    .ok_or_else(|| SgfeError::InvalidParameter(format!("unknown solver '{s}'")))?;
                if !(r > 0.0 && r.is_finite()) {
                    return Err(SgfeError::InvalidParameter(format!(
                        "scaling ratio must be positive, got {r}"
                    )));
                }
                Ok(SolverKind::BpcgRatio(r))
            }
        }
    }
}

impl Serialize for SolverKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SolverKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Everything one experiment run needs. Field order is the JSON order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub level: u32,
    #[serde(rename = "M")]
    pub terms: usize,
    #[serde(rename = "k")]
    pub degree: usize,
    pub nu0: f64,
    pub sigma: f64,
    pub b1: f64,
    pub b2: f64,
    pub solver: SolverKind,
    pub laplacian_mode: LaplacianMode,
    pub tolerance: f64,
    pub max_iters: usize,
    pub output_dir: PathBuf,
    /// Start vector seed for the Lanczos estimates.
    pub seed: u64,
    pub workers: usize,
    /// Mesh level of the numerical scaling estimate.
    pub scaling_level: u32,
    /// a_δ for the numerical scaling.
    pub safety: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            level: 4,
            terms: 6,
            degree: 2,
            nu0: 1.0,
            sigma: 0.1,
            b1: 1.0,
            b2: 1.0,
            solver: SolverKind::BpcgNumerical,
            laplacian_mode: LaplacianMode::Multigrid,
            tolerance: 1e-6,
            max_iters: 1000,
            output_dir: PathBuf::from("out"),
            seed: 7,
            workers: 1,
            scaling_level: 1,
            safety: DEFAULT_SAFETY,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SgfeError::InvalidParameter(msg));
        if self.level == 0 || self.level > MAX_LEVEL {
            return bad(format!(
                "level must be in 1..={MAX_LEVEL}, got {}",
                self.level
            ));
        }
        if self.terms == 0 {
            return bad("M must be at least 1".into());
        }
        if self.degree > 10 {
            return bad(format!(
                "chaos degree {} is beyond the supported range 0..=10",
                self.degree
            ));
        }
        if !(self.nu0 > 0.0 && self.nu0.is_finite()) {
            return bad(format!("nu0 must be positive, got {}", self.nu0));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be nonnegative, got {}", self.sigma));
        }
        if !(self.b1 > 0.0 && self.b2 > 0.0 && self.b1.is_finite() && self.b2.is_finite()) {
            return bad(format!(
                "correlation lengths must be positive, got ({}, {})",
                self.b1, self.b2
            ));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return bad(format!(
                "tolerance must be in (0, 1), got {}",
                self.tolerance
            ));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.scaling_level == 0 || self.scaling_level > self.level {
            return bad(format!(
                "scaling_level must be in 1..={}, got {}",
                self.level, self.scaling_level
            ));
        }
        if !(self.safety > 0.0 && self.safety < 1.0) {
            return bad(format!(
                "safety factor must be in (0, 1), got {}",
                self.safety
            ));
        }
        Ok(())
    }

    pub fn problem_params(&self) -> ProblemParams {
        ProblemParams {
            level: self.level,
            terms: self.terms,
            degree: self.degree,
            nu0: self.nu0,
            sigma: self.sigma,
            b1: self.b1,
            b2: self.b2,
        }
    }

    fn lanczos_options(&self) -> LanczosOptions {
        LanczosOptions {
            seed: self.seed,
            ..Default::default()
        }
    }

    fn with_solver(&self, solver: SolverKind) -> Self {
        Self {
            solver,
            ..self.clone()
        }
    }

    /// Maps `f` over independent points: in order on the caller's pool when
    /// `workers` is 1, otherwise on a dedicated pool with `workers` threads.
    pub fn map_points<T, R, F>(&self, items: &[T], f: F) -> Result<Vec<R>>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> Result<R> + Sync + Send,
    {
        if self.workers == 1 {
            return items.iter().map(f).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| SgfeError::InvalidParameter(format!("cannot build worker pool: {e}")))?;
        pool.install(|| items.par_iter().map(f).collect())
    }
}

/// How the BPCG scaling was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingInfo {
    pub strategy: ScalingStrategy,
    pub value: f64,
    /// Estimate of λ_min(Ã⁻¹𝒜) on the solve mesh, when one was computed.
    pub a_star: Option<f64>,
    pub a_star_level: Option<u32>,
}

/// Estimate of λ_min(Ã⁻¹𝒜) on the mesh of `problem`.
///
/// Off the solve level the coarse value is transferred with the ratio of the
/// Laplacian equivalence constants: the Rayleigh quotient of Ã⁻¹𝒜 factors
/// into those of A⁻¹𝒜 and Ã⁻¹A, and only the latter depends on the multigrid
/// hierarchy depth.
pub fn estimate_a_star(
    problem: &SgProblem,
    lap: &LaplacianPrecond,
    cfg: &ExperimentConfig,
) -> Result<f64> {
    let opts = cfg.lanczos_options();
    if cfg.scaling_level == problem.params.level {
        return Ok(min_laplacian_eigenvalue(&problem.op, lap, &opts)?.a_star);
    }
    let coarse = numerical_scaling(
        &problem.kle,
        problem.params.degree,
        lap.mode(),
        cfg.scaling_level,
        &opts,
    )?;
    Ok(coarse.a_star * lap.equivalence().0 / coarse.laplacian_delta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSizes {
    pub modes: usize,
    pub velocity_dofs: usize,
    pub pressure_dofs: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub config: ExperimentConfig,
    pub sizes: ProblemSizes,
    pub kle: KleSummary,
    pub laplacian_equivalence: (f64, f64),
    pub scaling: Option<ScalingInfo>,
    pub report: SolveReport,
    pub center: CenterStatistics,
}

/// Solves an assembled problem with the solver named in `cfg`.
pub fn solve_problem(
    problem: &SgProblem,
    lap: Arc<LaplacianPrecond>,
    cfg: &ExperimentConfig,
) -> Result<(Vec<f64>, SolveOutcome)> {
    let mut solve_cfg = SolveConfig {
        tolerance: cfg.tolerance,
        max_iters: cfg.max_iters,
        ..Default::default()
    };
    let (z, report, scaling) = match cfg.solver {
        SolverKind::Minres => {
            let p1 = problem.block_diagonal(lap.clone());
            let (z, rep) = minres_solve(&problem.op, &p1, &problem.rhs, &solve_cfg)?;
            (z, rep, None)
        }
        kind => {
            let (strategy, value, a_star) = match kind {
                SolverKind::BpcgAnalytical => (
                    ScalingStrategy::Analytical,
                    analytical_scaling(&problem.kle, lap.certified_delta())?,
                    None,
                ),
                SolverKind::BpcgNumerical => {
                    let a_star = estimate_a_star(problem, &lap, cfg)?;
                    (
                        ScalingStrategy::Numerical,
                        cfg.safety * a_star,
                        Some(a_star),
                    )
                }
                SolverKind::BpcgRatio(r) => {
                    // ratios beyond one deliberately leave the region where H is an inner product
                    solve_cfg.require_h_positive = false;
                    let a_star = estimate_a_star(problem, &lap, cfg)?;
                    (ScalingStrategy::FixedRatio(r), r * a_star, Some(a_star))
                }
                SolverKind::Minres => unreachable!(),
            };
            solve_cfg.scaling = strategy;
            let (p2, h) = problem.block_triangular(lap.clone(), value)?;
            let (z, rep) = bpcg_solve(&problem.op, &p2, &h, &problem.rhs, &solve_cfg)?;
            let info = ScalingInfo {
                strategy,
                value,
                a_star,
                a_star_level: a_star.map(|_| cfg.scaling_level),
            };
            (z, rep, Some(info))
        }
    };
    let outcome = SolveOutcome {
        config: cfg.clone(),
        sizes: ProblemSizes {
            modes: problem.num_modes(),
            velocity_dofs: problem.op.velocity_len(),
            pressure_dofs: problem.op.pressure_len(),
            total: problem.rhs.len(),
        },
        kle: KleSummary::new(&problem.kle),
        laplacian_equivalence: lap.equivalence(),
        scaling,
        report,
        center: problem.center_statistics(&z)?,
    };
    Ok((z, outcome))
}

/// Assembles and solves one configuration.
pub fn run_solve(cfg: &ExperimentConfig) -> Result<(Vec<f64>, SolveOutcome)> {
    cfg.validate()?;
    let problem = SgProblem::build(cfg.problem_params())?;
    let lap = problem.laplacian(cfg.laplacian_mode)?;
    solve_problem(&problem, lap, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "h")]
    Level,
    #[serde(rename = "M")]
    Terms,
    #[serde(rename = "k")]
    Degree,
    #[serde(rename = "sigma")]
    Sigma,
}

impl FromStr for SweepAxis {
    type Err = SgfeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h" | "level" => Ok(SweepAxis::Level),
            "M" | "m" => Ok(SweepAxis::Terms),
            "k" => Ok(SweepAxis::Degree),
            "sigma" => Ok(SweepAxis::Sigma),
            _ => Err(SgfeError::InvalidParameter(format!(
                "unknown sweep axis '{s}' (expected h, M, k or sigma)"
            ))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Level => "h",
            SweepAxis::Terms => "M",
            SweepAxis::Degree => "k",
            SweepAxis::Sigma => "sigma",
        })
    }
}

impl SweepAxis {
    /// Copy of `cfg` with the axis set to `value`.
    pub fn apply(self, cfg: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let as_count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(SgfeError::InvalidParameter(format!(
                    "axis {self} needs integer values, got {v}"
                )))
            }
        };
        let mut out = cfg.clone();
        match self {
            SweepAxis::Level => {
                out.level = as_count(value)? as u32;
                out.scaling_level = out.scaling_level.min(out.level);
            }
            SweepAxis::Terms => out.terms = as_count(value)?,
            SweepAxis::Degree => out.degree = as_count(value)?,
            SweepAxis::Sigma => out.sigma = value,
        }
        out.validate()?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub solver: SolverKind,
    pub iterations: Option<usize>,
    pub converged: bool,
    pub final_residual: Option<f64>,
    pub scaling: Option<f64>,
    /// Largest eigenvalue of the stochastic factors, identical for every m.
    pub lambda_max_g: f64,
    pub modes: usize,
    pub total_dofs: usize,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

/// One row per (value, solver) for the three compared solvers.
pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    if values.is_empty() {
        return Err(SgfeError::InvalidParameter(
            "sweep needs at least one value".into(),
        ));
    }
    let configs = values
        .iter()
        .map(|&v| axis.apply(cfg, v))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(ExperimentConfig, f64)> =
        configs.into_iter().zip(values.iter().copied()).collect();
    let points = cfg.map_points(&pairs, |(c, v)| sweep_point(c, axis, *v))?;
    let rows: Vec<SweepRow> = points.into_iter().flatten().collect();
    let dir = cfg.output_dir.join("points");
    for chunk in rows.chunks(SolverKind::COMPARED.len()) {
        let name = format!("sweep-{}-{}.json", axis, chunk[0].value);
        write_atomic(&dir.join(name), &serde_json::to_vec_pretty(chunk)?)?;
    }
    Ok(rows)
}

fn sweep_point(cfg: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<Vec<SweepRow>> {
    let problem = SgProblem::build(cfg.problem_params())?;
    let lap = problem.laplacian(cfg.laplacian_mode)?;
    let lambda_max_g = match problem.g.first() {
        Some(g) if g.nrows() > 1 => extreme_eigs_g(g)?.1,
        _ => 0.0,
    };
    let mut rows = Vec::new();
    for solver in SolverKind::COMPARED {
        let c = cfg.with_solver(solver);
        let mut row = SweepRow {
            axis,
            value,
            solver,
            iterations: None,
            converged: false,
            final_residual: None,
            scaling: None,
            lambda_max_g,
            modes: problem.num_modes(),
            total_dofs: problem.rhs.len(),
            wall_time_s: 0.0,
            error: None,
        };
        match solve_problem(&problem, lap.clone(), &c) {
            Ok((_, out)) => {
                row.iterations = Some(out.report.iterations);
                row.converged = out.report.converged;
                row.final_residual = Some(out.report.final_relative_residual);
                row.scaling = out.report.scaling_used;
                row.wall_time_s = out.report.wall_time_s;
            }
            // an unavailable scaling is a result of the sweep, not a failure of it
            Err(
                e @ (SgfeError::PositivityViolated { .. }
                | SgfeError::IndefiniteInnerProduct { .. }),
            ) => {
                row.error = Some(e.to_string());
            }
            Err(e) => return Err(e),
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub ratio: f64,
    pub scaling: f64,
    pub iterations: Option<usize>,
    pub converged: bool,
    pub final_residual: Option<f64>,
    /// Set on the row that uses the analytical lower bound.
    pub analytical: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStudy {
    pub config: ExperimentConfig,
    /// λ_min(Ã⁻¹𝒜) computed by Lanczos on the solve mesh.
    pub a_star: f64,
    pub analytical_scaling: Option<f64>,
    pub analytical_ratio: Option<f64>,
    pub rows: Vec<ScalingRow>,
}

impl ScalingStudy {
    /// Grid ratio with the fewest iterations; ties go to the first ratio on the grid.
    pub fn argmin(&self) -> Option<(f64, usize)> {
        self.rows
            .iter()
            .filter(|r| !r.analytical && r.converged)
            .filter_map(|r| r.iterations.map(|i| (r.ratio, i)))
            .fold(None, |best, (r, i)| match best {
                Some((_, bi)) if bi <= i => best,
                _ => Some((r, i)),
            })
    }
}

/// BPCG iteration counts over a = r · a* for every r in `ratios`, plus the analytical scaling.
pub fn scaling_study(cfg: &ExperimentConfig, ratios: &[f64]) -> Result<ScalingStudy> {
    cfg.validate()?;
    if ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(SgfeError::InvalidParameter(
            "scaling ratios must be positive".into(),
        ));
    }
    {
        let problem = SgProblem::build(cfg.problem_params())?;
        let lap = problem.laplacian(cfg.laplacian_mode)?;
        let a_star = min_laplacian_eigenvalue(&problem.op, &lap, &cfg.lanczos_options())?.a_star;
        let analytical = analytical_scaling(&problem.kle, lap.certified_delta()).ok();
        let mut grid: Vec<(f64, bool)> = ratios.iter().map(|&r| (r, false)).collect();
        if let Some(a) = analytical {
            grid.push((a / a_star, true));
        }
        let solve_cfg = SolveConfig {
            tolerance: cfg.tolerance,
            max_iters: cfg.max_iters,
            require_h_positive: false,
            ..Default::default()
        };
        let rows = cfg.map_points(&grid, |&(ratio, is_ana)| -> Result<ScalingRow> {
            let scaling = ratio * a_star;
            let (p2, h) = problem.block_triangular(lap.clone(), scaling)?;
            let mut row = ScalingRow {
                ratio,
                scaling,
                iterations: None,
                converged: false,
                final_residual: None,
                analytical: is_ana,
                error: None,
            };
            match bpcg_solve(&problem.op, &p2, &h, &problem.rhs, &solve_cfg) {
                Ok((_, rep)) => {
                    row.iterations = Some(rep.iterations);
                    row.converged = rep.converged;
                    row.final_residual = Some(rep.final_relative_residual);
                }
                Err(e @ SgfeError::Breakdown(_)) => row.error = Some(e.to_string()),
                Err(e) => return Err(e),
            }
            Ok(row)
        })?;
        Ok(ScalingStudy {
            config: cfg.clone(),
            a_star,
            analytical_scaling: analytical,
            analytical_ratio: analytical.map(|a| a / a_star),
            rows,
        })
    }
}

/// Cartesian grid of small instances for the dense bound checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyGrid {
    pub levels: Vec<u32>,
    pub terms: Vec<usize>,
    pub degrees: Vec<usize>,
    pub sigmas: Vec<f64>,
    pub mode: LaplacianMode,
    pub safety: f64,
}

impl Default for VerifyGrid {
    fn default() -> Self {
        Self {
            levels: vec![1, 2],
            terms: vec![1, 2],
            degrees: vec![1, 2],
            sigmas: vec![0.0, 0.1],
            mode: LaplacianMode::ExactUnweighted,
            safety: DEFAULT_SAFETY,
        }
    }
}

impl VerifyGrid {
    pub fn points(&self, base: &ProblemParams) -> Vec<VerifyParams> {
        let mut out = Vec::new();
        for &level in &self.levels {
            for &terms in &self.terms {
                for &degree in &self.degrees {
                    for &sigma in &self.sigmas {
                        out.push(VerifyParams {
                            problem: ProblemParams {
                                level,
                                terms,
                                degree,
                                sigma,
                                ..*base
                            },
                            mode: self.mode,
                            safety: self.safety,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum GridOutcome {
    Passed {
        report: Box<BoundReport>,
    },
    Failed {
        report: Box<BoundReport>,
    },
    Skipped {
        params: VerifyParams,
        reason: String,
    },
}

impl GridOutcome {
    pub fn is_failure(&self) -> bool {
        matches!(self, GridOutcome::Failed { .. })
    }
}

/// Runs the dense checks at every grid point; infeasible points are skipped with the reason.
pub fn verify_grid(
    grid: &VerifyGrid,
    base: &ProblemParams,
    workers: usize,
) -> Result<Vec<GridOutcome>> {
    let cfg = ExperimentConfig {
        workers: workers.max(1),
        ..Default::default()
    };
    cfg.map_points(&grid.points(base), |p| match verify_instance(p) {
        Ok(rep) if rep.all_passed => Ok(GridOutcome::Passed {
            report: Box::new(rep),
        }),
        Ok(rep) => Ok(GridOutcome::Failed {
            report: Box::new(rep),
        }),
        Err(e @ (SgfeError::PositivityViolated { .. } | SgfeError::SizeGuard { .. })) => {
            Ok(GridOutcome::Skipped {
                params: *p,
                reason: e.to_string(),
            })
        }
        Err(e) => Err(e),
    })
}

/// Writes the FE and stochastic factors in MatrixMarket format; returns the file paths.
pub fn export_matrices(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let problem = SgProblem::build(cfg.problem_params())?;
    fs::create_dir_all(dir)?;
    let fem = &problem.fem;
    let mut files: Vec<(String, &crate::sparse::SparseMatrix)> = vec![
        ("A_mean.mtx".into(), &fem.a_mean),
        ("B.mtx".into(), &fem.b),
        ("M_p.mtx".into(), &fem.mass_p),
    ];
    for (m, a) in fem.a_fluct.iter().enumerate() {
        files.push((format!("A_fluct_{}.mtx", m + 1), a));
    }
    for (m, g) in problem.g.iter().enumerate() {
        files.push((format!("G_{}.mtx", m + 1), g));
    }
    let diag = crate::sparse::SparseMatrix::from_diagonal(&fem.diag_p);
    files.push(("D_p.mtx".into(), &diag));
    let mut written = Vec::new();
    for (name, mat) in files {
        let path = dir.join(name);
        let mut buf = Vec::new();
        mat.write_matrix_market(&mut buf)?;
        write_atomic(&path, &buf)?;
        written.push(path);
    }
    let rhs_path = dir.join("rhs.txt");
    let text: String = problem.rhs.iter().map(|v| format!("{v:.17e}\n")).collect();
    write_atomic(&rhs_path, text.as_bytes())?;
    written.push(rhs_path);
    let cfg_path = dir.join("config.json");
    write_atomic(&cfg_path, &serde_json::to_vec_pretty(cfg)?)?;
    written.push(cfg_path);
    Ok(written)
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// CSV with a leading `# config: {...}` comment line, then a header row.
pub fn csv_bytes<T: Serialize>(config: &impl Serialize, rows: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    writeln!(out, "# config: {}", serde_json::to_string(config)?)?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    Ok(out)
}

#[derive(Serialize)]
struct ResidualRow {
    iteration: usize,
    relative_residual: f64,
    preconditioned: Option<f64>,
}

/// `solve-report.json` and `residuals.csv` in the output directory.
pub fn write_solve_outputs(outcome: &SolveOutcome) -> Result<Vec<PathBuf>> {
    let dir = &outcome.config.output_dir;
    let report = dir.join("solve-report.json");
    write_atomic(&report, &serde_json::to_vec_pretty(outcome)?)?;
    let rows: Vec<ResidualRow> = outcome
        .report
        .residual_history
        .iter()
        .enumerate()
        .map(|(i, &r)| ResidualRow {
            iteration: i,
            relative_residual: r,
            preconditioned: outcome.report.preconditioned_history.get(i).copied(),
        })
        .collect();
    let csv = dir.join("residuals.csv");
    write_atomic(&csv, &csv_bytes(&outcome.config, &rows)?)?;
    Ok(vec![report, csv])
}

#[derive(Serialize)]
struct SweepCsvRow<'a> {
    axis: String,
    value: f64,
    solver: String,
    iterations: Option<usize>,
    converged: bool,
    final_residual: Option<f64>,
    scaling: Option<f64>,
    lambda_max_g: f64,
    modes: usize,
    total_dofs: usize,
    error: Option<&'a str>,
}

/// `sweep-<axis>.csv`; wall times stay in the JSON point files so the CSV is reproducible.
pub fn write_sweep_csv(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    rows: &[SweepRow],
) -> Result<PathBuf> {
    let flat: Vec<SweepCsvRow> = rows
        .iter()
        .map(|r| SweepCsvRow {
            axis: r.axis.to_string(),
            value: r.value,
            solver: r.solver.to_string(),
            iterations: r.iterations,
            converged: r.converged,
            final_residual: r.final_residual,
            scaling: r.scaling,
            lambda_max_g: r.lambda_max_g,
            modes: r.modes,
            total_dofs: r.total_dofs,
            error: r.error.as_deref(),
        })
        .collect();
    let path = cfg.output_dir.join(format!("sweep-{axis}.csv"));
    write_atomic(&path, &csv_bytes(cfg, &flat)?)?;
    Ok(path)
}

pub fn write_scaling_outputs(study: &ScalingStudy) -> Result<Vec<PathBuf>> {
    let dir = &study.config.output_dir;
    let csv = dir.join("scaling-study.csv");
    write_atomic(&csv, &csv_bytes(&study.config, &study.rows)?)?;
    let json = dir.join("scaling-study.json");
    write_atomic(&json, &serde_json::to_vec_pretty(study)?)?;
    Ok(vec![csv, json])
}

/// One JSON and one Markdown file per grid point, plus `verify-summary.json`.
pub fn write_verify_outputs(
    dir: &Path,
    grid: &VerifyGrid,
    outcomes: &[GridOutcome],
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (i, o) in outcomes.iter().enumerate() {
        let p = match o {
            GridOutcome::Passed { report } | GridOutcome::Failed { report } => {
                report.params.problem
            }
            GridOutcome::Skipped { params, .. } => params.problem,
        };
        let stem = format!(
            "bounds-{i:02}-l{}-M{}-k{}-s{}",
            p.level, p.terms, p.degree, p.sigma
        );
        let json = dir.join(format!("{stem}.json"));
        write_atomic(&json, &serde_json::to_vec_pretty(o)?)?;
        written.push(json);
        if let GridOutcome::Passed { report } | GridOutcome::Failed { report } = o {
            let mut md = Vec::new();
            report.write_markdown(&mut md)?;
            let path = dir.join(format!("{stem}.md"));
            write_atomic(&path, &md)?;
            written.push(path);
        }
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        grid: &'a VerifyGrid,
        passed: usize,
        failed: usize,
        skipped: usize,
    }
    let count = |f: fn(&GridOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count();
    let summary = Summary {
        grid,
        passed: count(|o| matches!(o, GridOutcome::Passed { .. })),
        failed: count(|o| matches!(o, GridOutcome::Failed { .. })),
        skipped: count(|o| matches!(o, GridOutcome::Skipped { .. })),
    };
    let path = dir.join("verify-summary.json");
    write_atomic(&path, &serde_json::to_vec_pretty(&summary)?)?;
    written.push(path);
    Ok(written)
}
