//! `sgfe`: driven-cavity solves, parameter sweeps, the scaling study, dense
//! bound verification and matrix export.
//!
//! Exit codes: 0 success, 1 failed verification or I/O, 2 convergence
//! failure, 3 positivity or size infeasibility, 4 bad configuration.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sgfe::experiment::{
    export_matrices, run_solve, scaling_study, sweep, verify_grid, write_scaling_outputs,
    write_solve_outputs, write_sweep_csv, write_verify_outputs, ExperimentConfig, GridOutcome,
    SolverKind, SweepAxis, VerifyGrid, DEFAULT_RATIOS,
};
use sgfe::{LaplacianMode, SgfeError};

#[derive(Parser)]
#[command(
    name = "sgfe",
    version,
    about = "Stochastic Galerkin Stokes solver with uncertain viscosity"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble and solve one configuration.
    Solve(CommonArgs),
    /// Iteration counts of all three solvers along one parameter axis.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// One of h (mesh level), M, k, sigma.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated axis values; a default range is used when omitted.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// BPCG iteration counts over a grid of scalings a / a*.
    ScalingStudy {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_delimiter = ',')]
        ratios: Vec<f64>,
    },
    /// Dense eigenvalue containment checks over a grid of small instances.
    VerifyBounds {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [1u32, 2])]
        grid_levels: Vec<u32>,
        #[arg(long = "grid-M", value_delimiter = ',', default_values_t = [1usize, 2])]
        grid_terms: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2])]
        grid_k: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.1])]
        grid_sigma: Vec<f64>,
        /// Laplacian mode of the checks (the solve default is multigrid).
        #[arg(long, default_value = "exact-unweighted")]
        check_laplacian: LaplacianMode,
    },
    /// Write the FE and stochastic factor matrices in MatrixMarket format.
    ExportMatrices(CommonArgs),
}

/// Overrides applied on top of `--config` (or the defaults).
#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    level: Option<u32>,
    #[arg(long = "M")]
    terms: Option<usize>,
    #[arg(long = "k")]
    degree: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    nu0: Option<f64>,
    #[arg(long)]
    b1: Option<f64>,
    #[arg(long)]
    b2: Option<f64>,
    /// minres | bpcg-ana | bpcg-num | bpcg-ratio:R
    #[arg(long)]
    solver: Option<SolverKind>,
    /// exact-unweighted | exact-mean | multigrid
    #[arg(long)]
    laplacian: Option<LaplacianMode>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Mesh level of the numerical scaling estimate.
    #[arg(long)]
    scaling_level: Option<u32>,
    /// Safety factor of the numerical scaling.
    #[arg(long)]
    safety: Option<f64>,
}

impl CommonArgs {
    fn resolve(&self) -> Result<ExperimentConfig, SgfeError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path).map_err(|e| {
                SgfeError::InvalidParameter(format!("cannot read config {}: {e}", path.display()))
            })?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident <- $arg:ident),*) => {
                $(if let Some(v) = self.$arg.clone() { cfg.$field = v; })*
            };
        }
        set!(level <- level, terms <- terms, degree <- degree, sigma <- sigma, nu0 <- nu0, b1 <- b1, b2 <- b2,
             solver <- solver, laplacian_mode <- laplacian, tolerance <- tol, max_iters <- max_iters,
             output_dir <- out, seed <- seed, workers <- workers, scaling_level <- scaling_level,
             safety <- safety);
        cfg.validate()?;
        Ok(cfg)
    }
}

enum Failure {
    Error(SgfeError),
    NotConverged(String),
    Verification(String),
}

impl From<SgfeError> for Failure {
    fn from(e: SgfeError) -> Self {
        Failure::Error(e)
    }
}

fn exit_code(e: &SgfeError) -> u8 {
    match e {
        SgfeError::InvalidParameter(_)
        | SgfeError::DimensionMismatch { .. }
        | SgfeError::Json(_) => 4,
        SgfeError::PositivityViolated { .. } | SgfeError::SizeGuard { .. } => 3,
        SgfeError::IndefiniteInnerProduct { .. } | SgfeError::Breakdown(_) => 2,
        _ => 1,
    }
}

fn default_values(axis: SweepAxis) -> Vec<f64> {
    match axis {
        SweepAxis::Level => vec![3.0, 4.0, 5.0],
        SweepAxis::Terms => (2..=10).map(f64::from).collect(),
        SweepAxis::Degree => vec![1.0, 2.0, 3.0, 4.0],
        SweepAxis::Sigma => vec![0.05, 0.1, 0.15],
    }
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn cmd_solve(args: &CommonArgs) -> Result<(), Failure> {
    let cfg = args.resolve()?;
    let (_, outcome) = run_solve(&cfg)?;
    let written = write_solve_outputs(&outcome)?;
    let rep = &outcome.report;
    println!(
        "{}: {} iterations, converged {}, relative residual {:.3e}, {:.2}s",
        cfg.solver, rep.iterations, rep.converged, rep.final_relative_residual, rep.wall_time_s
    );
    if let Some(s) = &outcome.scaling {
        println!("scaling a = {:.6}", s.value);
    }
    let c = &outcome.center;
    println!(
        "center velocity mean ({:.6e}, {:.6e}) variance ({:.6e}, {:.6e})",
        c.mean[0], c.mean[1], c.variance[0], c.variance[1]
    );
    print_written(&written);
    if rep.converged {
        Ok(())
    } else {
        Err(Failure::NotConverged(format!(
            "no convergence within {} iterations",
            rep.iterations
        )))
    }
}

fn cmd_sweep(args: &CommonArgs, axis: SweepAxis, values: &[f64]) -> Result<(), Failure> {
    let cfg = args.resolve()?;
    let values = if values.is_empty() {
        default_values(axis)
    } else {
        values.to_vec()
    };
    let rows = sweep(&cfg, axis, &values)?;
    for r in &rows {
        let its = r
            .iterations
            .map_or_else(|| "-".to_string(), |i| i.to_string());
        println!(
            "{}={} {}: {}{}",
            axis,
            r.value,
            r.solver,
            its,
            r.error
                .as_deref()
                .map(|e| format!(" ({e})"))
                .unwrap_or_default()
        );
    }
    print_written(&[write_sweep_csv(&cfg, axis, &rows)?]);
    // an unavailable analytical scaling is reported in the table, not as a failure
    let stalled: Vec<String> = rows
        .iter()
        .filter(|r| r.error.is_none() && !r.converged)
        .map(|r| format!("{} at {}={}", r.solver, axis, r.value))
        .collect();
    if stalled.is_empty() {
        Ok(())
    } else {
        Err(Failure::NotConverged(format!(
            "no convergence for {}",
            stalled.join(", ")
        )))
    }
}

fn cmd_scaling_study(args: &CommonArgs, ratios: &[f64]) -> Result<(), Failure> {
    let mut cfg = args.resolve()?;
    if args.solver.is_none() {
        cfg.solver = SolverKind::BpcgNumerical;
    }
    if cfg.solver == SolverKind::Minres {
        return Err(
            SgfeError::InvalidParameter("the scaling study needs a BPCG solver".into()).into(),
        );
    }
    let ratios = if ratios.is_empty() {
        DEFAULT_RATIOS.to_vec()
    } else {
        ratios.to_vec()
    };
    let study = scaling_study(&cfg, &ratios)?;
    println!("a* = {:.6}", study.a_star);
    for r in &study.rows {
        let its = r
            .iterations
            .map_or_else(|| "-".to_string(), |i| i.to_string());
        let mark = if r.analytical { " (analytical)" } else { "" };
        println!("a/a* = {:.4}: {its}{mark}", r.ratio);
    }
    if let Some((ratio, its)) = study.argmin() {
        println!("minimum {its} iterations at a/a* = {ratio}");
    }
    print_written(&write_scaling_outputs(&study)?);
    if study.rows.iter().all(|r| r.converged) {
        Ok(())
    } else {
        Err(Failure::NotConverged("some ratios did not converge".into()))
    }
}

fn cmd_verify(args: &CommonArgs, grid: VerifyGrid) -> Result<(), Failure> {
    let cfg = args.resolve()?;
    let outcomes = verify_grid(&grid, &cfg.problem_params(), cfg.workers)?;
    for o in &outcomes {
        match o {
            GridOutcome::Passed { report } | GridOutcome::Failed { report } => {
                let p = report.params.problem;
                let status = if o.is_failure() { "FAIL" } else { "pass" };
                println!(
                    "{status} level {} M {} k {} sigma {}",
                    p.level, p.terms, p.degree, p.sigma
                );
            }
            GridOutcome::Skipped { params, reason } => {
                let p = params.problem;
                println!(
                    "skip level {} M {} k {} sigma {}: {reason}",
                    p.level, p.terms, p.degree, p.sigma
                );
            }
        }
    }
    print_written(&write_verify_outputs(&cfg.output_dir, &grid, &outcomes)?);
    let failed = outcomes.iter().filter(|o| o.is_failure()).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Verification(format!(
            "{failed} grid points violate their bounds"
        )))
    }
}

fn cmd_export(args: &CommonArgs) -> Result<(), Failure> {
    let cfg = args.resolve()?;
    let dir: &Path = &cfg.output_dir;
    print_written(&export_matrices(&cfg, dir)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(4)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Sweep {
            common,
            axis,
            values,
        } => cmd_sweep(common, *axis, values),
        Command::ScalingStudy { common, ratios } => cmd_scaling_study(common, ratios),
        Command::VerifyBounds {
            common,
            grid_levels,
            grid_terms,
            grid_k,
            grid_sigma,
            check_laplacian,
        } => {
            let safety = common.safety.unwrap_or(sgfe::precond::DEFAULT_SAFETY);
            let grid = VerifyGrid {
                levels: grid_levels.clone(),
                terms: grid_terms.clone(),
                degrees: grid_k.clone(),
                sigmas: grid_sigma.clone(),
                mode: *check_laplacian,
                safety,
            };
            cmd_verify(common, grid)
        }
        Command::ExportMatrices(args) => cmd_export(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::NotConverged(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Verification(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
