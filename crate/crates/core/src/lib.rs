//! Matrix-free stochastic Galerkin finite elements for Stokes flow with an
//! uncertain viscosity: input model, discretization, preconditioners,
//! Krylov solvers and spectral bound checks.

pub mod analysis;
pub mod chaos;
pub mod error;
pub mod experiment;
pub mod fem;
pub mod kron;
pub mod linalg;
pub mod mesh;
pub mod multigrid;
pub mod precond;
pub mod problem;
pub mod random_field;
pub mod solvers;
pub mod sparse;

pub use chaos::{build_basis, build_g, ChaosBasis};
pub use error::{Result, SgfeError};
pub use fem::{CavityLoad, FeMatrices};
pub use kron::{KronOperator, MatvecCounts, SaddleOperator};
pub use linalg::LinearOperator;
pub use mesh::{build_structured_mesh, Mesh};
pub use precond::{BlockPrecond, HOperator, LaplacianMode, LaplacianPrecond, ScalingStrategy};
pub use problem::{ProblemParams, SgProblem};
pub use random_field::{build_kle_2d, KleExpansion};
pub use solvers::{SolveConfig, SolveReport};
pub use sparse::SparseMatrix;
