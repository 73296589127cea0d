//! Geometric multigrid V-cycle for the unit-coefficient scalar P2 Laplacian
//! on the nested structured meshes.

use crate::error::{Result, SgfeError};
use crate::fem::{assemble_scalar_stiffness_full, p2_values};
use crate::mesh::{build_structured_mesh, Mesh};
use crate::sparse::{ProfileCholesky, SparseMatrix};

/// Interior-node stiffness of the unit scalar Laplacian on a mesh.
pub fn interior_unit_stiffness(mesh: &Mesh) -> Result<SparseMatrix> {
    let full = assemble_scalar_stiffness_full(mesh, &|_, _| 1.0)?;
    let interior = mesh.p2_interior();
    Ok(full.submatrix(&interior, &interior))
}

/// Interpolation of interior P2 functions from `coarse` to `fine`.
pub fn p2_prolongation(coarse: &Mesh, fine: &Mesh) -> SparseMatrix {
    let coarse_interior = coarse.p2_interior();
    let mut coarse_index = vec![usize::MAX; coarse.num_p2()];
    for (i, &node) in coarse_interior.iter().enumerate() {
        coarse_index[node] = i;
    }
    let fine_interior = fine.p2_interior();
    let mut triplets = Vec::with_capacity(6 * fine_interior.len());
    for (row, &node) in fine_interior.iter().enumerate() {
        let p = fine.p2_coords()[node];
        let (t, bary) = coarse.locate(p);
        let vals = p2_values(bary);
        for (k, &cnode) in coarse.p2_triangles()[t].iter().enumerate() {
            let col = coarse_index[cnode];
            if col != usize::MAX && vals[k].abs() > 1e-14 {
                triplets.push((row, col, vals[k]));
            }
        }
    }
    SparseMatrix::from_triplets(fine_interior.len(), coarse_interior.len(), &triplets)
}

#[derive(Debug, Clone)]
struct Level {
    matrix: SparseMatrix,
    /// Maps the next coarser level onto this one (absent on the coarsest).
    prolongation: Option<SparseMatrix>,
}

/// V(ν1, ν2) cycle with forward Gauss-Seidel before and backward Gauss-Seidel
/// after the coarse correction, zero initial guess, direct solve on level 1.
#[derive(Debug, Clone)]
pub struct Multigrid {
    levels: Vec<Level>,
    coarse: ProfileCholesky,
    pub pre_sweeps: usize,
    pub post_sweeps: usize,
}

impl Multigrid {
    pub fn new(finest_level: u32) -> Result<Self> {
        Self::with_sweeps(finest_level, 2, 2)
    }

    pub fn with_sweeps(finest_level: u32, pre_sweeps: usize, post_sweeps: usize) -> Result<Self> {
        if finest_level == 0 {
            return Err(SgfeError::InvalidParameter(
                "multigrid needs level >= 1".into(),
            ));
        }
        let meshes = (1..=finest_level)
            .map(build_structured_mesh)
            .collect::<Result<Vec<_>>>()?;
        let mut levels = Vec::with_capacity(meshes.len());
        for (i, mesh) in meshes.iter().enumerate() {
            let prolongation = if i == 0 {
                None
            } else {
                Some(p2_prolongation(&meshes[i - 1], mesh))
            };
            levels.push(Level {
                matrix: interior_unit_stiffness(mesh)?,
                prolongation,
            });
        }
        let coarse = ProfileCholesky::factor(&levels[0].matrix)?;
        Ok(Self {
            levels,
            coarse,
            pre_sweeps,
            post_sweeps,
        })
    }

    pub fn finest_level(&self) -> u32 {
        self.levels.len() as u32
    }

    /// Unknowns on the finest level.
    pub fn size(&self) -> usize {
        self.levels.last().map_or(0, |l| l.matrix.nrows())
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.levels.last().expect("at least one level").matrix
    }

    pub fn prolongation(&self, level: u32) -> Option<&SparseMatrix> {
        self.levels
            .get(level as usize - 1)
            .and_then(|l| l.prolongation.as_ref())
    }

    /// One V-cycle applied to `rhs`, result written to `out`.
    pub fn vcycle(&self, rhs: &[f64], out: &mut [f64]) -> Result<()> {
        if rhs.len() != self.size() || out.len() != self.size() {
            return Err(SgfeError::DimensionMismatch {
                context: "multigrid hierarchy",
                expected: self.size(),
                actual: rhs.len(),
            });
        }
        self.cycle(self.levels.len() - 1, rhs, out);
        Ok(())
    }

    fn cycle(&self, li: usize, rhs: &[f64], x: &mut [f64]) {
        if li == 0 {
            x.copy_from_slice(rhs);
            self.coarse.solve_in_place(x);
            return;
        }
        let level = &self.levels[li];
        let a = &level.matrix;
        x.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..self.pre_sweeps {
            gauss_seidel(a, rhs, x, false);
        }
        let mut residual = rhs.to_vec();
        a.mul_vec_add(-1.0, x, &mut residual);
        let p = level
            .prolongation
            .as_ref()
            .expect("fine levels have a prolongation");
        let mut coarse_rhs = vec![0.0; p.ncols()];
        p.mul_vec_transpose(&residual, &mut coarse_rhs);
        let mut coarse_x = vec![0.0; p.ncols()];
        self.cycle(li - 1, &coarse_rhs, &mut coarse_x);
        p.mul_vec_add(1.0, &coarse_x, x);
        for _ in 0..self.post_sweeps {
            gauss_seidel(a, rhs, x, true);
        }
    }
}

/// One lexicographic Gauss-Seidel sweep (reversed order when `backward`).
pub fn gauss_seidel(a: &SparseMatrix, rhs: &[f64], x: &mut [f64], backward: bool) {
    let n = a.nrows();
    let mut relax = |i: usize| {
        let mut diag = 0.0;
        let mut s = rhs[i];
        for (j, v) in a.row(i) {
            if j == i {
                diag = v;
            } else {
                s -= v * x[j];
            }
        }
        x[i] = s / diag;
    };
    if backward {
        (0..n).rev().for_each(&mut relax);
    } else {
        (0..n).for_each(&mut relax);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, norm};

    #[test]
    fn galerkin_identity_between_levels() {
        for fine_level in 2..=3 {
            let coarse = build_structured_mesh(fine_level - 1).unwrap();
            let fine = build_structured_mesh(fine_level).unwrap();
            let p = p2_prolongation(&coarse, &fine);
            let af = interior_unit_stiffness(&fine).unwrap();
            let ac = interior_unit_stiffness(&coarse).unwrap();
            let diff = (p.galerkin(&af).to_dense() - ac.to_dense()).abs().max();
            assert!(diff < 1e-10, "level {fine_level}: {diff}");
        }
    }

    #[test]
    fn prolongation_injects_at_shared_nodes() {
        let coarse = build_structured_mesh(2).unwrap();
        let fine = build_structured_mesh(3).unwrap();
        let p = p2_prolongation(&coarse, &fine);
        let coarse_int = coarse.p2_interior();
        let x: Vec<f64> = coarse_int
            .iter()
            .map(|&n| coarse.p2_coords()[n][0] + 2.0 * coarse.p2_coords()[n][1])
            .collect();
        let mut y = vec![0.0; p.nrows()];
        p.mul_vec(&x, &mut y);
        let mut shared = 0;
        for (i, &node) in fine.p2_interior().iter().enumerate() {
            let q = fine.p2_coords()[node];
            if let Some(c) = coarse_int
                .iter()
                .position(|&cn| coarse.p2_coords()[cn] == q)
            {
                assert!((y[i] - x[c]).abs() < 1e-14);
                shared += 1;
            }
        }
        assert_eq!(shared, coarse_int.len());
    }

    #[test]
    fn zero_rhs_gives_zero_and_cycle_is_deterministic() {
        let mg = Multigrid::new(3).unwrap();
        let n = mg.size();
        let mut out = vec![1.0; n];
        mg.vcycle(&vec![0.0; n], &mut out).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
        let r: Vec<f64> = (0..n).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let mut o1 = vec![0.0; n];
        let mut o2 = vec![0.0; n];
        mg.vcycle(&r, &mut o1).unwrap();
        mg.vcycle(&r, &mut o2).unwrap();
        assert_eq!(o1, o2);
    }

    #[test]
    fn cycle_is_symmetric() {
        let mg = Multigrid::new(3).unwrap();
        let n = mg.size();
        let u: Vec<f64> = (0..n).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let v: Vec<f64> = (0..n).map(|i| ((i * 29) % 5) as f64 - 2.0).collect();
        let mut bu = vec![0.0; n];
        let mut bv = vec![0.0; n];
        mg.vcycle(&u, &mut bu).unwrap();
        mg.vcycle(&v, &mut bv).unwrap();
        assert!((dot(&bu, &v) - dot(&u, &bv)).abs() < 1e-10 * norm(&bu) * norm(&v));
    }

    #[test]
    fn iteration_contracts() {
        let mg = Multigrid::new(4).unwrap();
        let a = mg.matrix();
        let n = mg.size();
        // error propagation e <- (I - B A) e on a zero right-hand side
        let mut e: Vec<f64> = (0..n)
            .map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0)
            .collect();
        let energy = |e: &[f64]| {
            let mut ae = vec![0.0; n];
            a.mul_vec(e, &mut ae);
            dot(&ae, e).sqrt()
        };
        let mut prev = energy(&e);
        for _ in 0..5 {
            let mut ae = vec![0.0; n];
            a.mul_vec(&e, &mut ae);
            let mut corr = vec![0.0; n];
            mg.vcycle(&ae, &mut corr).unwrap();
            for (ei, ci) in e.iter_mut().zip(&corr) {
                *ei -= ci;
            }
            let now = energy(&e);
            assert!(now < 0.5 * prev, "contraction {}", now / prev);
            prev = now;
        }
    }

    #[test]
    fn single_level_is_direct_solve() {
        let mg = Multigrid::new(1).unwrap();
        let n = mg.size();
        let r: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let mut x = vec![0.0; n];
        mg.vcycle(&r, &mut x).unwrap();
        let mut ax = vec![0.0; n];
        mg.matrix().mul_vec(&x, &mut ax);
        for (a, b) in ax.iter().zip(&r) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn mismatched_length_rejected() {
        let mg = Multigrid::new(2).unwrap();
        let mut out = vec![0.0; 3];
        assert!(mg.vcycle(&[0.0; 3], &mut out).is_err());
    }
}
