//! Taylor-Hood P2/P1 assembly on the structured mesh.
//!
//! Velocity unknowns are the interior P2 nodes, blocked by component (all x
//! components first, then all y components). Boundary velocity values are
//! eliminated and carried to the right-hand side through a lifting.

use crate::error::{Result, SgfeError};
use crate::mesh::Mesh;
use crate::sparse::SparseMatrix;

/// Symmetric 7-point rule on the reference triangle, exact for degree 5.
/// Entries are (barycentric coordinates, weight relative to the triangle area).
pub const TRIANGLE_RULE_7: [([f64; 3], f64); 7] = {
    const A1: f64 = 0.059_715_871_789_769_82;
    const B1: f64 = 0.470_142_064_105_115_1;
    const W1: f64 = 0.132_394_152_788_506_2;
    const A2: f64 = 0.797_426_985_353_087_3;
    const B2: f64 = 0.101_286_507_323_456_3;
    const W2: f64 = 0.125_939_180_544_827_2;
    const C: f64 = 1.0 / 3.0;
    [
        ([C, C, C], 0.225),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

/// Local polynomial order of a Lagrange element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementOrder {
    P1,
    P2,
}

impl ElementOrder {
    pub fn num_nodes(self) -> usize {
        match self {
            ElementOrder::P1 => 3,
            ElementOrder::P2 => 6,
        }
    }
}

/// Geometry of one triangle: area and constant barycentric gradients.
#[derive(Debug, Clone, Copy)]
pub struct TriangleGeometry {
    pub coords: [[f64; 2]; 3],
    pub area: f64,
    pub grad_bary: [[f64; 2]; 3],
}

impl TriangleGeometry {
    pub fn new(coords: [[f64; 2]; 3]) -> Self {
        let [a, b, c] = coords;
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let grad_bary = [
            [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
            [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
            [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
        ];
        Self {
            coords,
            area: 0.5 * det.abs(),
            grad_bary,
        }
    }

    pub fn point(&self, bary: [f64; 3]) -> [f64; 2] {
        let [a, b, c] = self.coords;
        [
            bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0],
            bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1],
        ]
    }
}

/// P2 basis values at barycentric point `l`; ordering matches `Mesh::p2_triangles`.
pub fn p2_values(l: [f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
        4.0 * l[0] * l[1],
    ]
}

fn p2_gradients(l: [f64; 3], g: &[[f64; 2]; 3]) -> [[f64; 2]; 6] {
    let lin = |a: f64, u: [f64; 2], b: f64, v: [f64; 2]| [a * u[0] + b * v[0], a * u[1] + b * v[1]];
    [
        lin(4.0 * l[0] - 1.0, g[0], 0.0, g[0]),
        lin(4.0 * l[1] - 1.0, g[1], 0.0, g[1]),
        lin(4.0 * l[2] - 1.0, g[2], 0.0, g[2]),
        lin(4.0 * l[2], g[1], 4.0 * l[1], g[2]),
        lin(4.0 * l[0], g[2], 4.0 * l[2], g[0]),
        lin(4.0 * l[1], g[0], 4.0 * l[0], g[1]),
    ]
}

fn eval_coeff(coeff: &dyn Fn(f64, f64) -> f64, p: [f64; 2]) -> Result<f64> {
    let v = coeff(p[0], p[1]);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(SgfeError::NonFiniteCoefficient {
            value: v,
            x: p[0],
            y: p[1],
        })
    }
}

/// Element stiffness matrix ∫ c ∇φ_a · ∇φ_b (row-major, `order.num_nodes()` squared).
pub fn element_stiffness(
    geo: &TriangleGeometry,
    order: ElementOrder,
    coeff: &dyn Fn(f64, f64) -> f64,
) -> Result<Vec<f64>> {
    let nn = order.num_nodes();
    let mut k = vec![0.0; nn * nn];
    for &(l, w) in TRIANGLE_RULE_7.iter() {
        let c = eval_coeff(coeff, geo.point(l))? * w * geo.area;
        let grads: Vec<[f64; 2]> = match order {
            ElementOrder::P1 => geo.grad_bary.to_vec(),
            ElementOrder::P2 => p2_gradients(l, &geo.grad_bary).to_vec(),
        };
        for a in 0..nn {
            for b in 0..nn {
                k[a * nn + b] += c * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
            }
        }
    }
    Ok(k)
}

fn geometry(mesh: &Mesh, t: usize) -> TriangleGeometry {
    TriangleGeometry::new(mesh.triangles()[t].map(|v| mesh.vertices()[v]))
}

/// Scalar P2 stiffness over all (2n+1)^2 lattice nodes, weighted by `coeff`.
pub fn assemble_scalar_stiffness_full(
    mesh: &Mesh,
    coeff: &dyn Fn(f64, f64) -> f64,
) -> Result<SparseMatrix> {
    let mut t = Vec::with_capacity(36 * mesh.triangles().len());
    for (tri, nodes) in mesh.p2_triangles().iter().enumerate() {
        let k = element_stiffness(&geometry(mesh, tri), ElementOrder::P2, coeff)?;
        for a in 0..6 {
            for b in 0..6 {
                t.push((nodes[a], nodes[b], k[a * 6 + b]));
            }
        }
    }
    Ok(SparseMatrix::from_triplets(
        mesh.num_p2(),
        mesh.num_p2(),
        &t,
    ))
}

/// Weighted vector Laplacian on interior velocity dofs: blockdiag(K, K) with
/// K the scalar stiffness restricted to interior P2 nodes.
pub fn assemble_weighted_vector_laplacian(
    mesh: &Mesh,
    coeff: &dyn Fn(f64, f64) -> f64,
) -> Result<SparseMatrix> {
    let full = assemble_scalar_stiffness_full(mesh, coeff)?;
    let interior = mesh.p2_interior();
    Ok(full.submatrix(&interior, &interior).block_diagonal(2))
}

/// Divergence over all velocity nodes: N_p x (2 * num_p2), entries -∫ q_i ∂_c φ_j.
/// Column `c * num_p2 + j` is component `c` of P2 node `j`.
pub fn assemble_divergence_full(mesh: &Mesh) -> SparseMatrix {
    let np2 = mesh.num_p2();
    let mut t = Vec::with_capacity(36 * mesh.triangles().len());
    for (tri, nodes) in mesh.p2_triangles().iter().enumerate() {
        let geo = geometry(mesh, tri);
        let pnodes = mesh.triangles()[tri];
        let mut local = [[[0.0; 6]; 3]; 2];
        for &(l, w) in TRIANGLE_RULE_7.iter() {
            let grads = p2_gradients(l, &geo.grad_bary);
            for i in 0..3 {
                for j in 0..6 {
                    for c in 0..2 {
                        local[c][i][j] -= w * geo.area * l[i] * grads[j][c];
                    }
                }
            }
        }
        for c in 0..2 {
            for i in 0..3 {
                for j in 0..6 {
                    t.push((pnodes[i], c * np2 + nodes[j], local[c][i][j]));
                }
            }
        }
    }
    SparseMatrix::from_triplets(mesh.num_p1(), 2 * np2, &t)
}

/// Column indices (into the full velocity numbering) of the interior velocity dofs,
/// blocked by component.
pub fn interior_velocity_columns(mesh: &Mesh) -> Vec<usize> {
    let np2 = mesh.num_p2();
    let interior = mesh.p2_interior();
    (0..2)
        .flat_map(|c| interior.iter().map(move |&j| c * np2 + j))
        .collect()
}

pub fn boundary_velocity_columns(mesh: &Mesh) -> Vec<usize> {
    let np2 = mesh.num_p2();
    let bnd = mesh.p2_boundary_nodes();
    (0..2)
        .flat_map(|c| bnd.iter().map(move |&j| c * np2 + j))
        .collect()
}

/// Divergence restricted to interior velocity dofs (N_p x N_u).
pub fn assemble_divergence(mesh: &Mesh) -> SparseMatrix {
    let full = assemble_divergence_full(mesh);
    let rows: Vec<usize> = (0..mesh.num_p1()).collect();
    full.submatrix(&rows, &interior_velocity_columns(mesh))
}

/// P1 pressure mass matrix and its diagonal.
pub fn assemble_pressure_mass(mesh: &Mesh) -> (SparseMatrix, Vec<f64>) {
    let mut t = Vec::with_capacity(9 * mesh.triangles().len());
    for (tri, nodes) in mesh.triangles().iter().enumerate() {
        let geo = geometry(mesh, tri);
        for &(l, w) in TRIANGLE_RULE_7.iter() {
            for a in 0..3 {
                for b in 0..3 {
                    t.push((nodes[a], nodes[b], w * geo.area * l[a] * l[b]));
                }
            }
        }
    }
    let m = SparseMatrix::from_triplets(mesh.num_p1(), mesh.num_p1(), &t);
    let d = m.diagonal();
    (m, d)
}

/// All deterministic FE blocks of the SGFE system.
#[derive(Debug, Clone)]
pub struct FeMatrices {
    /// Interior scalar P2 node count; N_u = 2 * n_scalar.
    pub n_scalar: usize,
    /// Unit-coefficient scalar stiffness on interior nodes.
    pub scalar_unit: SparseMatrix,
    /// Mean-viscosity scalar stiffness on interior nodes.
    pub scalar_mean: SparseMatrix,
    /// Unit-coefficient vector Laplacian A.
    pub a_unit: SparseMatrix,
    /// Mean-weighted vector Laplacian A_0.
    pub a_mean: SparseMatrix,
    /// Fluctuation-weighted vector Laplacians A_m.
    pub a_fluct: Vec<SparseMatrix>,
    /// Negative divergence B (N_p x N_u).
    pub b: SparseMatrix,
    pub mass_p: SparseMatrix,
    pub diag_p: Vec<f64>,
    // Full-node operators used to move boundary data to the right-hand side.
    pub(crate) scalar_mean_full: SparseMatrix,
    pub(crate) scalar_fluct_full: Vec<SparseMatrix>,
    pub(crate) b_full: SparseMatrix,
}

impl FeMatrices {
    /// Assembles every block for the given mean and fluctuation coefficients.
    pub fn assemble(
        mesh: &Mesh,
        mean: &dyn Fn(f64, f64) -> f64,
        fluctuations: &[Box<dyn Fn(f64, f64) -> f64 + Send + Sync>],
    ) -> Result<Self> {
        let interior = mesh.p2_interior();
        let scalar_unit_full = assemble_scalar_stiffness_full(mesh, &|_, _| 1.0)?;
        let scalar_mean_full = assemble_scalar_stiffness_full(mesh, mean)?;
        let scalar_fluct_full = fluctuations
            .iter()
            .map(|f| assemble_scalar_stiffness_full(mesh, f.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let restrict = |m: &SparseMatrix| m.submatrix(&interior, &interior);
        let scalar_unit = restrict(&scalar_unit_full);
        let scalar_mean = restrict(&scalar_mean_full);
        let a_fluct = scalar_fluct_full
            .iter()
            .map(|m| restrict(m).block_diagonal(2))
            .collect();
        let b_full = assemble_divergence_full(mesh);
        let rows: Vec<usize> = (0..mesh.num_p1()).collect();
        let b = b_full.submatrix(&rows, &interior_velocity_columns(mesh));
        let (mass_p, diag_p) = assemble_pressure_mass(mesh);
        Ok(Self {
            n_scalar: interior.len(),
            a_unit: scalar_unit.block_diagonal(2),
            a_mean: scalar_mean.block_diagonal(2),
            scalar_unit,
            scalar_mean,
            a_fluct,
            b,
            mass_p,
            diag_p,
            scalar_mean_full,
            scalar_fluct_full,
            b_full,
        })
    }

    pub fn n_u(&self) -> usize {
        2 * self.n_scalar
    }

    pub fn n_p(&self) -> usize {
        self.diag_p.len()
    }
}

/// Right-hand side pieces produced by lifting the Dirichlet data.
#[derive(Debug, Clone)]
pub struct CavityLoad {
    /// Nodal boundary values over all velocity nodes (2 * num_p2, zero inside).
    pub lifting_u0: Vec<f64>,
    /// -A_0 u0 restricted to interior rows (multiplies the mean chaos mode).
    pub rhs_f: Vec<f64>,
    /// -A_m u0 restricted to interior rows, one per fluctuation term.
    pub rhs_f_fluct: Vec<Vec<f64>>,
    /// -B u0 (multiplies the mean chaos mode).
    pub rhs_t: Vec<f64>,
}

/// Regularized lid profile u = (1 - 16 x^4, 0).
pub fn regularized_lid(x: f64) -> [f64; 2] {
    [1.0 - 16.0 * x.powi(4), 0.0]
}

/// Lifts the cavity boundary data: `lid_profile` on the top edge, no-slip elsewhere.
pub fn build_cavity_rhs(
    mesh: &Mesh,
    fem: &FeMatrices,
    lid_profile: &dyn Fn(f64) -> [f64; 2],
) -> Result<CavityLoad> {
    for corner in [-0.5, 0.5] {
        let g = lid_profile(corner);
        if g[0].abs() > 1e-12 || g[1].abs() > 1e-12 {
            return Err(SgfeError::InvalidParameter(format!(
                "lid profile must vanish at the corner x1 = {corner}, got ({}, {})",
                g[0], g[1]
            )));
        }
    }
    let np2 = mesh.num_p2();
    let mut lifting = vec![0.0; 2 * np2];
    for (j, p) in mesh.p2_coords().iter().enumerate() {
        if mesh.p2_boundary()[j] && (p[1] - 0.5).abs() < 1e-14 {
            let g = lid_profile(p[0]);
            if !(g[0].is_finite() && g[1].is_finite()) {
                return Err(SgfeError::InvalidParameter(format!(
                    "non-finite lid value at x1 = {}",
                    p[0]
                )));
            }
            lifting[j] = g[0];
            lifting[np2 + j] = g[1];
        }
    }
    let interior = mesh.p2_interior();
    let vector_apply = |k: &SparseMatrix| -> Vec<f64> {
        let mut out = vec![0.0; 2 * interior.len()];
        let mut tmp = vec![0.0; np2];
        for c in 0..2 {
            k.mul_vec(&lifting[c * np2..(c + 1) * np2], &mut tmp);
            for (i, &node) in interior.iter().enumerate() {
                out[c * interior.len() + i] = -tmp[node];
            }
        }
        out
    };
    let rhs_f = vector_apply(&fem.scalar_mean_full);
    let rhs_f_fluct = fem.scalar_fluct_full.iter().map(vector_apply).collect();
    let mut rhs_t = vec![0.0; mesh.num_p1()];
    fem.b_full.mul_vec(&lifting, &mut rhs_t);
    rhs_t.iter_mut().for_each(|v| *v = -*v);
    Ok(CavityLoad {
        lifting_u0: lifting,
        rhs_f,
        rhs_f_fluct,
        rhs_t,
    })
}
