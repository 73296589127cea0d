//! Structured triangulations of D = [-0.5, 0.5]^2 with Taylor-Hood P2/P1 node maps.
//!
//! The square is split into `n = 2^level` cells per side and every cell into two
//! triangles. Inside each quadrant all diagonals share one direction, chosen so
//! the diagonals of the four corner cells pass through the domain corners. This
//! keeps every triangle attached to an interior vertex and makes consecutive
//! levels nested under red refinement.

use crate::error::{Result, SgfeError};

/// Largest supported refinement level (caps memory; level 9 has ~2.6e5 P2 nodes).
pub const MAX_LEVEL: u32 = 9;

/// Lower-left corner of the domain.
pub const DOMAIN_MIN: f64 = -0.5;

#[derive(Debug, Clone)]
pub struct Mesh {
    level: u32,
    n: usize,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    /// Six P2 node ids per triangle: vertices 0,1,2 then edge midpoints (1,2), (2,0), (0,1).
    p2_triangles: Vec<[usize; 6]>,
    p2_coords: Vec<[f64; 2]>,
    p2_boundary: Vec<bool>,
}

impl Mesh {
    pub fn level(&self) -> u32 {
        self.level
    }

    /// Cells per side.
    pub fn cells_per_side(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn p2_triangles(&self) -> &[[usize; 6]] {
        &self.p2_triangles
    }

    pub fn p2_coords(&self) -> &[[f64; 2]] {
        &self.p2_coords
    }

    pub fn p2_boundary(&self) -> &[bool] {
        &self.p2_boundary
    }

    /// Number of pressure (P1) nodes, (n+1)^2.
    pub fn num_p1(&self) -> usize {
        self.vertices.len()
    }

    /// Number of scalar P2 nodes, (2n+1)^2.
    pub fn num_p2(&self) -> usize {
        self.p2_coords.len()
    }

    /// Interior scalar P2 nodes in increasing global order.
    pub fn p2_interior(&self) -> Vec<usize> {
        (0..self.num_p2())
            .filter(|&i| !self.p2_boundary[i])
            .collect()
    }

    pub fn p2_boundary_nodes(&self) -> Vec<usize> {
        (0..self.num_p2())
            .filter(|&i| self.p2_boundary[i])
            .collect()
    }

    /// Twice the signed area of triangle `t`.
    pub fn signed_area2(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
    }

    /// Diagonal direction of cell (i, j): true for lower-left to upper-right.
    fn rising_diagonal(n: usize, i: usize, j: usize) -> bool {
        let left = 2 * i + 1 < n;
        let below = 2 * j + 1 < n;
        left == below
    }

    /// Locates a point: returns the triangle index and its barycentric coordinates.
    pub fn locate(&self, p: [f64; 2]) -> (usize, [f64; 3]) {
        let n = self.n;
        let h = self.h();
        let fx = ((p[0] - DOMAIN_MIN) / h).floor();
        let fy = ((p[1] - DOMAIN_MIN) / h).floor();
        let i = (fx.max(0.0) as usize).min(n - 1);
        let j = (fy.max(0.0) as usize).min(n - 1);
        let cell = j * n + i;
        for t in [2 * cell, 2 * cell + 1] {
            let bary = self.barycentric(t, p);
            if bary.iter().all(|&l| l >= -1e-12) {
                return (t, bary);
            }
        }
        // Only reachable for points outside the domain.
        let t = 2 * cell;
        (t, self.barycentric(t, p))
    }

    pub fn barycentric(&self, t: usize, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((b[0] - p[0]) * (c[1] - p[1]) - (c[0] - p[0]) * (b[1] - p[1])) / det;
        let l2 = ((c[0] - p[0]) * (a[1] - p[1]) - (a[0] - p[0]) * (c[1] - p[1])) / det;
        [l1, l2, 1.0 - l1 - l2]
    }
}

/// Builds the structured mesh with `2^level` cells per side.
pub fn build_structured_mesh(level: u32) -> Result<Mesh> {
    if level == 0 || level > MAX_LEVEL {
        return Err(SgfeError::InvalidParameter(format!(
            "mesh level must be in 1..={MAX_LEVEL}, got {level}"
        )));
    }
    let n = 1usize << level;
    let h = 1.0 / n as f64;
    let np1 = n + 1;
    let m = 2 * n + 1;

    let vertices: Vec<[f64; 2]> = (0..np1)
        .flat_map(|j| (0..np1).map(move |i| [DOMAIN_MIN + i as f64 * h, DOMAIN_MIN + j as f64 * h]))
        .collect();
    let p2_coords: Vec<[f64; 2]> = (0..m)
        .flat_map(|j| {
            (0..m).map(move |i| {
                [
                    DOMAIN_MIN + i as f64 * 0.5 * h,
                    DOMAIN_MIN + j as f64 * 0.5 * h,
                ]
            })
        })
        .collect();
    let p2_boundary: Vec<bool> = (0..m)
        .flat_map(|j| (0..m).map(move |i| i == 0 || j == 0 || i == m - 1 || j == m - 1))
        .collect();

    let vid = |i: usize, j: usize| j * np1 + i;
    // lattice coordinates on the P2 grid
    let lid = |i: usize, j: usize| j * m + i;

    let mut triangles = Vec::with_capacity(2 * n * n);
    let mut p2_triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            // corners in P1 lattice
            let (v00, v10, v01, v11) = ((i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1));
            let tris = if Mesh::rising_diagonal(n, i, j) {
                [[v00, v10, v11], [v00, v11, v01]]
            } else {
                [[v00, v10, v01], [v10, v11, v01]]
            };
            for tri in tris {
                triangles.push(tri.map(|(a, b)| vid(a, b)));
                let lat = tri.map(|(a, b)| (2 * a, 2 * b));
                let mid = |p: (usize, usize), q: (usize, usize)| ((p.0 + q.0) / 2, (p.1 + q.1) / 2);
                let nodes = [
                    lat[0],
                    lat[1],
                    lat[2],
                    mid(lat[1], lat[2]),
                    mid(lat[2], lat[0]),
                    mid(lat[0], lat[1]),
                ];
                p2_triangles.push(nodes.map(|(a, b)| lid(a, b)));
            }
        }
    }

    Ok(Mesh {
        level,
        n,
        vertices,
        triangles,
        p2_triangles,
        p2_coords,
        p2_boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn counts_level_one_and_two() {
        let m1 = build_structured_mesh(1).unwrap();
        assert_eq!(m1.triangles().len(), 8);
        assert_eq!(m1.num_p1(), 9);
        assert_eq!(m1.num_p2(), 25);
        let m2 = build_structured_mesh(2).unwrap();
        assert_eq!(m2.triangles().len(), 32);
        assert_eq!(m2.num_p1(), 25);
        assert_eq!(m2.num_p2(), 81);
    }

    #[test]
    fn level_bounds_enforced() {
        assert!(build_structured_mesh(0).is_err());
        assert!(build_structured_mesh(MAX_LEVEL + 1).is_err());
    }

    #[test]
    fn areas_positive_and_sum_to_one() {
        for level in 1..=5 {
            let m = build_structured_mesh(level).unwrap();
            let mut total = 0.0;
            for t in 0..m.triangles().len() {
                let a2 = m.signed_area2(t);
                assert!(
                    a2 > 0.0,
                    "triangle {t} at level {level} not counterclockwise"
                );
                total += 0.5 * a2;
            }
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn interior_edges_shared_by_two_triangles() {
        let m = build_structured_mesh(3).unwrap();
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for t in m.triangles() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let on_boundary = |v: usize| {
            let p = m.vertices()[v];
            p.iter().any(|&c| (c.abs() - 0.5).abs() < 1e-14)
        };
        for (&(a, b), &count) in &edges {
            let boundary_edge = on_boundary(a) && on_boundary(b) && {
                let (p, q) = (m.vertices()[a], m.vertices()[b]);
                (p[0] == q[0] && p[0].abs() == 0.5) || (p[1] == q[1] && p[1].abs() == 0.5)
            };
            assert_eq!(count, if boundary_edge { 1 } else { 2 }, "edge ({a},{b})");
        }
    }

    #[test]
    fn every_triangle_touches_an_interior_vertex() {
        let m = build_structured_mesh(2).unwrap();
        for t in m.triangles() {
            assert!(t.iter().any(|&v| {
                let p = m.vertices()[v];
                p[0].abs() < 0.5 - 1e-12 && p[1].abs() < 0.5 - 1e-12
            }));
        }
    }

    #[test]
    fn p2_midpoints_are_edge_midpoints() {
        let m = build_structured_mesh(2).unwrap();
        for (t, nodes) in m.p2_triangles().iter().enumerate() {
            let v = m.triangles()[t].map(|i| m.vertices()[i]);
            let c = nodes.map(|i| m.p2_coords()[i]);
            for k in 0..3 {
                assert_eq!(c[k], v[k]);
            }
            let mid = |a: [f64; 2], b: [f64; 2]| [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            assert_eq!(c[3], mid(v[1], v[2]));
            assert_eq!(c[4], mid(v[2], v[0]));
            assert_eq!(c[5], mid(v[0], v[1]));
        }
    }

    #[test]
    fn locate_returns_containing_triangle() {
        let m = build_structured_mesh(2).unwrap();
        for &p in &[
            [0.1, 0.2],
            [-0.37, 0.41],
            [0.49, -0.49],
            [0.0, 0.0],
            [-0.5, -0.5],
        ] {
            let (t, bary) = m.locate(p);
            assert!(bary.iter().all(|&l| l >= -1e-12), "{p:?} in {t}: {bary:?}");
            let v = m.triangles()[t].map(|i| m.vertices()[i]);
            let x = bary[0] * v[0][0] + bary[1] * v[1][0] + bary[2] * v[2][0];
            let y = bary[0] * v[0][1] + bary[1] * v[1][1] + bary[2] * v[2][1];
            assert!((x - p[0]).abs() < 1e-14 && (y - p[1]).abs() < 1e-14);
        }
    }
}
