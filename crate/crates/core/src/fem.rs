//! Linear surface finite elements on flat triangles.
//!
//! All element integrals are closed-form; no quadrature is involved.

use crate::field::TimeSpaceField;
use crate::mesh::{cross, dot, norm, sub, Point3, SurfaceMesh};
use crate::sparse::SparseMatrix;

/// Consistent mass matrix `M_ij = ∫ ψ_i ψ_j`.
pub fn assemble_mass(mesh: &SurfaceMesh) -> SparseMatrix {
    let mut t = Vec::with_capacity(9 * mesh.triangle_count());
    for (k, tri) in mesh.triangles().iter().enumerate() {
        let a = mesh.triangle_area(k) / 12.0;
        for (p, &i) in tri.iter().enumerate() {
            for (q, &j) in tri.iter().enumerate() {
                t.push((i, j, if p == q { 2.0 * a } else { a }));
            }
        }
    }
    SparseMatrix::from_triplets(mesh.vertex_count(), mesh.vertex_count(), &t)
}

/// Row sums of the mass matrix (one third of the adjacent triangle areas).
pub fn lumped_mass(mesh: &SurfaceMesh) -> Vec<f64> {
    let mut m = vec![0.0; mesh.vertex_count()];
    for (k, tri) in mesh.triangles().iter().enumerate() {
        let a = mesh.triangle_area(k) / 3.0;
        for &i in tri {
            m[i] += a;
        }
    }
    m
}

/// Opposite-edge vectors `e_a` of a triangle, oriented so that
/// `∇ψ_a = n × e_a / (2A)`.
fn opposite_edges(p: [Point3; 3]) -> [Point3; 3] {
    [sub(p[2], p[1]), sub(p[0], p[2]), sub(p[1], p[0])]
}

/// Stiffness matrix `S_ij = ∫ ∇ψ_i · ∇ψ_j` with tangential P1 gradients.
pub fn assemble_stiffness(mesh: &SurfaceMesh) -> SparseMatrix {
    let mut t = Vec::with_capacity(9 * mesh.triangle_count());
    for (k, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.triangle_area(k);
        let e = opposite_edges(tri.map(|i| mesh.vertex(i)));
        for p in 0..3 {
            for q in 0..3 {
                t.push((tri[p], tri[q], dot(e[p], e[q]) / (4.0 * area)));
            }
        }
    }
    SparseMatrix::from_triplets(mesh.vertex_count(), mesh.vertex_count(), &t)
}

/// Constant tangential gradient of the P1 interpolant of `field` on one triangle.
pub fn element_gradient(mesh: &SurfaceMesh, field: &[f64], triangle: usize) -> Point3 {
    assert_eq!(field.len(), mesh.vertex_count());
    let tri = mesh.triangles()[triangle];
    let p = tri.map(|i| mesh.vertex(i));
    let e = opposite_edges(p);
    let n2 = cross(sub(p[1], p[0]), sub(p[2], p[0]));
    let twice_area = norm(n2);
    let n = [n2[0] / twice_area, n2[1] / twice_area, n2[2] / twice_area];
    let mut g = [0.0; 3];
    for a in 0..3 {
        let grad = cross(n, e[a]);
        for d in 0..3 {
            g[d] += field[tri[a]] * grad[d] / twice_area;
        }
    }
    g
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpNorm {
    L1,
    L2,
}

/// `( Σ_{j=1}^{N_t-1} τ ‖v(·,t_j)‖_p^p )^{1/p}` over interior time nodes.
///
/// The spatial L² norm uses the consistent mass matrix, the L¹ norm the
/// lumped mass.
pub fn discrete_lp_norm(fields: &TimeSpaceField, mass: &SparseMatrix, tau: f64, p: LpNorm) -> f64 {
    assert_eq!(fields.n_space(), mass.nrows());
    let n_time = fields.n_time();
    let interior = 1..n_time.saturating_sub(1);
    match p {
        LpNorm::L2 => interior
            .map(|j| {
                let v = fields.row(j);
                tau * mass.bilinear(v, v)
            })
            .sum::<f64>()
            .sqrt(),
        LpNorm::L1 => {
            let lumped = mass.row_sums();
            interior
                .map(|j| tau * fields.row(j).iter().zip(&lumped).map(|(v, m)| m * v.abs()).sum::<f64>())
                .sum()
        }
    }
}
