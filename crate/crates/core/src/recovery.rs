//! Polynomial preserving gradient recovery.
//!
//! Both operators are linear maps on nodal values and are stored as
//! matrices built once: a three-point stencil per time node for the
//! temporal PPR, and sparse rows over each vertex patch for the surface
//! PPPR gradient.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{TimeSpaceField, TimeSpaceFlux};
use crate::mesh::{build_patch, build_patch_with_depth, cross, norm, sub, Point3, SurfaceMesh, VertexPatch};
use crate::sparse::SparseMatrix;
use crate::timespace::TimeGrid;

/// Minimum patch size for a six-coefficient quadratic fit.
pub const MIN_PATCH_SIZE: usize = 6;
/// Patches that are still rank deficient at this depth are an error.
pub const MAX_RING_DEPTH: usize = 3;
const FIT_RANK_TOL: f64 = 1e-10;
const PINV_TOL: f64 = 1e-12;

/// Temporal PPR: row `j` is the derivative at `t_j` of the least-squares
/// quadratic through the three nodes of its window.
#[derive(Clone, Debug)]
pub struct TemporalRecovery {
    rows: Vec<[(usize, f64); 3]>,
    inv_tau: f64,
}

impl TemporalRecovery {
    pub fn build(grid: &TimeGrid) -> Result<Self> {
        let nt = grid.intervals();
        if nt < 2 {
            return Err(Error::GridTooSmall(nt));
        }
        let rows = (0..=nt)
            .map(|j| {
                let first = j.saturating_sub(1).min(nt - 2);
                let window = [first, first + 1, first + 2];
                // Lagrange derivative weights in s = (t - t_j) / τ; with integer
                // nodes they are exact half-integers.
                let s = window.map(|k| k as f64 - j as f64);
                [0, 1, 2].map(|k| {
                    let (a, b) = ((k + 1) % 3, (k + 2) % 3);
                    let w = ((0.0 - s[b]) + (0.0 - s[a])) / ((s[k] - s[a]) * (s[k] - s[b]));
                    (window[k], w)
                })
            })
            .collect();
        Ok(Self {
            rows,
            inv_tau: 1.0 / grid.tau(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn stencil(&self, j: usize) -> [(usize, f64); 3] {
        self.rows[j].map(|(k, w)| (k, w * self.inv_tau))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.rows.len();
        self.rows
            .iter()
            .map(|row| {
                let mut r = vec![0.0; n];
                for &(k, w) in row {
                    r[k] += w * self.inv_tau;
                }
                r
            })
            .collect()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows.len());
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(k, w)| w * v[k]).sum::<f64>() * self.inv_tau)
            .collect()
    }

    /// Time derivative of every spatial node of a field.
    pub fn apply_field(&self, f: &TimeSpaceField) -> TimeSpaceField {
        assert_eq!(f.n_time(), self.rows.len());
        let mut out = TimeSpaceField::zeros(f.n_time(), f.n_space());
        for (j, row) in self.rows.iter().enumerate() {
            let dst = out.row_mut(j);
            for &(k, w) in row {
                for (d, s) in dst.iter_mut().zip(f.row(k)) {
                    *d += w * s;
                }
            }
            dst.iter_mut().for_each(|d| *d *= self.inv_tau);
        }
        out
    }
}

pub fn build_temporal_recovery(grid: &TimeGrid) -> Result<TemporalRecovery> {
    TemporalRecovery::build(grid)
}

/// Per-vertex data kept alongside the PPPR matrices.
#[derive(Clone, Debug)]
pub struct PatchInfo {
    pub ring_depth: usize,
    pub size: usize,
    /// Unit normal of the recovered tangent plane.
    pub normal: Point3,
}

/// Surface PPPR: `(B_x u, B_y u, B_z u)` is the recovered ambient gradient.
#[derive(Clone, Debug)]
pub struct SpatialRecovery {
    pub bx: SparseMatrix,
    pub by: SparseMatrix,
    pub bz: SparseMatrix,
    pub patches: Vec<PatchInfo>,
}

struct VertexStencil {
    patch: VertexPatch,
    weights: Vec<[f64; 3]>,
    normal: Point3,
}

/// Least-squares plane through the patch points: (unit normal, in-plane basis).
fn pca_frame(points: &[Point3]) -> (Point3, [Point3; 2]) {
    let m = points.len() as f64;
    let mut c = [0.0; 3];
    for p in points {
        for d in 0..3 {
            c[d] += p[d] / m;
        }
    }
    let mut cov = Matrix3::zeros();
    for p in points {
        let q = Vector3::new(p[0] - c[0], p[1] - c[1], p[2] - c[2]);
        cov += q * q.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let col = |k: usize| {
        let v = eig.eigenvectors.column(order[k]);
        [v[0], v[1], v[2]]
    };
    (col(0), [col(2), col(1)])
}

fn fit_matrix(local: &[[f64; 2]]) -> DMatrix<f64> {
    DMatrix::from_fn(local.len(), 6, |r, c| {
        let [s, t] = local[r];
        match c {
            0 => 1.0,
            1 => s,
            2 => t,
            3 => s * s,
            4 => s * t,
            _ => t * t,
        }
    })
}

/// PPPR weights for one patch, or `None` if the quadratic fit is rank deficient.
fn patch_weights(mesh: &SurfaceMesh, patch: &VertexPatch) -> Option<(Vec<[f64; 3]>, Point3)> {
    let center = mesh.vertex(patch.center);
    let rel: Vec<Point3> = patch.members.iter().map(|&k| sub(mesh.vertex(k), center)).collect();
    let (_, [e1, e2]) = pca_frame(&rel);
    let scale = rel.iter().map(|&p| norm(p)).fold(0.0, f64::max);
    let local: Vec<[f64; 2]> = rel
        .iter()
        .map(|&p| [crate::mesh::dot(p, e1) / scale, crate::mesh::dot(p, e2) / scale])
        .collect();

    let v = fit_matrix(&local);
    let svd = v.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if svd.singular_values.len() < 6 || smin <= FIT_RANK_TOL * smax {
        return None;
    }
    let pinv = svd.pseudo_inverse(0.0).ok()?;
    // Derivative functionals at the center, back in unscaled local units.
    let gs: Vec<f64> = (0..rel.len()).map(|k| pinv[(1, k)] / scale).collect();
    let gt: Vec<f64> = (0..rel.len()).map(|k| pinv[(2, k)] / scale).collect();

    // Recovered Jacobian of the local parametrization (columns ∂_s r, ∂_t r).
    let mut jac = nalgebra::Matrix3x2::zeros();
    for (k, p) in rel.iter().enumerate() {
        for d in 0..3 {
            jac[(d, 0)] += gs[k] * p[d];
            jac[(d, 1)] += gt[k] * p[d];
        }
    }
    let jsvd = jac.svd(true, true);
    let jmax = jsvd.singular_values.max();
    let jpinv = jsvd.pseudo_inverse(PINV_TOL * jmax).ok()?;
    let ds = [jac[(0, 0)], jac[(1, 0)], jac[(2, 0)]];
    let dt = [jac[(0, 1)], jac[(1, 1)], jac[(2, 1)]];
    let n = cross(ds, dt);
    let nn = norm(n);
    if nn == 0.0 {
        return None;
    }

    let weights = (0..rel.len())
        .map(|k| [0, 1, 2].map(|d| gs[k] * jpinv[(0, d)] + gt[k] * jpinv[(1, d)]))
        .collect();
    Some((weights, [n[0] / nn, n[1] / nn, n[2] / nn]))
}

fn vertex_stencil(mesh: &SurfaceMesh, vertex: usize) -> Result<VertexStencil> {
    let mut patch = build_patch(mesh, vertex, MIN_PATCH_SIZE)?;
    loop {
        if let Some((weights, normal)) = patch_weights(mesh, &patch) {
            return Ok(VertexStencil { patch, weights, normal });
        }
        if patch.ring_depth >= MAX_RING_DEPTH {
            return Err(Error::RankDeficientPatch {
                vertex,
                depth: patch.ring_depth,
            });
        }
        patch = build_patch_with_depth(mesh, vertex, patch.ring_depth + 1);
    }
}

impl SpatialRecovery {
    pub fn build(mesh: &SurfaceMesh) -> Result<Self> {
        let stencils: Vec<VertexStencil> = (0..mesh.vertex_count())
            .into_par_iter()
            .map(|v| vertex_stencil(mesh, v))
            .collect::<Result<_>>()?;

        let mut t: [Vec<(usize, usize, f64)>; 3] = Default::default();
        let mut patches = Vec::with_capacity(stencils.len());
        for (v, s) in stencils.iter().enumerate() {
            for (&k, w) in s.patch.members.iter().zip(&s.weights) {
                for d in 0..3 {
                    t[d].push((v, k, w[d]));
                }
            }
            patches.push(PatchInfo {
                ring_depth: s.patch.ring_depth,
                size: s.patch.members.len(),
                normal: s.normal,
            });
        }
        let n = mesh.vertex_count();
        let [tx, ty, tz] = t;
        Ok(Self {
            bx: SparseMatrix::from_triplets(n, n, &tx),
            by: SparseMatrix::from_triplets(n, n, &ty),
            bz: SparseMatrix::from_triplets(n, n, &tz),
            patches,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.patches.len()
    }

    pub fn matrices(&self) -> [&SparseMatrix; 3] {
        [&self.bx, &self.by, &self.bz]
    }

    pub fn normal(&self, vertex: usize) -> Point3 {
        self.patches[vertex].normal
    }

    /// Recovered gradient of a nodal field, one vector per vertex.
    pub fn gradient(&self, u: &[f64]) -> Vec<Point3> {
        let [gx, gy, gz] = self.matrices().map(|b| b.mul_vec(u));
        (0..u.len()).map(|i| [gx[i], gy[i], gz[i]]).collect()
    }

    /// Removes the normal component of a vector at `vertex`.
    pub fn tangential(&self, vertex: usize, v: Point3) -> Point3 {
        let n = self.patches[vertex].normal;
        let c = crate::mesh::dot(v, n);
        [v[0] - c * n[0], v[1] - c * n[1], v[2] - c * n[2]]
    }
}

pub fn build_spatial_recovery(mesh: &SurfaceMesh) -> Result<SpatialRecovery> {
    SpatialRecovery::build(mesh)
}

/// Recovered space-time gradient `(G_τ u, G_h u)` of a scalar field.
pub fn recovered_gradient(tr: &TemporalRecovery, sr: &SpatialRecovery, u: &TimeSpaceField) -> Result<TimeSpaceFlux> {
    u.check_shape(tr.len(), sr.vertex_count())?;
    let temporal = tr.apply_field(u);
    let spatial = sr.matrices().map(|b| {
        let mut out = TimeSpaceField::zeros(u.n_time(), u.n_space());
        out.rows_mut()
            .zip(u.rows())
            .collect::<Vec<_>>()
            .into_par_iter()
            .for_each(|(dst, src)| b.mul_vec_into(src, dst));
        out
    });
    Ok(TimeSpaceFlux { temporal, spatial })
}

/// `G_τ c + B_x d_x + B_y d_y + B_z d_z` for a flux `(c, d)`.
pub fn recovered_divergence(tr: &TemporalRecovery, sr: &SpatialRecovery, flux: &TimeSpaceFlux) -> Result<TimeSpaceField> {
    flux.check_shape(tr.len(), sr.vertex_count())?;
    let mut out = tr.apply_field(&flux.temporal);
    let mats = sr.matrices();
    out.rows_mut()
        .enumerate()
        .collect::<Vec<_>>()
        .into_par_iter()
        .for_each(|(j, dst)| {
            let mut tmp = vec![0.0; dst.len()];
            for (b, comp) in mats.iter().zip(&flux.spatial) {
                b.mul_vec_into(comp.row(j), &mut tmp);
                for (d, t) in dst.iter_mut().zip(&tmp) {
                    *d += t;
                }
            }
        });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{dot, generate_icosphere, generate_square_mesh};
    use std::f64::consts::PI;

    fn grid(nt: usize) -> TimeGrid {
        TimeGrid::new(nt).unwrap()
    }

    #[test]
    fn temporal_quadratic_exactness() {
        let g = grid(4);
        let tr = build_temporal_recovery(&g).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|t| t * t).collect();
        let d = tr.apply(&v);
        for (a, b) in d.iter().zip([0.0, 0.5, 1.0, 1.5, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(tr.apply(&[3.0; 5]).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn temporal_stencils() {
        let g = grid(8);
        let tau = g.tau();
        let tr = build_temporal_recovery(&g).unwrap();
        for j in 1..8 {
            let s = tr.stencil(j);
            let expect = [(j - 1, -0.5 / tau), (j, 0.0), (j + 1, 0.5 / tau)];
            for (a, b) in s.iter().zip(expect) {
                assert_eq!(a.0, b.0);
                assert!((a.1 - b.1).abs() < 1e-12 / tau);
            }
        }
        let first = tr.stencil(0).map(|(_, w)| w * tau);
        let last = tr.stencil(8).map(|(_, w)| w * tau);
        for (a, b) in first.iter().zip([-1.5, 2.0, -0.5]) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in last.iter().zip([0.5, -2.0, 1.5]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn temporal_grid_too_small() {
        assert!(matches!(TemporalRecovery::build(&TimeGrid::new_unchecked(1)), Err(Error::GridTooSmall(1))));
    }

    #[test]
    fn planar_linear_and_quadratic_exactness() {
        let mesh = generate_square_mesh(9);
        let sr = build_spatial_recovery(&mesh).unwrap();
        let x = mesh.coordinate(0);
        for g in sr.gradient(&x) {
            assert!((g[0] - 1.0).abs() < 1e-10 && g[1].abs() < 1e-10 && g[2].abs() < 1e-12);
        }
        let x2: Vec<f64> = x.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = mesh.vertices().iter().map(|p| p[0] * p[1]).collect();
        for (i, (g, h)) in sr.gradient(&x2).iter().zip(sr.gradient(&xy)).enumerate() {
            let p = mesh.vertex(i);
            assert!((g[0] - 2.0 * p[0]).abs() < 1e-10 && g[1].abs() < 1e-10);
            assert!((h[0] - p[1]).abs() < 1e-10 && (h[1] - p[0]).abs() < 1e-10);
        }
        assert!(sr.bz.triplets().all(|(_, _, v)| v.abs() < 1e-12));
    }

    #[test]
    fn sphere_gradient_is_tangent_to_recovered_plane() {
        let mesh = generate_icosphere(2);
        let sr = build_spatial_recovery(&mesh).unwrap();
        let u: Vec<f64> = mesh.vertices().iter().map(|p| p[0] * p[2] + p[1].sin()).collect();
        for (i, g) in sr.gradient(&u).iter().enumerate() {
            assert!(dot(*g, sr.normal(i)).abs() <= 1e-10 * norm(*g).max(1e-300));
        }
    }

    #[test]
    fn row_sparsity_is_bounded_by_patch() {
        let mesh = generate_icosphere(2);
        let sr = build_spatial_recovery(&mesh).unwrap();
        for b in sr.matrices() {
            for i in 0..mesh.vertex_count() {
                assert!(b.row(i).0.len() <= sr.patches[i].size);
            }
        }
    }

    #[test]
    fn divergence_examples() {
        let mesh = generate_square_mesh(7);
        let g = grid(4);
        let tr = build_temporal_recovery(&g).unwrap();
        let sr = build_spatial_recovery(&mesh).unwrap();
        let (nt1, ns) = (g.len(), mesh.vertex_count());

        let zero = TimeSpaceFlux::zeros(nt1, ns);
        assert_eq!(recovered_divergence(&tr, &sr, &zero).unwrap().max_abs(), 0.0);

        let mut f = TimeSpaceFlux::zeros(nt1, ns);
        f.temporal = TimeSpaceField::from_fn(nt1, ns, |j, _| g.node(j));
        let d = recovered_divergence(&tr, &sr, &f).unwrap();
        assert!(d.as_slice().iter().all(|v| (v - 1.0).abs() < 1e-12));

        let mut f = TimeSpaceFlux::zeros(nt1, ns);
        f.spatial[0] = TimeSpaceField::from_fn(nt1, ns, |_, i| mesh.vertex(i)[0]);
        f.spatial[1] = TimeSpaceField::from_fn(nt1, ns, |_, i| mesh.vertex(i)[1]);
        let d = recovered_divergence(&tr, &sr, &f).unwrap();
        for j in 0..nt1 {
            for i in (0..ns).filter(|&i| !mesh.is_boundary(i)) {
                assert!((d.get(j, i) - 2.0).abs() < 1e-9);
            }
        }

        let bad = TimeSpaceFlux::zeros(nt1 + 1, ns);
        assert!(matches!(recovered_divergence(&tr, &sr, &bad), Err(Error::ShapeMismatch { .. })));
    }
    #[test]
    fn temporal_consistency_order() {
        let err = |nt: usize| {
            let g = grid(nt);
            let tr = build_temporal_recovery(&g).unwrap();
            let v: Vec<f64> = g.nodes().iter().map(|t| (2.0 * PI * t).sin()).collect();
            tr.apply(&v)
                .iter()
                .zip(g.nodes())
                .map(|(d, t)| (d - 2.0 * PI * (2.0 * PI * t).cos()).abs())
                .fold(0.0, f64::max)
        };
        let errs: Vec<f64> = [16, 32, 64, 128].map(err).to_vec();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.9, "{errs:?}");
        }
    }

    /// Max nodal error of the recovered gradient of `z` on the unit sphere
    /// against `(-xz, -yz, 1 - z²)`.
    pub(crate) fn sphere_gradient_error(level: usize) -> (f64, f64) {
        let mesh = generate_icosphere(level);
        let sr = build_spatial_recovery(&mesh).unwrap();
        let z = mesh.coordinate(2);
        let g = sr.gradient(&z);
        let err = mesh
            .vertices()
            .iter()
            .zip(&g)
            .map(|(p, gi)| {
                let exact = [-p[0] * p[2], -p[1] * p[2], 1.0 - p[2] * p[2]];
                (0..3).map(|d| (gi[d] - exact[d]).powi(2)).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max);
        (mesh.mesh_size(), err)
    }

    #[test]
    fn sphere_gradient_order() {
        let levels: Vec<(f64, f64)> = (2..=4).map(sphere_gradient_error).collect();
        for w in levels.windows(2) {
            let order = (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln();
            assert!(order >= 1.5, "{levels:?}");
        }
    }

    #[test]
    fn divergence_is_linear() {
        let mesh = generate_icosphere(2);
        let g = grid(4);
        let tr = build_temporal_recovery(&g).unwrap();
        let sr = build_spatial_recovery(&mesh).unwrap();
        let ns = mesh.vertex_count();
        let field = |seed: f64| {
            let mut f = TimeSpaceFlux::zeros(5, ns);
            for (c, comp) in f.components_mut().into_iter().enumerate() {
                *comp = TimeSpaceField::from_fn(5, ns, |j, i| ((j * ns + i) as f64 * seed + c as f64).sin());
            }
            f
        };
        let (f, h) = (field(0.37), field(1.13));
        let mut combo = f.clone();
        combo.components_mut().into_iter().for_each(|c| c.scale(2.5));
        combo.axpy(-0.75, &h);
        let lhs = recovered_divergence(&tr, &sr, &combo).unwrap();
        let mut rhs = recovered_divergence(&tr, &sr, &f).unwrap();
        rhs.scale(2.5);
        rhs.axpy(-0.75, &recovered_divergence(&tr, &sr, &h).unwrap());
        let mut d = lhs.clone();
        d.axpy(-1.0, &rhs);
        assert!(d.max_abs() <= 1e-12 * lhs.max_abs());
    }
}
