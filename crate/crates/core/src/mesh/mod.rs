//! Embedded triangle meshes.

mod generate;
mod io;
mod patch;

use std::collections::HashMap;

pub use generate::{generate_geodesic_sphere, generate_icosphere, generate_square_mesh};
pub use io::{load_mesh, read_mesh, write_mesh, MeshFormat};
pub(crate) use io::fmt_f64;
pub use patch::{build_patch, build_patch_with_depth, VertexPatch};

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

/// Validated, immutable triangle mesh with precomputed vertex adjacency.
#[derive(Clone, Debug)]
pub struct SurfaceMesh {
    vertices: Vec<Point3>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    neighbors: Vec<Vec<usize>>,
}

impl SurfaceMesh {
    /// Validates and indexes a mesh.
    ///
    /// Rejects out-of-range indices, triangles with area below
    /// `1e-14 * diag²` (diag = bounding-box diagonal), edges shared by more
    /// than two triangles, and interior edges traversed twice in the same
    /// direction.
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if triangles.is_empty() {
            return Err(Error::Validation("mesh has no triangles".into()));
        }
        if let Some((t, _)) = vertices
            .iter()
            .enumerate()
            .find(|(_, p)| p.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::Validation(format!("vertex {t} has a non-finite coordinate")));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&v| v >= n) {
                return Err(Error::Validation(format!(
                    "triangle {t} references vertex {bad} but the mesh has {n} vertices"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Validation(format!("triangle {t} repeats a vertex")));
            }
        }

        let diag2 = bbox_diagonal_sq(&vertices);
        for (t, tri) in triangles.iter().enumerate() {
            let area = triangle_area(&vertices, tri);
            if area <= 1e-14 * diag2 {
                return Err(Error::Validation(format!("triangle {t} is degenerate (area {area:e})")));
            }
        }

        // Directed half-edges: each may appear once; undirected edges carry at most two.
        let mut half_edges: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let e = (tri[k], tri[(k + 1) % 3]);
                if let Some(other) = half_edges.insert(e, t) {
                    let msg = if half_edges.contains_key(&(e.1, e.0)) {
                        "is non-manifold"
                    } else {
                        "has inconsistent orientation"
                    };
                    return Err(Error::Validation(format!(
                        "edge ({}, {}) shared by triangles {other} and {t} {msg}",
                        e.0, e.1
                    )));
                }
            }
        }

        let mut boundary = vec![false; n];
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(a, b) in half_edges.keys() {
            if !half_edges.contains_key(&(b, a)) {
                boundary[a] = true;
                boundary[b] = true;
            }
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
            nb.dedup();
        }

        Ok(Self {
            vertices,
            triangles,
            boundary,
            neighbors,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> Point3 {
        self.vertices[i]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_vertex_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn is_closed(&self) -> bool {
        !self.boundary.iter().any(|&b| b)
    }

    /// Sorted one-ring neighbors of vertex `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        triangle_area(&self.vertices, &self.triangles[t])
    }

    pub fn total_area(&self) -> f64 {
        // Compensated sum: fine meshes have many tiny terms.
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for t in 0..self.triangles.len() {
            let y = self.triangle_area(t) - comp;
            let next = sum + y;
            comp = (next - sum) - y;
            sum = next;
        }
        sum
    }

    /// Longest triangle edge.
    pub fn mesh_size(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|tri| (0..3).map(move |k| (tri[k], tri[(k + 1) % 3])))
            .map(|(a, b)| norm(sub(self.vertices[a], self.vertices[b])))
            .fold(0.0, f64::max)
    }

    /// True when every vertex has `z = 0`.
    pub fn is_flat_xy(&self) -> bool {
        self.vertices.iter().all(|p| p[2] == 0.0)
    }

    /// Ambient coordinate `axis` of every vertex as a nodal field.
    pub fn coordinate(&self, axis: usize) -> Vec<f64> {
        self.vertices.iter().map(|p| p[axis]).collect()
    }
}

pub(crate) fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

fn triangle_area(vertices: &[Point3], tri: &[usize; 3]) -> f64 {
    let [a, b, c] = tri.map(|i| vertices[i]);
    0.5 * norm(cross(sub(b, a), sub(c, a)))
}

fn bbox_diagonal_sq(vertices: &[Point3]) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in vertices {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let d = sub(hi, lo);
    dot(d, d)
}
