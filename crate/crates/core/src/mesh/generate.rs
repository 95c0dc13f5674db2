use std::collections::HashMap;

use super::{norm, Point3, SurfaceMesh};

/// Uniform triangulation of `[0,1]²` at `z = 0` with `n × n` vertices.
///
/// Vertex `(ix, iy)` has index `iy * n + ix`. Every cell is split along the
/// diagonal from its lower-left to its upper-right corner.
pub fn generate_square_mesh(n: usize) -> SurfaceMesh {
    assert!(n >= 2, "square mesh needs at least 2 vertices per side");
    let h = 1.0 / (n - 1) as f64;
    let mut vertices = Vec::with_capacity(n * n);
    for iy in 0..n {
        for ix in 0..n {
            vertices.push([ix as f64 * h, iy as f64 * h, 0.0]);
        }
    }
    // Pin the far edges to exactly 1.0.
    for iy in 0..n {
        vertices[iy * n + n - 1][0] = 1.0;
        vertices[(n - 1) * n + iy][1] = 1.0;
    }
    let mut triangles = Vec::with_capacity(2 * (n - 1) * (n - 1));
    for iy in 0..n - 1 {
        for ix in 0..n - 1 {
            let a = iy * n + ix;
            let b = a + 1;
            let c = a + n + 1;
            let d = a + n;
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    SurfaceMesh::new(vertices, triangles).expect("square mesh is valid")
}

fn icosahedron() -> (Vec<Point3>, Vec<[usize; 3]>) {
    // Vertex 0 at the north pole, 11 at the south pole, two staggered rings between.
    let z = 1.0 / 5f64.sqrt();
    let rho = 2.0 / 5f64.sqrt();
    let mut v = vec![[0.0, 0.0, 1.0]];
    for k in 0..5 {
        let phi = 2.0 * std::f64::consts::PI * k as f64 / 5.0;
        v.push([rho * phi.cos(), rho * phi.sin(), z]);
    }
    for k in 0..5 {
        let phi = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / 5.0;
        v.push([rho * phi.cos(), rho * phi.sin(), -z]);
    }
    v.push([0.0, 0.0, -1.0]);

    let mut f = Vec::with_capacity(20);
    for k in 0..5 {
        let u0 = 1 + k;
        let u1 = 1 + (k + 1) % 5;
        let l0 = 6 + k;
        let l1 = 6 + (k + 1) % 5;
        f.push([0, u0, u1]);
        f.push([u0, l0, u1]);
        f.push([u1, l0, l1]);
        f.push([11, l1, l0]);
    }
    (v, f)
}

fn project(p: Point3) -> Point3 {
    let r = norm(p);
    [p[0] / r, p[1] / r, p[2] / r]
}

/// Recursively subdivided icosahedron on the unit sphere.
///
/// Has `10·4^k + 2` vertices and `20·4^k` faces; both poles are vertices.
pub fn generate_icosphere(subdivisions: usize) -> SurfaceMesh {
    assert!(subdivisions <= 7, "icosphere subdivision level above 7 is refused");
    let (mut vertices, mut faces) = icosahedron();
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point3>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let (p, q) = (vertices[a], vertices[b]);
                vertices.push(project([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                vertices.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        faces = next;
    }
    SurfaceMesh::new(vertices, faces).expect("icosphere is valid")
}

/// Class-I geodesic sphere: each icosahedron face split into `frequency²`
/// triangles on a barycentric lattice, then projected to the unit sphere.
///
/// Has `10·frequency² + 2` vertices, so sizes between the icosphere levels
/// are reachable.
pub fn generate_geodesic_sphere(frequency: usize) -> SurfaceMesh {
    assert!((1..=256).contains(&frequency), "frequency must lie in 1..=256");
    let (base_v, base_f) = icosahedron();
    let nu = frequency;
    let mut vertices: Vec<Point3> = Vec::new();
    // Lattice points are keyed by their nonzero barycentric weights over base vertices.
    let mut index: HashMap<Vec<(usize, usize)>, usize> = HashMap::new();
    let mut faces = Vec::with_capacity(20 * nu * nu);

    for &[a, b, c] in &base_f {
        let mut id = |i: usize, j: usize| -> usize {
            let k = nu - i - j;
            let mut key: Vec<(usize, usize)> = [(a, k), (b, i), (c, j)]
                .into_iter()
                .filter(|&(_, w)| w > 0)
                .collect();
            key.sort_unstable();
            *index.entry(key).or_insert_with(|| {
                let w = [k as f64, i as f64, j as f64];
                let p = [0, 1, 2].map(|d| w[0] * base_v[a][d] + w[1] * base_v[b][d] + w[2] * base_v[c][d]);
                vertices.push(project(p));
                vertices.len() - 1
            })
        };
        for j in 0..nu {
            for i in 0..nu - j {
                let p = id(i, j);
                let q = id(i + 1, j);
                let r = id(i, j + 1);
                faces.push([p, q, r]);
                if i + j + 1 < nu {
                    let s = id(i + 1, j + 1);
                    faces.push([q, s, r]);
                }
            }
        }
    }
    SurfaceMesh::new(vertices, faces).expect("geodesic sphere is valid")
}
