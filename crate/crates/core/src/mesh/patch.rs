use super::SurfaceMesh;
use crate::error::{Error, Result};

/// k-ring neighborhood of a vertex.
///
/// `members[0]` is the center; the rest follow ring by ring, each ring in
/// ascending vertex order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VertexPatch {
    pub center: usize,
    pub members: Vec<usize>,
    pub ring_depth: usize,
}

/// Smallest k-ring (k ≥ 1) around `vertex` with at least `min_size` members.
pub fn build_patch(mesh: &SurfaceMesh, vertex: usize, min_size: usize) -> Result<VertexPatch> {
    let mut patch = build_patch_with_depth(mesh, vertex, 1);
    while patch.members.len() < min_size {
        let grown = build_patch_with_depth(mesh, vertex, patch.ring_depth + 1);
        if grown.members.len() == patch.members.len() {
            return Err(Error::PatchTooSmall {
                vertex,
                available: patch.members.len(),
                required: min_size,
            });
        }
        patch = grown;
    }
    Ok(patch)
}

/// The full `depth`-ring around `vertex`.
pub fn build_patch_with_depth(mesh: &SurfaceMesh, vertex: usize, depth: usize) -> VertexPatch {
    assert!(vertex < mesh.vertex_count(), "vertex {vertex} out of range");
    let mut seen = vec![false; mesh.vertex_count()];
    seen[vertex] = true;
    let mut members = vec![vertex];
    let mut frontier = vec![vertex];
    for _ in 0..depth {
        let mut ring: Vec<usize> = Vec::new();
        for &v in &frontier {
            for &w in mesh.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    ring.push(w);
                }
            }
        }
        if ring.is_empty() {
            break;
        }
        ring.sort_unstable();
        members.extend_from_slice(&ring);
        frontier = ring;
    }
    VertexPatch {
        center: vertex,
        members,
        ring_depth: depth,
    }
}
