//! Dynamic optimal transport on triangulated surfaces.
//!
//! The solver follows the Benamou–Brenier fluid formulation: the squared
//! Wasserstein distance is the minimal kinetic energy of a density/momentum
//! path satisfying the continuity equation. The dual saddle-point problem is
//! solved with an ADMM iteration in which every temporal and surface gradient
//! is replaced by a polynomial-preserving recovered gradient, so primal and
//! dual variables live on the vertices of a single mesh.
//!
//! Module map:
//!
//! * [`mesh`]: triangle meshes, OFF/OBJ IO, generators and vertex patches.
//! * [`fem`]: linear surface finite elements (mass, stiffness, norms).
//! * [`recovery`]: temporal PPR and surface PPPR differentiation matrices.
//! * [`timespace`]: the Neumann time-space Poisson problem, spectral fast
//!   solver and a Kronecker direct solver used as an oracle.
//! * [`admm`]: the gradient enhanced ALG2 iteration.
//! * [`app`]: configuration, densities, reports and trajectory output.

pub mod admm;
pub mod app;
pub mod error;
pub mod fem;
pub mod field;
pub mod mesh;
pub mod recovery;
pub mod sparse;
pub mod timespace;

pub use error::{Error, Result};
pub use field::{TimeSpaceField, TimeSpaceFlux};
pub use mesh::SurfaceMesh;
pub use sparse::SparseMatrix;
pub use timespace::TimeGrid;
