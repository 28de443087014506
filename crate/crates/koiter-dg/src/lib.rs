//! Mixed discontinuous Galerkin finite elements for the Koiter shell bending
//! problem.
//!
//! The displacement unknowns are the covariant tangential components `u_α`
//! (discontinuous P2, enriched to P3*/P3 on elements touching the free
//! boundary) and the normal deflection `w` (discontinuous P3). The scaled
//! membrane stress `M^{αβ}` is an independent unknown in continuous P1.
//! Inter-element continuity and essential boundary conditions are enforced
//! weakly through consistency terms and penalties.
//!
//! The crate ships the surface-geometry kernels, mesh handling, local bases
//! and quadrature, the DG assembly of the saddle-point system, a sparse
//! quasi-definite LDL^T solver with spectral diagnostics, manufactured
//! solutions, and the study drivers behind the `koiter-dg` CLI.

pub mod analysis;
pub mod assemble;
pub mod basis;
pub mod chart;
pub mod experiments;
pub mod geometry;
pub mod mesh;
pub mod quadrature;
pub mod solver;
pub mod sparse;
pub mod strain;
pub mod svg;
pub mod tensor;

pub use chart::Chart;
pub use geometry::{ElasticModuli, GeometryEval};
pub use mesh::{Marker, Mesh};

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate chart: |a_1 x a_2| = {0:e} at ({1}, {2})")]
    DegenerateChart(f64, f64, f64),
    #[error("finite-difference derivative estimates failed to converge: {0}")]
    InsufficientSmoothness(String),
    #[error("nonconforming mesh: {0}")]
    NonconformingMesh(String),
    #[error("boundary edge ({0}, {1}) has no marker")]
    UnmarkedBoundary(usize, usize),
    #[error("duplicate triangle {0}")]
    DuplicateTriangle(usize),
    #[error("unsupported quadrature degree {0} (max {1})")]
    UnsupportedDegree(usize, usize),
    #[error("singular moment matrix in basis/interpolation construction: {0}")]
    SingularMomentMatrix(String),
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("coercivity self-check failed: {0}")]
    CoercivityWarning(String),
    #[error("eigenvalue iteration did not converge after {0} steps")]
    NoConvergence(usize),
    #[error("manufactured-solution differentiation tolerance exceeded: {0}")]
    DifferentiationToleranceExceeded(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
