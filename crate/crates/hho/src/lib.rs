//! Hybrid high-order (HHO) discretization of second-order elliptic problems
//! on polytopal meshes of the unit square.
//!
//! The library provides polygonal mesh generation and I/O, scaled monomial
//! bases with L2 projectors, the local HHO ingredients (potential and
//! gradient reconstructions, face stabilization), a statically condensed
//! solver for nonselfadjoint linear problems, a linearized fixed-point
//! solver for quasilinear problems of the form `-div(a(x,u) grad u) = f`,
//! and a convergence-study driver with CSV output.

pub mod linear;
pub mod local_ops;
pub mod mesh;
pub mod poly;
pub mod quasilinear;
pub mod study;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown mesh family '{0}' (expected triangular, cartesian, kershaw or hexagonal)")]
    UnknownFamily(String),
    #[error("mesh parse error at line {line}: {message}")]
    MeshParse { line: usize, message: String },
    #[error("non-manifold mesh: face {face} referenced by more than two cells")]
    NonManifold { face: usize },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("cell {cell} is not star-shaped with respect to its centroid")]
    NotStarShaped { cell: usize },
    #[error("degenerate basis on {entity}: mass matrix is not positive definite")]
    DegenerateBasis { entity: String },
    #[error("singular local system on cell {cell}")]
    SingularLocalSystem { cell: usize },
    #[error("nonpositive stabilization weight {weight} on face {face}")]
    NonpositiveWeight { face: usize, weight: f64 },
    #[error("coefficient value {value} at ({x}, {y}) violates the bounds [{lower}, {upper}]")]
    CoefficientOutOfBounds {
        value: f64,
        x: f64,
        y: f64,
        lower: f64,
        upper: f64,
    },
    #[error("sparse solve failed: {0}")]
    SolveFailed(String),
    #[error("reference gradient has zero norm")]
    ZeroReferenceNorm,
    #[error("invalid study configuration: {0}")]
    InvalidConfig(String),
    #[error("study run {context}: {source}")]
    Study {
        context: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Scalar coefficient or load `f(x, y)`.
pub type ScalarFn = dyn Fn(f64, f64) -> f64 + Send + Sync;
/// Vector field `b(x, y)`.
pub type VectorFn = dyn Fn(f64, f64) -> [f64; 2] + Send + Sync;
/// Solution-dependent scalar coefficient `a(x, y, t)` where `t` stands for
/// the (reconstructed) solution value.
pub type StateFn = dyn Fn(f64, f64, f64) -> f64 + Send + Sync;
