//! Hybrid high-order (HHO) discretization of the Dirichlet Laplace
//! eigenvalue problem on polygons, with guaranteed lower eigenvalue
//! bounds (GLB), a residual a posteriori error estimator driving
//! adaptive newest-vertex bisection, and a calculator for the
//! polynomial stability constants that parametrize the method.

pub mod adapt;
pub mod assembly;
pub mod basis;
pub mod domains;
pub mod estimator;
pub mod hho;
pub mod legendre;
pub mod mesh;
pub mod quad;
pub mod stabconst;

/// Library-wide error type.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("mesh error: {0}")]
    Mesh(String),
    #[error("unsupported quadrature degree {0} (supported: 0..=30)")]
    QuadDegree(usize),
    #[error("degenerate or ill-conditioned local problem: {0}")]
    Degenerate(String),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("eigensolver failure: {0}")]
    Eigen(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
