//! Anisotropic adaptive finite elements for variational problems on the
//! unit square.
//!
//! The toolkit minimizes functionals of the form `I[u] = ∫ F(x, u, ∇u)`
//! with linear elements and adapts the mesh with a metric tensor built
//! from the residual, the inter-element flux jumps and a hierarchical
//! basis error estimate solved on the space of quadratic edge bubbles.
//! Meshes are driven toward uniformity in the metric by local remeshing
//! (split, collapse, flip, smooth).

// index loops over small fixed-size kernels read better than iterator chains
#![allow(clippy::needless_range_loop)]

pub mod adapt;
pub mod driver;
pub mod estimator;
pub mod fem;
pub mod functional;
pub mod io;
pub mod la;
pub mod mesh;
pub mod metric;
pub mod quadrature;

use thiserror::Error as ThisError;


#[derive(Debug, ThisError)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("degenerate element {0}")]
    DegenerateElement(usize),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("zero diagonal entry at row {0}")]
    ZeroDiagonal(usize),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("no convergence after {iterations} iterations (last residual {last:e})")]
    NoConvergence {
        iterations: usize,
        last: f64,
        residuals: Vec<f64>,
    },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
