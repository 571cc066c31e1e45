use thiserror::Error;

/// Errors raised by the exact engine, the simulator and the verification harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A computation would exceed a configured resource cap.
    #[error("{backend} backend limited to {limit}, requested {requested}")]
    ResourceCap {
        backend: &'static str,
        limit: u64,
        requested: u64,
    },

    /// The d_j recursion produced a non-integer value. This is a bug, never an input problem.
    #[error("d_{j} recursion did not reduce to an integer")]
    NonInteger { j: usize },

    /// A lattice point requested by a local estimate lies outside {0, ..., n-1}.
    #[error("lattice point k = {k} outside support 0..{n}")]
    OutOfSupport { n: u64, k: i128 },

    /// An iterative solver failed to reach its tolerance.
    #[error("solver did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
