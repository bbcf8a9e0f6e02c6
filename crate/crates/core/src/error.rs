use thiserror::Error;

/// Errors raised by the library layers (model, objective, search).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum IfError {
    #[error("invalid cycle: {0}")]
    InvalidCycle(String),

    #[error("invalid parameters: {0}")]
    InvalidParameter(String),

    #[error("invalid harmonic series: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The frequency pair sits on (or within the degeneracy tolerance of) a
    /// lattice node where the constraint rows lose rank.
    #[error("degenerate frequency pair (|1 - cos*cos| = {gap:e}); use the lattice-node solve")]
    Degenerate { gap: f64 },

    #[error("Gram matrix is ill-conditioned (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("grid has {points} points, above the limit of {limit}")]
    GridTooLarge { points: usize, limit: usize },

    /// Every start of a multi-start search stopped without meeting the step
    /// tolerance. Carries the best point seen.
    #[error("no start converged; best effort at u = ({u1}, {u2}) with P = {objective}")]
    NotConverged { u1: f64, u2: f64, objective: f64 },
}

pub type Result<T> = std::result::Result<T, IfError>;
