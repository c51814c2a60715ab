use thiserror::Error;

/// Everything that can go wrong while building or evaluating a migration instance.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid migration spec: {0}")]
    InvalidSpec(String),

    #[error("expected {expected} free rates, got {got}")]
    RateCountMismatch { expected: usize, got: usize },

    #[error("rate {index} must be strictly positive and finite, got {value}")]
    NonPositiveRate { index: usize, value: f64 },

    #[error("invalid connection profile: {0}")]
    InvalidProfile(String),

    #[error("subflow {index} rate {rate} exceeds its cap {cap}")]
    RateAboveCap { index: usize, rate: f64, cap: f64 },

    #[error("{what} must be {requirement}, got {value}")]
    OutOfDomain { what: &'static str, requirement: &'static str, value: f64 },

    #[error("instance is infeasible: migration-time margin {time:.6}, downtime margin {downtime:.6}, speed-up margin {speedup:.6} (each must be <= 1)")]
    Infeasible { time: f64, downtime: f64, speedup: f64 },

    #[error("no feasible candidate: {0}")]
    NoFeasibleCandidate(String),

    #[error("event at iteration {at} must lie in 1..{max_iters}")]
    EventOutOfRange { at: usize, max_iters: usize },

    #[error("quadratic subproblem failed: {0}")]
    Subproblem(String),
}

pub type Result<T> = std::result::Result<T, Error>;
