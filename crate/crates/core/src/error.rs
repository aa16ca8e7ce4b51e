use thiserror::Error;

/// Errors surfaced by model validation, problem assembly, solvers, and the
/// experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("chain is not ergodic: {0}")]
    NonErgodic(String),

    #[error("feature matrix is rank deficient (singular value ratio {0:.3e})")]
    RankDeficient(f64),

    #[error("feature Gram matrix PhiT*D*Phi is numerically singular")]
    SingularGram,

    #[error("Bellman matrix B = PhiT*D*(I - gamma*P)*Phi is numerically singular")]
    SingularB,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("mean connectivity graph is not connected (lambda_2 = {0:.3e})")]
    NotConnected(f64),

    #[error("argument out of range: {0}")]
    DomainError(String),

    #[error("iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("stacked KKT system is numerically singular")]
    SingularSystem,

    #[error("unknown preset '{0}' (expected chain4, gridworld, single-agent, or toy2x2)")]
    UnknownPreset(String),

    #[error("invalid experiment config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
