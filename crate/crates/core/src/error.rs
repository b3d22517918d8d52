use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("linear solve failed for excitation {excitation}: {reason}")]
    Solve { excitation: usize, reason: String },
    #[error("factorization failed: {reason} (condition estimate {condition:e})")]
    Factorization { reason: String, condition: f64 },
    #[error("iteration diverged at step {iteration}")]
    Divergence { iteration: usize },
}
