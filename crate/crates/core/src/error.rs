use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0} tail descriptor is not set")]
    MissingTail(&'static str),
    #[error("profile is not positive at x = {x}")]
    NotPositive { x: f64 },
    #[error("indeterminate fit: {0}")]
    Indeterminate(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("inconsistent result: {0}")]
    Inconsistent(String),
    #[error("characteristic exhausted: z^alpha = {z_alpha} < Gamma*t = {gamma_t}")]
    CharacteristicExhausted { z_alpha: f64, gamma_t: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
