use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("angle {0} deg outside [-90, 90]")]
    AngleOutOfRange(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("weight length {got} does not match array size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("normalization factor {0:e} too small")]
    DegenerateNormalization(f64),
    #[error("path delay {tof_s:e} s exceeds the {num_taps}-tap span")]
    DelayOutOfSpan { tof_s: f64, num_taps: usize },
    #[error("singular system, use a positive regularization weight")]
    Singular,
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("all beams blocked")]
    Outage,
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
