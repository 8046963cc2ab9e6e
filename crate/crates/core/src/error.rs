//! Crate-wide error type.

use thiserror::Error;

use crate::manifold::Model;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("model mismatch: {0:?} vs {1:?}")]
    ModelMismatch(Model, Model),
    #[error("curvature mismatch: {0} vs {1}")]
    CurvatureMismatch(f64, f64),
    #[error("tangency violation: |<x,v>_L| = {0}")]
    TangencyViolation(f64),
    #[error("non-scalar loss: shape {0}x{1}")]
    NonScalarLoss(usize, usize),
    #[error("NaN produced in backward pass of `{0}`")]
    NanInBackward(&'static str),
    #[error("NaN loss at epoch {0}")]
    NanLoss(usize),
    #[error("loss diverged ({1:.3e}) at epoch {0}")]
    Diverged(usize, f64),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
