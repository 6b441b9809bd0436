use thiserror::Error;

use crate::polarization::Basis;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown polarization label `{0}`")]
    UnknownLabel(String),

    #[error("basis mismatch: expected {expected:?}, found {found:?}")]
    BasisMismatch { expected: Basis, found: Basis },

    #[error("parameter `{name}` = {value} is out of range: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("map is not completely positive (minimum Choi eigenvalue {min_eigenvalue:e})")]
    NotCompletelyPositive { min_eigenvalue: f64 },

    #[error(
        "leading Kraus operator is not a singlet-like filter \
         (in-span weight {in_span_weight:.3}, singlet overlap {singlet_overlap:.3}, \
         dominance ratio {dominance:.3})"
    )]
    NotSingletLike {
        in_span_weight: f64,
        singlet_overlap: f64,
        dominance: f64,
    },

    #[error("state is not normalized (trace {trace})")]
    NotNormalized { trace: f64 },

    #[error("degenerate process: {0}")]
    Degenerate(String),

    #[error("underdetermined data: {0}")]
    Underdetermined(String),

    #[error("singular design matrix: {0}")]
    Singular(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input (files, flags, parameters).
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::UnknownLabel(_)
                | Error::BasisMismatch { .. }
                | Error::InvalidParameter { .. }
                | Error::NotNormalized { .. }
                | Error::Underdetermined(_)
                | Error::Format(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}
