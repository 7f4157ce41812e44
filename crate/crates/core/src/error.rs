use thiserror::Error;

use crate::forwarding::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("infeasible discretization: {0}")]
    InfeasibleDiscretization(String),

    #[error("forwarding schedule infeasible at {} (step, distance) pairs", .violations.len())]
    Infeasible { violations: Vec<Violation> },

    #[error("least-squares fit failed: {reason} (residual sum of squares {residual_ss:.6e})")]
    FitFailure {
        reason: String,
        best: Vec<f64>,
        residual_ss: f64,
    },

    #[error("no attacker observed the message")]
    NoData,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
