use thiserror::Error;

use crate::mdp::NetState;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid system parameters: {0}")]
    InvalidParams(String),

    #[error(
        "invalid state space: deadline {deadline}, buffer {buffer} (need deadline >= 1 and buffer <= deadline - 1)"
    )]
    InvalidStateSpace { deadline: usize, buffer: usize },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("access budget {eps_w} exceeds the low-regime limit {eps_th}")]
    NotLowRegime { eps_w: f64, eps_th: f64 },

    #[error("efficiency denominator {value} is not positive at state {state}")]
    NonPositiveDenominator { state: NetState, value: f64 },

    #[error("link statistics are not degenerate: |q_pp_active - q_pp_idle| = {0}")]
    NotDegenerate(f64),

    #[error("stationary system is singular")]
    SingularSystem,

    #[error("state space has {0} states; exhaustive enumeration is limited to 16")]
    TooManyStates(usize),

    #[error("invalid sweep grid: {0}")]
    InvalidGrid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable identifier of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "invalid_params",
            Error::InvalidStateSpace { .. } => "invalid_state_space",
            Error::InvalidPolicy(_) => "invalid_policy",
            Error::NotLowRegime { .. } => "not_low_regime",
            Error::NonPositiveDenominator { .. } => "non_positive_denominator",
            Error::NotDegenerate(_) => "not_degenerate",
            Error::SingularSystem => "singular_system",
            Error::TooManyStates(_) => "too_many_states",
            Error::InvalidGrid(_) => "invalid_grid",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
