use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("y decreases by {drop:e} between nodes {index} and {}", index + 1)]
    NotMonotone { index: usize, drop: f64 },

    #[error("xi grid [{lo}, {hi}] does not cover the required span [{need_lo}, {need_hi}]")]
    XiGridTooShort {
        lo: f64,
        hi: f64,
        need_lo: f64,
        need_hi: f64,
    },

    #[error("invalid relabeling: {0}")]
    InvalidRelabeling(String),

    #[error("point {x} lies outside the data span [{lo}, {hi}]")]
    OutsideSpan { x: f64, lo: f64, hi: f64 },

    #[error("constant C must be positive, got {0}")]
    NonPositiveConstant(f64),

    #[error("slope {u0x} lies inside the indeterminate band |u0x| <= {threshold}")]
    Indeterminate { u0x: f64, threshold: f64 },

    #[error("step rejected at t = {t}: relative energy jump {jump:e}")]
    StepRejected { t: f64, jump: f64 },

    #[error("non-finite value produced at t = {t}")]
    NonFinite { t: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad user input (configuration or data files).
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::InvalidGrid(_)
                | Error::InvalidMeasure(_)
                | Error::InvalidState(_)
                | Error::InvalidRelabeling(_)
                | Error::XiGridTooShort { .. }
                | Error::Json(_)
        )
    }

    /// True for aborts raised while integrating.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StepRejected { .. } | Error::NonFinite { .. } | Error::NotMonotone { .. }
        )
    }
}
