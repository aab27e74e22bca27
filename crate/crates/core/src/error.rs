use thiserror::Error;

pub type Result<T> = std::result::Result<T, GameError>;

/// Residual of the composite smooth-fit function at one outer scan point.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ScanRow {
    pub b1: f64,
    /// Smallest indifference root for this `b1`, if one was found.
    pub b2: Option<f64>,
    /// Smooth-fit residual at `(b1, b2)`.
    pub f: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid threshold pair: need 0 < b1 < b2 < 1, got b1 = {b1}, b2 = {b2}")]
    InvalidThresholds { b1: f64, b2: f64 },

    #[error("degenerate denominator in {which} (value {value:e})")]
    Degenerate { which: &'static str, value: f64 },

    #[error("invalid simulation config: {0}")]
    Config(String),

    #[error("no equilibrium found: the composite smooth-fit residual never changes sign over {} scanned b1 values", .scan.len())]
    NoEquilibriumFound { scan: Vec<ScanRow> },
}

impl GameError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        GameError::Domain(msg.into())
    }
}
