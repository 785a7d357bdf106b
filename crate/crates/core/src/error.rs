use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state matrix is not Hurwitz (spectral abscissa {abscissa:.3e})")]
    NotHurwitz { abscissa: f64 },

    #[error("system is not mean-square stable: {0}")]
    NotMeanSquareStable(String),

    #[error("reduced system is not mean-square stable: {0}")]
    ReducedUnstable(String),

    #[error("singular operator: {0}")]
    Singular(String),

    #[error("problem size {size} exceeds the configured cap {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("gramian {which} is numerically rank deficient (min/max eigenvalue ratio {ratio:.3e})")]
    RankDeficient { which: &'static str, ratio: f64 },

    #[error("projection breakdown: W^T V is singular")]
    ProjectionBreakdown,

    #[error("degenerate interpolation shifts: {0}")]
    DegenerateShift(String),

    #[error("integration diverged at t = {t:.6e} (state norm {norm:.3e})")]
    Divergence { t: f64, norm: f64 },

    #[error("inconsistent result: {0}")]
    Inconsistent(String),

    #[error("invalid time grid: {0}")]
    Grid(String),

    #[error("system is not balanced: {0}")]
    BalanceRequired(String),

    #[error("gamma {gamma} is not feasible: {reason}")]
    InfeasibleGamma { gamma: f64, reason: String },

    #[error("decay fit failed: {0}")]
    FitQuality(String),

    #[error("iterative solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether this error originates from configuration or input data rather
    /// than from the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::Dimension(_)
                | Error::Parse(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::Grid(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
