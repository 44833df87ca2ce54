use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error(
        "unstable system: branching ratio {ratio} >= 1, so ‖R_H‖ = ‖φ_H‖/(1 − ‖φ_H‖) has no finite value"
    )]
    Unstable { ratio: f64 },

    #[error("grid step too coarse: h*phi(0)/2 = {0} >= 1")]
    StepTooCoarse(f64),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("horizon too short: last-decade mass {tail_mass} exceeds 10% of total {total}")]
    HorizonTooShort { tail_mass: f64, total: f64 },

    #[error("time {t} outside [0, {horizon}]")]
    OutOfRange { t: f64, horizon: f64 },

    #[error("intensity bound {bound} exceeds cap {cap} at t = {t}")]
    IntensityBlowup { bound: f64, cap: f64, t: f64 },

    #[error("majorant violated at t = {t}: intensity {intensity} > bound {bound}")]
    MajorantViolated { t: f64, intensity: f64, bound: f64 },

    #[error("model is not of standard Hawkes form: {0}")]
    NotStandardForm(String),

    #[error("condition violated: {0}")]
    ConditionViolated(String),

    #[error("invalid microbe parameters: {0}")]
    InvalidParams(String),

    #[error("bad reference distribution: {0}")]
    BadReference(String),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the user's configuration rather than by numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::InvalidSpec(_)
                | Error::InvalidKernel(_)
                | Error::InvalidParams(_)
                | Error::NotStandardForm(_)
                | Error::ConditionViolated(_)
                | Error::Unstable { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
