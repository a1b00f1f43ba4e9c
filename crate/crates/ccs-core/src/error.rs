use thiserror::Error;

#[derive(Debug, Error)]
pub enum CcsError {
    #[error("index {index} out of range for population of size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("design support too large to enumerate ({0} outcomes)")]
    SupportTooLarge(u128),
    #[error("population too large for the generic variance path ({0} terms)")]
    PopulationTooLarge(u128),
    #[error("operation requires fixed-size designs in both dimensions")]
    NotFixedSize,
    #[error("operation requires simple random sampling designs")]
    NotSimpleRandom,
    #[error("zero inclusion probability for unit {0}")]
    ZeroInclusionProbability(usize),
    #[error("zero joint inclusion probability for sampled pair ({0}, {1})")]
    ZeroJointProbability(usize, usize),
    #[error("estimated denominator total is zero (degenerate sample)")]
    ZeroDenominator,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("design parse error at position {pos}: {msg}")]
    DesignParse { pos: usize, msg: String },
    #[error("calibration target {target} unreachable on bracket [{lo}, {hi}]")]
    CalibrationBracket { target: f64, lo: f64, hi: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("population file format: {0}")]
    PopFormat(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CcsError>;
