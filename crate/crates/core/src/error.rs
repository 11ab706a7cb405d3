use thiserror::Error;

pub type Result<T, E = MfceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MfceError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Every weight of a CE update was zero; the caller has to enlarge the sample.
    #[error("degenerate CE update: all weights are zero")]
    DegenerateUpdate,

    #[error(
        "domination violated: proposal density vanishes where the input law does not (x = {x:?})"
    )]
    DominationViolation { x: Vec<f64> },

    #[error("sample budget exhausted at m = {m} (cap {m_max}); target quantile missed by {gap}")]
    BudgetExhausted { m: usize, m_max: usize, gap: f64 },

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("rank-deficient snapshot set: requested dimension {requested}, numerical rank {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("incompatible comparison: {0}")]
    IncompatibleComparison(String),

    #[error("malformed POD file: {0}")]
    PodFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl MfceError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        MfceError::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
