use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("pilot schedule not identifiable: C = {c} < N * Mt = {required}")]
    Identifiability { c: usize, required: usize },

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("degenerate hypothesis: {0}")]
    Degenerate(String),

    #[error("exact binary solve refused: N = {n} exceeds cap {cap}")]
    SolveCap { n: usize, cap: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::Identifiability { .. } => "identifiability",
            Error::Schedule(_) => "schedule",
            Error::Singular(_) => "singular",
            Error::Degenerate(_) => "degenerate",
            Error::SolveCap { .. } => "solve_cap",
            Error::Numerical(_) => "numerical",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// True when the failure stems from user input rather than the numerics.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Json(_))
    }
}
