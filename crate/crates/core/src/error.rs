use thiserror::Error;

pub type Result<T, E = MarketError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("infeasible market: {resource} price interval is inverted (min {min} > max {max})")]
    InfeasibleMarket {
        resource: &'static str,
        min: f64,
        max: f64,
    },

    #[error("scenario generation failed: {0}")]
    Generation(String),

    #[error("prices ({render}, {bandwidth}) lie outside the feasible price box")]
    PriceOutOfBounds { render: f64, bandwidth: f64 },

    #[error("inconsistent assignment: {0}")]
    InconsistentAssignment(String),

    #[error("contract rejected purchase of MSU {msu_id}: spend {spend} exceeds budget {budget}")]
    ContractRejected {
        msu_id: u64,
        spend: f64,
        budget: f64,
    },

    #[error("malformed ledger dump at line {line}: {reason}")]
    LedgerFormat { line: usize, reason: String },

    #[error("invalid experiment configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("scenario file parse error: {0}")]
    TomlDe(#[from] toml::de::Error),

    #[error("scenario file encode error: {0}")]
    TomlSer(#[from] toml::ser::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl MarketError {
    /// True for errors caused by an empty price box, including generation
    /// giving up after repeated infeasible draws.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            MarketError::InfeasibleMarket { .. } | MarketError::Generation(_)
        )
    }
}
