use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: self-loop on node {node} rejected")]
    SelfLoop { line: usize, node: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("statistic undefined: {0}")]
    UndefinedStatistic(&'static str),

    #[error("randomized response with p = 1/2 cannot be debiased (epsilon = 0)")]
    DegenerateChannel,

    #[error("raw moments are supported up to order 8, got {0}")]
    UnsupportedOrder(u32),

    #[error(
        "population too small for shuffle amplification: n = {n} must exceed 16 ln(2/delta) = {required:.3}"
    )]
    InfeasiblePopulation { n: u64, required: f64 },

    #[error("local budget epsilon0 = {epsilon0} exceeds the amplification cap {cap}")]
    AboveCap { epsilon0: f64, cap: f64 },

    #[error("no local budget epsilon0 > 0 achieves central epsilon = {epsilon}")]
    InfeasibleBudget { epsilon: f64 },

    #[error("sign accuracy is undefined when the true value is 0")]
    UndefinedSign,

    #[error("lookup table line {line}: {message}")]
    LookupTable { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether the error comes from privacy accounting (cap, population or budget).
    pub fn is_infeasible_budget(&self) -> bool {
        matches!(
            self,
            Error::InfeasiblePopulation { .. } | Error::AboveCap { .. } | Error::InfeasibleBudget { .. }
        )
    }
}
