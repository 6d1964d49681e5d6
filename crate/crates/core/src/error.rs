use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate weight vector: every log-weight is -inf")]
    DegenerateWeights,

    #[error("degenerate particle system: {0}")]
    DegenerateParticleSystem(String),

    #[error("weights are not normalized (sum = {sum})")]
    NotNormalized { sum: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("support mismatch: {0}")]
    SupportMismatch(String),

    #[error("weight bound violated at particle {index}: w = {weight:e} > C = {bound:e}")]
    WeightBound { index: usize, weight: f64, bound: f64 },

    #[error("functional `{name}` is not finite at particle {index}")]
    NonFiniteFunctional { name: String, index: usize },

    #[error("chain aborted at iteration {iteration}: {source}")]
    ChainAbort {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("missing estimates: {0}")]
    MissingEstimates(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular control-variate covariance (condition number {condition:e})")]
    Singular { condition: f64 },

    #[error("degenerate chain: series has zero variance")]
    DegenerateChain,

    #[error("enumeration too large: {0}")]
    TooLarge(String),
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Error {
        Error::ChainAbort {
            iteration,
            source: Box::new(self),
        }
    }
}
