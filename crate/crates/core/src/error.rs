use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension {dim} exceeds the configured cap {cap}")]
    CapExceeded { dim: u128, cap: u128 },

    #[error("bad argument: {0}")]
    BadArgument(String),

    #[error("collapse weight {weight:e} at site {site} is too small to renormalize")]
    ZeroWeight { site: usize, weight: f64 },

    #[error("bad partition: {0}")]
    BadPartition(String),

    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    #[error("no snapshot recorded at t = {0}")]
    MissingSnapshot(f64),

    #[error("bad initial data for {theory}: {reason}")]
    BadInit { theory: String, reason: String },

    #[error("region contains no matter")]
    EmptyRegionMass,

    #[error("no flashes in the readout window")]
    NoFlashes,

    #[error("outcome map is undefined on reachable history {0}")]
    PartialZeta(String),

    #[error("outcome has zero probability")]
    ZeroProbabilityOutcome,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("no bin reached {needed} members (largest has {largest})")]
    InsufficientBinMass { largest: usize, needed: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("run {index}: {source}")]
    InRun {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn bad(msg: impl Into<String>) -> Self {
        Error::BadArgument(msg.into())
    }

    pub(crate) fn in_run(index: usize, source: Error) -> Self {
        Error::InRun { index, source: Box::new(source) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
