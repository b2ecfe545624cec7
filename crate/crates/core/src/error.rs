use thiserror::Error;

/// Errors raised by the extreme-value, max-stable and averaging routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("GEV fit failed: {0}")]
    FitFailure(String),

    #[error("degenerate coordinate extent for {0}")]
    DegenerateExtent(&'static str),

    #[error("invalid trend surface: {0}")]
    InvalidSurface(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("year {year}, sites ({site_a}, {site_b}): {source}")]
    PairTerm {
        year: usize,
        site_a: usize,
        site_b: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("differentiation failed at coordinate {coordinate}: non-finite evaluation")]
    Differentiation { coordinate: usize },

    #[error("singular information matrix (condition number {condition:.3e})")]
    SingularInformation { condition: f64 },

    #[error("optimizer initialization failed: objective non-finite at all {attempts} starting points")]
    Initialization { attempts: usize },

    #[error("all term sets failed: {0:?}")]
    AllFitsFailed(Vec<String>),

    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("no information: all log-likelihoods are -inf")]
    NoInformation,

    #[error("unstable bootstrap: {effective} of {requested} replicates usable (first failure: {first_failure})")]
    UnstableBootstrap {
        effective: usize,
        requested: usize,
        first_failure: String,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of numerical work (fits, likelihood evaluation,
    /// simulation), as opposed to bad inputs or configuration.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::FitFailure(_)
                | Error::NumericFailure(_)
                | Error::PairTerm { .. }
                | Error::Differentiation { .. }
                | Error::SingularInformation { .. }
                | Error::Initialization { .. }
                | Error::AllFitsFailed(_)
                | Error::Simulation(_)
                | Error::DegenerateVariance(_)
                | Error::NoInformation
                | Error::UnstableBootstrap { .. }
                | Error::DegenerateSample(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
