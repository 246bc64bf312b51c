use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid resolution too coarse: n_interior = {n_interior}, need at least {min}")]
    InsufficientResolution { n_interior: usize, min: usize },

    #[error("support [{lo}, {hi}] touches the boundary of the domain; initial states must vanish near the boundary")]
    SupportTouchesBoundary { lo: f64, hi: f64 },

    #[error("state does not satisfy the boundary hypothesis: {0}")]
    BoundaryHypothesis(String),

    #[error("coefficients not normalized: sum |c_n|^2 = {norm_sq}")]
    NotNormalized { norm_sq: f64 },

    #[error("operation requires {expected} geometry, got {found}")]
    WrongGeometry { expected: &'static str, found: String },

    #[error("wave functions live on different grids")]
    GridMismatch,

    #[error("non-finite value at index {index} of {what}")]
    NonFinite { what: &'static str, index: usize },

    #[error("implicit Crank-Nicolson factor is singular at row {row}")]
    SingularImplicitFactor { row: usize },

    #[error("requested horizon {requested} exceeds the validity window {window} of the truncated half-line")]
    ValidityWindowExceeded { requested: f64, window: f64 },

    #[error("no detections recorded; conditional moments are undefined")]
    NoDetections,

    #[error("time moments unreliable: residual norm^2 {residual} left undetected and no tail fit is possible")]
    MomentsUnreliable { residual: f64 },

    #[error("energy expansion truncated: defect {defect} exceeds {limit}")]
    TruncationDefect { defect: f64, limit: f64 },

    #[error("dense operator dimension {n} exceeds the limit {max}")]
    DimensionTooLarge { n: usize, max: usize },

    #[error("eigenvalue solver failed to converge")]
    EigenSolverFailed,

    #[error("residual norm^2 {residual} at t_max is above {limit}")]
    ResidualTooLarge { residual: f64, limit: f64 },

    #[error("time window too short: {0}")]
    WindowTooShort(String),

    #[error("tail precondition violated: final-window mass fraction {fraction} exceeds {limit}")]
    TailNotDecayed { fraction: f64, limit: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Wraps an error with a short description of the stage that produced it.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub(crate) trait ResultExt<T> {
    fn context(self, context: impl Into<String>) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn context(self, context: impl Into<String>) -> Result<T> {
        self.map_err(|e| e.context(context))
    }
}
