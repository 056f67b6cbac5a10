use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// An input violated a documented invariant. The message names it.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("edge set is not a tree: {0}")]
    NotATree(String),

    #[error("level {level} out of range 0..={max}")]
    LevelOutOfRange { level: u32, max: u32 },

    #[error("breakpoint {value} between pipes {k} and {next} is not a power of 2", next = k + 1)]
    NotPowerOfTwo { k: usize, value: String },

    #[error("pipe schedule: {0}")]
    MalformedPipes(String),

    #[error("significance point b_{k} undefined: 2*gamma*delta_k - delta_(k+1) <= 0")]
    SignificanceUndefined { k: usize },

    #[error("alpha vector is not gamma-regular: {0}")]
    NotRegular(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("instance has {nodes} nodes, exceeds cap of {cap}")]
    CapExceeded { nodes: usize, cap: usize },

    #[error("separation oracle gave up after {invocations} invocations")]
    OracleCapExceeded { invocations: usize },

    #[error("linear program: {0}")]
    Lp(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NotATree(_) => "not_a_tree",
            Error::LevelOutOfRange { .. } => "level_out_of_range",
            Error::NotPowerOfTwo { .. } => "not_power_of_two",
            Error::MalformedPipes(_) => "malformed_pipes",
            Error::SignificanceUndefined { .. } => "significance_undefined",
            Error::NotRegular(_) => "not_regular",
            Error::Precondition(_) => "precondition",
            Error::CapExceeded { .. } => "cap_exceeded",
            Error::OracleCapExceeded { .. } => "oracle_cap_exceeded",
            Error::Lp(_) => "lp",
            Error::Numeric(_) => "numeric",
            Error::Internal(_) => "internal",
        }
    }

    /// True for errors caused by bad input rather than by computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::Validation(_)
                | Error::InvalidArgument(_)
                | Error::NotATree(_)
                | Error::LevelOutOfRange { .. }
                | Error::NotPowerOfTwo { .. }
                | Error::MalformedPipes(_)
                | Error::NotRegular(_)
                | Error::CapExceeded { .. }
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
