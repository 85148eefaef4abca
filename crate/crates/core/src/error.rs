use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: malformed {table} row: {reason}")]
    MalformedRow {
        table: &'static str,
        line: usize,
        reason: String,
    },

    #[error("missing table `{0}` in case file")]
    MissingTable(&'static str),

    #[error("duplicate bus id {0}")]
    DuplicateBus(i64),

    #[error("branch {branch} references unknown bus {bus}")]
    UnknownBus { branch: usize, bus: i64 },

    #[error("branch {branch} ({from}-{to}) is in service with non-positive reactance {x}")]
    NonPositiveReactance {
        branch: usize,
        from: i64,
        to: i64,
        x: f64,
    },

    #[error("branch {branch} connects bus {bus} to itself")]
    SelfLoop { branch: usize, bus: i64 },

    #[error("unsupported bus type {kind} for bus {bus}")]
    UnsupportedBusType { bus: i64, kind: i64 },

    #[error("case has no slack bus")]
    NoSlack,

    #[error("more than one slack bus in the island containing bus {0}")]
    MultipleSlack(i64),

    #[error("case has no buses")]
    EmptyCase,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("column space is full rank (r_B = {0}); no complement to decompose against")]
    EmptyComplement(usize),

    #[error("singular value decomposition did not converge")]
    SvdFailed,

    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
