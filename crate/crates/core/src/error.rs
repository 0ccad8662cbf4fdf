use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants are grouped by [`ErrorKind`], which the command-line front end
/// maps onto process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape error: expected dimension {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("no tokens for sense {sense} of {lemma}")]
    MissingSense { lemma: String, sense: String },
    #[error("degenerate geometry for {0}: all pairwise distances are zero")]
    DegenerateGeometry(String),
    #[error("degenerate training set: {0}")]
    DegenerateTraining(String),
    #[error("stratification error: class {class} has {count} examples, need at least {folds}")]
    Stratification {
        class: String,
        count: usize,
        folds: usize,
    },
    #[error("degenerate class {0}: no true labels in confusion row")]
    DegenerateClass(String),
    #[error("degenerate trial: {0}")]
    DegenerateTrial(String),
    #[error("no data: {0}")]
    NoData(String),
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("singular design: {0}")]
    SingularDesign(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("size error: {0}")]
    Size(String),
    #[error("config error: {0}")]
    Config(String),
    /// A failure annotated with where it happened, e.g. stage and lemma.
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl ErrorKind {
    /// Process exit status for the command-line front end.
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
        }
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Context { source, .. } => source.kind(),
            Error::Config(_) | Error::Parameter(_) => ErrorKind::Config,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Integrity(_)
            | Error::Format(_)
            | Error::Data(_)
            | Error::Shape { .. }
            | Error::MissingSense { .. }
            | Error::Stratification { .. }
            | Error::DegenerateTrial(_)
            | Error::NoData(_)
            | Error::Alignment(_)
            | Error::Size(_) => ErrorKind::Data,
            Error::Domain(_)
            | Error::DegenerateGeometry(_)
            | Error::DegenerateTraining(_)
            | Error::DegenerateClass(_)
            | Error::UndefinedCorrelation(_)
            | Error::SingularDesign(_) => ErrorKind::Numerical,
        }
    }
}
