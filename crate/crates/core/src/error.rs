use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("unknown table `{0}`")]
    UnknownTable(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("type mismatch at row {row}, column `{column}`: {message}")]
    TypeMismatch {
        row: usize,
        column: String,
        message: String,
    },

    #[error("duplicate primary key `{0}`")]
    DuplicateKey(String),

    #[error("csv header mismatch for table `{table}`: expected {expected:?}, found {found:?}")]
    HeaderMismatch {
        table: String,
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("attribute `{0}` is not reachable within the join depth")]
    UnjoinableAttribute(String),

    #[error("invalid predicate on `{attribute}`: {message}")]
    InvalidPredicate { attribute: String, message: String },

    #[error("missing slot `{0}`")]
    MissingSlot(String),

    #[error("foreign key violation: {0}")]
    ForeignKeyViolation(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("column `{0}` has no values to sample")]
    EmptyColumn(String),

    #[error("placeholder `{{{placeholder}}}` in template `{template}` is not bound")]
    UnboundPlaceholder { template: String, placeholder: String },

    #[error("no tasks defined")]
    NoTasks,

    #[error("no dialogue flows to learn from")]
    NoFlows,

    #[error("insufficient corpus: {0}")]
    InsufficientCorpus(String),

    #[error("cannot parse `{raw}` as {expected}")]
    Unparseable { raw: String, expected: String },

    #[error("no response template for action `{0}`")]
    MissingTemplate(String),

    #[error("agent not ready: {0}")]
    AgentNotReady(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<String>, err: serde_json::Error) -> Self {
        Error::Parse {
            path: path.into(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    /// True for errors caused by bad input rather than the runtime environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::AgentNotReady(_))
    }
}
