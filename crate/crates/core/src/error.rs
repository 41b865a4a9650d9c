use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Pooled conversion rate is 0 or 1, so the chi-square statistic is undefined.
    #[error("degenerate 2x2 table: {0}")]
    DegenerateTable(String),

    /// A study arm has zero conversions, so its log relative risk is undefined.
    #[error("log relative risk undefined for `{label}`: an arm has zero conversions")]
    UndefinedLog { label: String },

    #[error("meta-analysis needs at least one study")]
    NoStudies,

    /// Two studies share the same control arm and are not independent.
    #[error("`{first}` and `{second}` share a control arm; studies are not independent")]
    SharedControl { first: String, second: String },

    /// Header row does not match either supported CSV schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// A data row failed validation.
    #[error("line {line}: {message}")]
    Validation { line: u64, message: String },

    /// An error raised while analysing a labelled experiment.
    #[error("{label}: {source}")]
    Experiment {
        label: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn in_experiment(self, label: &str) -> Self {
        Error::Experiment { label: label.to_string(), source: Box::new(self) }
    }

    /// Innermost error, with experiment labels peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::Experiment { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
