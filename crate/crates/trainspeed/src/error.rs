use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON on line {line}: {source}")]
    MalformedLine {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid benchmark: {0}")]
    InvalidBenchmark(String),
    #[error("record {arch_id}: {message}")]
    InvalidRecord { arch_id: String, message: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("validation losses unavailable")]
    ValidationLossesUnavailable,
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("training failed for arch {arch_id} seed {seed}: {message}")]
    Training {
        arch_id: String,
        seed: u64,
        message: String,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Exit code for the CLI: 1 for validation problems, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite(_) | Error::Training { .. } => 2,
            _ => 1,
        }
    }
}
