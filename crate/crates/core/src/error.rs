use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("discount factor must lie in [0, 1), got {0}")]
    InvalidGamma(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not (sub)stochastic: {0}")]
    NotStochastic(String),

    #[error("linear system is numerically singular")]
    Singular,

    #[error("expected a {expected} matrix, got {actual}")]
    WrongVariant {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("successor-feature vector has zero norm")]
    ZeroFeatures,

    #[error("episode suffix is incomplete; the Monte-Carlo return needs the whole episode")]
    IncompleteEpisode,

    #[error("unknown environment `{0}`")]
    UnknownEnvironment(String),

    #[error("unknown agent `{0}`")]
    UnknownAgent(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("unknown verification suite `{0}`")]
    UnknownSuite(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}
