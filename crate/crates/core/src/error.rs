use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path} line {line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("malformed CSV in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed input {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("document {doc_id} has an empty bag of words")]
    EmptyBag { doc_id: String },

    #[error("topic count must be at least 2, got {0}")]
    TooFewTopics(usize),

    #[error("top_n must be at least 2, got {0}")]
    TopN(usize),

    #[error("word '{0}' does not occur in any document of the reference corpus")]
    ZeroDocFrequency(String),

    #[error("empty topic-count grid")]
    EmptyGrid,

    #[error("cannot sample {requested} documents from a store of {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("another update holds the lock file {0}")]
    Locked(PathBuf),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
