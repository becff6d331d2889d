use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors carry the name of the module that raised them so command-line
/// failures stay a single machine-parseable line.
#[derive(Debug, Error)]
pub enum Error {
    #[error("corpus: line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("corpus: {doc_id}: {rule}")]
    Validation { doc_id: String, rule: String },
    #[error("corpus: {0}")]
    Corpus(String),
    #[error("config: {0}")]
    Config(String),
    #[error("context: {0}")]
    Context(String),
    #[error("seq2seq: {0}")]
    Seq2Seq(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("planner: {0}")]
    Planner(String),
    #[error("pipeline: {0}")]
    Pipeline(String),
    #[error("trainer: loss diverged at step {step} (loss = {loss})")]
    Divergence { step: usize, loss: f64 },
    #[error("trainer: {0}")]
    Trainer(String),
    #[error("metrics: {0}")]
    Metrics(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 2 usage, 3 validation, 4 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 2,
            Error::Validation { .. } | Error::Parse { .. } => 3,
            _ => 4,
        }
    }
}
