use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown class {0}")]
    UnknownClass(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("non-finite value in layer {layer}")]
    NonFinite { layer: usize },

    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("degenerate prediction")]
    DegeneratePrediction,

    #[error("misaligned predictions: {0}")]
    Misaligned(String),

    #[error("missing predictions for proposals {0:?}")]
    MissingPredictions(Vec<usize>),

    #[error("mismatched bin schemes")]
    MismatchedSchemes,

    #[error("invalid head: {0}")]
    InvalidHead(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Toml(String),
}

impl Error {
    /// Wraps an error with the pipeline stage it came from.
    pub fn in_stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
