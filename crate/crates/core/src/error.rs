use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(String),

    // data
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("cannot parse row {row}, column `{col}`: {token:?}")]
    ParseError { row: usize, col: String, token: String },
    #[error("target on row {0} is not strictly positive")]
    NonPositiveTarget(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("target is already on the transformed scale")]
    AlreadyTransformed,
    #[error("target is already on the original scale")]
    AlreadyOriginal,
    #[error("landcover class `{0}` has fewer than 2 rows")]
    ClassTooSmall(String),
    #[error("invalid test fraction {0}, expected a value in (0, 1)")]
    InvalidFraction(f64),
    #[error("invalid fold count {0}, expected k >= 2")]
    InvalidK(usize),

    // trees
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("feature `{0}` is not present in the table")]
    MissingFeature(String),

    // shap
    #[error("model trees carry no cover counts")]
    MissingCoverCounts,
    #[error("attribution matrix is empty")]
    EmptyMatrix,

    // tuner
    #[error("parameter space is empty")]
    EmptySpace,
    #[error("fold assignment does not match the dataset: {0}")]
    FoldMismatch(String),

    // metrics
    #[error("length mismatch: {0} observed vs {1} predicted")]
    LengthMismatch(usize, usize),
    #[error("metric input is empty")]
    Empty,
    #[error("zero target on row {0}")]
    ZeroTarget(usize),
    #[error("observed values have zero variance")]
    ZeroVariance,

    // synth
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    // persist
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u64),
    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    // pipeline
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("workdir is locked: {0}")]
    Locked(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(format!("json: {e}"))
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(format!("csv: {e}"))
    }
}

/// Attach a stage name to errors flowing out of a pipeline step.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at_stage(stage))
    }
}
