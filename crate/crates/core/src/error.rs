use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate image dimensions {width}x{height}")]
    DegenerateDims { width: usize, height: usize },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("transform is singular (|det| = {0:e})")]
    SingularTransform(f64),
    #[error("gaussian kernel size must be odd and positive, got {0}")]
    InvalidKernel(i64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("eye keypoints too close ({0:.3} px)")]
    CoincidentEyes(f64),
    #[error("keypoints are not upright: right eye must lie right of the left eye")]
    NotUpright,
    #[error("invalid face box: {0}")]
    InvalidBox(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("capture session is not done")]
    SessionNotDone,
    #[error("frame index {got} does not follow {last}")]
    NonMonotoneFrame { last: i64, got: i64 },
    #[error("malformed .flo stream: {0}")]
    FloFormat(String),
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("malformed annotations: {0}")]
    Annotation(String),
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("training diverged at epoch {epoch}: loss {loss} vs initial {initial}")]
    TrainingDiverged { epoch: usize, loss: f64, initial: f64 },
    #[error("linear head has not been fitted")]
    UnfittedHead,
    #[error("feature layout mismatch: head expects {expected}, got {got}")]
    LayoutMismatch { expected: String, got: String },
    #[error("score list for {0} is empty")]
    EmptyClass(&'static str),
    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
    #[error("need at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },
    #[error("{path}: {source}")]
    Path {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Codec(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn at(self, path: impl Into<PathBuf>) -> Self {
        Error::Path {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by input data rather than by the caller's usage.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::InvalidConfig(_) | Error::UnknownSuite(_))
    }
}
