//! Error type shared by every module in the crate.

use std::fmt;

use thiserror::Error;

/// Which of the two input sides a diagnostic refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Content,
    Style,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Content => write!(f, "content"),
            Side::Style => write!(f, "style"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix dimension mismatch: {left_rows}x{left_cols} * {right_rows}x{right_cols}")]
    MatDimMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: String,
        expected: String,
        got: String,
    },

    #[error("empty semantic correspondence in attention row {row}")]
    EmptySemanticCorrespondence { row: usize },

    #[error("empty cell set")]
    EmptyCellSet,

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("cluster count {requested} exceeds the {distinct} distinct colors in the inputs")]
    TooManyClusters { requested: usize, distinct: usize },

    #[error("semantic category {label} missing on the {side} side")]
    SemanticCategoryMissing { label: u16, side: Side },

    #[error("unmatched semantic region: label {label} has no style cells")]
    UnmatchedSemanticRegion { label: u16 },

    #[error("no semantic label occurs in both maps")]
    NoSharedLabels,

    #[error("semantic embedding needs at least {num_labels} channels, got {channels}")]
    ChannelsTooFew { channels: usize, num_labels: usize },

    #[error(
        "image size {width}x{height} is not divisible by patch size {patch}; pad or crop the input"
    )]
    IndivisibleDims {
        width: u32,
        height: u32,
        patch: usize,
    },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("bad file format: {0}")]
    BadFormat(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wraps the error with the pipeline stage it surfaced in.
    pub fn with_stage(self, stage: impl Into<String>) -> Error {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by numeric breakdown rather than bad input data.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFinite { .. } | Error::EmptySemanticCorrespondence { .. } => true,
            Error::Stage { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

/// Extension trait to tag any `Result` with a stage label.
pub trait StageExt<T> {
    fn stage(self, stage: &str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &str) -> Result<T> {
        self.map_err(|e| e.with_stage(stage))
    }
}
