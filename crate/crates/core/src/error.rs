use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("mesh has no geometry")]
    EmptyMesh,

    #[error("mesh has zero extent")]
    DegenerateMesh,

    #[error("invalid {what}: {msg}")]
    Invalid { what: &'static str, msg: String },

    #[error("unknown preset `{name}`; valid presets: {valid}")]
    UnknownPreset { name: String, valid: String },

    #[error("foreground layer has no covered pixels")]
    NoObject,

    #[error("item {index}: {source}")]
    Item {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },

    #[error("record `{id}`: {msg}")]
    Record { id: String, msg: String },

    #[error("not enough images for category `{category}`: need {needed}, have {available}")]
    Insufficient {
        category: String,
        needed: usize,
        available: usize,
    },

    #[error("category `{0}` has no training images left")]
    EmptyCategory(String),

    #[error("convnet layer {layer}: unknown layer kind `{kind}`")]
    UnknownLayer { layer: usize, kind: String },

    #[error("convnet layer {layer}: shape mismatch: {msg}")]
    ShapeMismatch { layer: usize, msg: String },

    #[error("convnet layer {layer}: weight blob truncated")]
    TruncatedBlob { layer: usize },

    #[error("convnet weight file: {0}")]
    WeightFile(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("no feature vector stored for `{0}`")]
    MissingFeature(String),

    #[error("training data contains a single class")]
    SingleClass,

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, msg: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad input or configuration rather than by a
    /// failure during the run. The CLI maps these to exit status 1.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Item { source, .. } | Error::Context { source, .. } => source.is_validation(),
            Error::Parse { .. }
            | Error::Invalid { .. }
            | Error::UnknownPreset { .. }
            | Error::Manifest { .. }
            | Error::Record { .. }
            | Error::Insufficient { .. }
            | Error::EmptyCategory(_)
            | Error::UnknownLayer { .. }
            | Error::ShapeMismatch { .. }
            | Error::TruncatedBlob { .. }
            | Error::WeightFile(_)
            | Error::Json(_) => true,
            _ => false,
        }
    }
}
