use std::path::PathBuf;

use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("image dimensions {width}x{height} have zero area")]
    EmptyImage { width: usize, height: usize },

    #[error("image data length {got} does not match {width}x{height}")]
    DataLength {
        width: usize,
        height: usize,
        got: usize,
    },

    #[error("intensity {value} at index {index} is outside [0, 1]")]
    IntensityOutOfRange { index: usize, value: f64 },

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("mask is not binary at index {index} (value {value})")]
    NonBinaryMask { index: usize, value: f64 },

    #[error("unknown character {0:?}")]
    UnknownCharacter(char),

    #[error("corpus uses labels unknown to the reference: {}", format_labels(.0))]
    UnknownLabels(Vec<char>),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("lineage mismatch: {0}")]
    Lineage(String),

    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    #[error("invalid model state: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidModel(Vec<Violation>),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty alphabet")]
    EmptyAlphabet,

    #[error("line {line} has zero width")]
    ZeroWidthLine { line: usize },

    #[error("line {line} has height {got}, expected {expected}")]
    LineHeight {
        line: usize,
        got: usize,
        expected: usize,
    },

    #[error("expected {expected} alignments, got {got}")]
    AlignmentCount { expected: usize, got: usize },

    #[error("need at least {needed} inputs, got {got}")]
    TooFew { needed: usize, got: usize },

    #[error("character {character:?} (U+{code:04X}) is outside the charset")]
    OutsideCharset { character: char, code: u32 },

    #[error("corpus manifest: {0}")]
    Manifest(String),

    #[error("duplicate document id {0:?}")]
    DuplicateDocument(String),

    #[error("document {doc:?}, line {line}: {message}")]
    CorpusLine {
        doc: String,
        line: usize,
        message: String,
    },

    #[error("model file: bad magic")]
    BadMagic,

    #[error("model file: unsupported version {0}")]
    UnsupportedVersion(u16),

    #[error("model file: checksum mismatch")]
    Checksum,

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("synthetic spec: {0}")]
    Synth(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn format_labels(labels: &[char]) -> String {
    labels
        .iter()
        .map(|c| format!("{c:?}"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config { .. } => ErrorKind::Usage,
            Error::NonFinite(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }
}
