use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed XML at byte {offset}: {message}")]
    Xml { offset: u64, message: String },

    #[error("unknown class `{name}` (not in vocabulary)")]
    UnknownClass { name: String },

    #[error("invalid geometry in record `{record_id}`{}: {reason}", box_suffix(*.index))]
    Geometry {
        record_id: String,
        index: Option<usize>,
        reason: String,
    },

    #[error("duplicate record id `{0}`")]
    DuplicateId(String),

    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("image is empty")]
    EmptyImage,

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        actual: (u32, u32),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot derive minority classes: {0}; supply an explicit minority list")]
    MinorityUndefined(String),

    #[error("selected image `{image_id}` has no style-domain assignment")]
    MissingDomain { image_id: String },

    #[error("unknown image `{0}`")]
    UnknownImage(String),

    #[error("unknown style domain `{0}`")]
    UnknownDomain(String),

    #[error("no style target for domain `{0}`")]
    MissingStyleTarget(String),

    #[error("translation failed: {message}\n{transcript}")]
    Translation { message: String, transcript: String },

    #[error("unknown review item `{0}`")]
    UnknownItem(String),

    #[error("illegal transition for `{item_id}`: {from} -> {to}")]
    IllegalTransition {
        item_id: String,
        from: String,
        to: String,
    },

    #[error("conflict on `{item_id}`: expected prior state {expected}, current state is {actual}")]
    Conflict {
        item_id: String,
        expected: String,
        actual: String,
    },

    #[error("corrupt decision log at record {index}: {message}")]
    CorruptLog { index: usize, message: String },

    #[error("output directory {0} is not empty")]
    OutputNotEmpty(PathBuf),

    #[error("generated image missing for accepted item `{item_id}`: {path}")]
    MissingGenerated { item_id: String, path: PathBuf },

    #[error("{count} review item(s) still pending; finish review or set a pending policy")]
    PendingItems { count: usize },

    #[error("integrity check failed: {}", .offenders.join("; "))]
    Integrity { offenders: Vec<String> },

    #[error("config error: {0}")]
    Config(String),
}

fn box_suffix(index: Option<usize>) -> String {
    match index {
        Some(i) => format!(", box {i}"),
        None => String::new(),
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::InFile {
            path: path.into(),
            source: Box::new(self),
        }
    }
}
