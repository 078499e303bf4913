use std::path::Path;

use crate::data::Modality;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("Io: {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("Malformed: line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("EmptyToken: user {user:?}, item {item:?}")]
    EmptyToken { user: String, item: String },
    #[error("DuplicateItem: {0}")]
    DuplicateItem(String),
    #[error("UnknownToken: {0}")]
    UnknownToken(String),
    #[error("Degenerate: {0}")]
    Degenerate(String),
    #[error("MissingFeatureRow: {0}")]
    MissingFeatureRow(String),
    #[error("BadMagic: {0:?}")]
    BadMagic([u8; 4]),
    #[error("BadVersion: {0}")]
    BadVersion(u16),
    #[error("BadDtype: {0}")]
    BadDtype(u8),
    #[error("BadModality: {0}")]
    BadModality(u8),
    #[error("TruncatedFile: expected {expected} bytes, found {actual}")]
    TruncatedFile { expected: u64, actual: u64 },
    #[error("SizeMismatch: expected {expected} bytes, found {actual}")]
    SizeMismatch { expected: u64, actual: u64 },
    #[error("InvalidFeatures: {0}")]
    InvalidFeatures(String),
    #[error("DimMismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("EmptyModalities")]
    EmptyModalities,
    #[error("UnknownModality: {0}")]
    UnknownModality(Modality),
    #[error("UnknownUser: {0}")]
    UnknownUser(usize),
    #[error("InsufficientItems: {available} candidates for K={k}")]
    InsufficientItems { available: usize, k: usize },
    #[error("NonFinite: {0}")]
    NonFinite(String),
    #[error("EmptyGrid")]
    EmptyGrid,
    #[error("EmptyRecords")]
    EmptyRecords,
    #[error("KeyMismatch: {0}")]
    KeyMismatch(String),
    #[error("Config: {0}")]
    Config(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping stage labels.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Configuration problems as opposed to problems with the data itself.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self.root(),
            Error::Config(_) | Error::EmptyGrid | Error::UnknownModality(_)
        )
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at_stage(stage))
    }
}
