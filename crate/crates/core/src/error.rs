//! Crate-wide error type.

/// Errors surfaced by any stage of the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid coordinate: {0}")]
    InvalidCoordinate(String),

    /// A malformed or invalid record in a line-delimited input stream.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// An invariant violation on a single field.
    #[error("invalid field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("line {line}: duplicate scene_id `{scene_id}`")]
    DuplicateSceneId { line: usize, scene_id: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown stop list `{0}`")]
    UnknownStopList(String),

    #[error("unknown prompt template `{0}`")]
    UnknownTemplate(String),

    #[error("question must be non-empty")]
    EmptyQuestion,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("duplicate document id `{0}`")]
    DuplicateId(String),

    #[error("collection `{0}` already exists")]
    CollectionExists(String),

    #[error("embedder provider mismatch: collection was built with `{manifest}`, configured `{configured}`")]
    ProviderMismatch { manifest: String, configured: String },

    #[error("unsupported format version: found {found}, expected {expected}")]
    FormatVersion { found: u32, expected: u32 },

    /// Unrecognized or corrupt file structure (bad magic, invalid manifest).
    #[error("format error: {0}")]
    Format(String),

    /// Stored data is inconsistent with its manifest (truncation, count drift).
    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("duplicate pair_id `{0}`")]
    DuplicatePairId(String),

    /// Remote endpoint answered with a non-success status.
    #[error("endpoint returned status {status}: {body}")]
    Http { status: u16, body: String },

    /// Remote endpoint answered 2xx but the payload broke the wire contract.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Transport failure that survived the retry budget.
    #[error("network error: {0}")]
    Network(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
