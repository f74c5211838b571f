//! Error types, one enum per pipeline stage.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image {width}x{height} is smaller than the {min}x{min} minimum")]
    TooSmall { width: u32, height: u32, min: u32 },
    #[error("buffer length {actual} does not match {width}x{height}x3")]
    Length {
        width: u32,
        height: u32,
        actual: usize,
    },
    #[error("failed to decode image: {0}")]
    Decode(#[from] image::ImageError),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed detector document: {0}")]
    Malformed(String),
    #[error("detector document lists no images")]
    Empty,
    #[error("metadata row {row}: {message}")]
    Metadata { row: usize, message: String },
}

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("requested {requested} records but only {available} are available")]
    InsufficientPool { requested: usize, available: usize },
    #[error("duplicate image id {0}")]
    DuplicateId(String),
    #[error("species {0:?} is not in the configured species list")]
    UnknownSpecies(String),
    #[error("base-set line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Error)]
pub enum EditorError {
    #[error("species {0:?} has no body-plan entry in the taxonomy")]
    UnknownSpecies(String),
    #[error("backend failed: {0}")]
    Backend(String),
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("prompt template: {0}")]
    Template(String),
}

#[derive(Debug, Error)]
pub enum QcError {
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("invalid parameters: {0}")]
    Params(String),
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest io on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(
        "manifest {path} is corrupt at line {line}: {message}. \
         Move the file aside and truncate it to the last valid line \
         (everything before line {line}) to resume the run."
    )]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("manifest entry for ({run_id}, {base_image_id}, {order_index}) already exists")]
    DuplicateEntry {
        run_id: String,
        base_image_id: String,
        order_index: u8,
    },
}

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("run aborted: {0}")]
    Aborted(String),
    #[error(transparent)]
    Curation(#[from] CurationError),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("feature file row {row}: {message}")]
    Schema { row: usize, message: String },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("feature file io: {0}")]
    Io(#[from] std::io::Error),
}
