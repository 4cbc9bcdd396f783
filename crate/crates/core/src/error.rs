//! Error type shared by all pipeline stages.

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by the sdforge core library.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violated a documented precondition.
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    /// Grid or image shapes that were required to match did not.
    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },

    /// The generator could not produce a non-degenerate object.
    #[error(
        "object generation for seed {seed} stayed degenerate after {retries} retries: {reason}"
    )]
    DegenerateObject {
        seed: u64,
        retries: u32,
        reason: String,
    },

    /// An edge shared by more than two triangles.
    #[error("non-manifold edge ({v0}, {v1}) shared by {count} triangles")]
    NonManifoldEdge { v0: u32, v1: u32, count: usize },

    /// Parity ray casting found an odd crossing count, so inside/outside is
    /// undefined.
    #[error("mesh is not watertight: {reason}")]
    NotWatertight { reason: String },

    /// A view carried no usable foreground for carving.
    #[error("no foreground to carve: {reason}")]
    NoForeground { reason: String },

    /// An optimization objective left the finite range, so continuing
    /// would silently corrupt the solution.
    #[error("non-finite loss in the {stage} stage at iteration {iteration}")]
    NonFiniteLoss { stage: &'static str, iteration: usize },

    /// A file did not conform to one of the documented binary/text formats.
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    /// Filesystem-level failure, annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Helper for attaching a path to an io::Error.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Helper for format violations.
    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Helper for precondition violations.
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
