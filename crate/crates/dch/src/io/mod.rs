//! File formats: ratings, binary codes, factors, loss traces.

mod codes;
mod factors;
mod ratings;
mod trace;

use std::path::PathBuf;

use thiserror::Error;

pub use codes::{code_bytes, load_codes, read_codes, save_codes, sidecar_path, write_codes, MAGIC};
pub use factors::{load_factors, save_factors, Factors};
pub use ratings::{
    load_ratings, parse_netflix, parse_tsv, write_tsv, LoadedRatings, RatingsBuilder, RatingsFile,
    RatingsFormat,
};
pub use trace::{read_trace, write_trace};

/// Failures reading or writing any of the formats.
#[derive(Debug, Error)]
pub enum IoError {
    /// Underlying filesystem error.
    #[error("{path}: {source}")]
    File {
        /// Path involved.
        path: PathBuf,
        /// Cause.
        source: std::io::Error,
    },
    /// Stream error without a path.
    #[error(transparent)]
    Stream(#[from] std::io::Error),
    /// A text line could not be parsed.
    #[error("line {line}: {reason}")]
    Malformed {
        /// One-based line number.
        line: usize,
        /// What was wrong.
        reason: String,
    },
    /// A rating outside the declared scale.
    #[error("line {line}: rating {value} is outside the rating scale")]
    OutOfScale {
        /// One-based line number.
        line: usize,
        /// Offending value.
        value: f64,
    },
    /// No ratings at all.
    #[error("no ratings found")]
    EmptyDataset,
    /// Code file does not start with the magic bytes.
    #[error("not a code file: bad magic bytes")]
    BadMagic,
    /// Code file shorter than its header promises.
    #[error("code file truncated: expected {expected} bytes, found {actual}")]
    Truncated {
        /// Length implied by the header.
        expected: u64,
        /// Actual length.
        actual: u64,
    },
    /// Code file longer than its header promises.
    #[error("code file has trailing bytes: expected {expected} bytes, found {actual}")]
    TrailingBytes {
        /// Length implied by the header.
        expected: u64,
        /// Actual length.
        actual: u64,
    },
    /// Bits beyond `K` set in an entity's last byte.
    #[error("entity {entity} has bits set beyond the code length")]
    NonZeroPadding {
        /// Row index.
        entity: usize,
    },
    /// Code length 0 in a header.
    #[error("code length must be at least 1")]
    ZeroLength,
    /// Id sidecar and code file disagree.
    #[error("id sidecar lists {found} ids for {expected} codes")]
    SidecarMismatch {
        /// Codes in the file.
        expected: usize,
        /// Ids in the sidecar.
        found: usize,
    },
    /// Model-level error.
    #[error(transparent)]
    Model(#[from] dch_core::Error),
}

pub(crate) fn open(path: &std::path::Path) -> Result<std::fs::File, IoError> {
    std::fs::File::open(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn create(path: &std::path::Path) -> Result<std::fs::File, IoError> {
    std::fs::File::create(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}
