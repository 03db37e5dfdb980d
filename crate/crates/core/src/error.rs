use alloc::string::String;
use core::fmt;

/// Errors raised by the model, retrieval and metric routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two vectors or codes that must share a length do not.
    LengthMismatch {
        /// Length of the left-hand operand (or the expected length).
        expected: usize,
        /// Length that was actually supplied.
        found: usize,
    },
    /// A hyperparameter is outside its admissible range.
    InvalidHyperparameter(&'static str),
    /// A user or item index is outside `[0, M)` / `[0, N)`.
    IndexOutOfRange {
        /// Which entity the index refers to.
        entity: &'static str,
        /// Offending index.
        index: usize,
        /// Number of entities.
        len: usize,
    },
    /// A rating lies outside its declared scale.
    RatingOutOfScale(f64),
    /// A batch passed to a per-user (per-item) gradient names another entity.
    BatchEntityMismatch {
        /// Entity the gradient was requested for.
        expected: usize,
        /// Entity found in the batch.
        found: usize,
    },
    /// A factor needed for a gradient is missing from the supplied view.
    MissingFactor {
        /// Which entity is missing.
        entity: &'static str,
        /// Its index.
        index: usize,
    },
    /// Hash-table lookup would need more bucket probes than allowed.
    RadiusTooLarge {
        /// Probes the enumeration would need.
        probes: u128,
        /// Refusal threshold.
        limit: u128,
    },
    /// Multi-index parameters are inconsistent with the code length.
    InvalidSubcodes {
        /// Requested number of substrings.
        subcodes: usize,
        /// Code length.
        bits: usize,
    },
    /// A code has bits set beyond its declared length.
    NonZeroPadding,
    /// Split fraction not in the open interval (0, 1).
    InvalidFraction(f64),
    /// Recommendation method name not recognized.
    UnknownMethod(String),
    /// A retrieval method needs an index that was not built.
    MissingIndex(&'static str),
}

/// Shorthand result type.
pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::LengthMismatch { expected, found } => {
                write!(f, "length mismatch: expected {expected}, found {found}")
            }
            Error::InvalidHyperparameter(what) => write!(f, "invalid hyperparameter: {what}"),
            Error::IndexOutOfRange { entity, index, len } => {
                write!(f, "{entity} index {index} out of range (count {len})")
            }
            Error::RatingOutOfScale(r) => write!(f, "rating {r} outside declared scale"),
            Error::BatchEntityMismatch { expected, found } => write!(
                f,
                "batch entry belongs to entity {found}, gradient requested for {expected}"
            ),
            Error::MissingFactor { entity, index } => {
                write!(f, "no factor available for {entity} {index}")
            }
            Error::RadiusTooLarge { probes, limit } => write!(
                f,
                "hash lookup would need {probes} probes (limit {limit}); use radius search instead"
            ),
            Error::InvalidSubcodes { subcodes, bits } => write!(
                f,
                "cannot split a {bits}-bit code into {subcodes} substrings of at most 64 bits"
            ),
            Error::NonZeroPadding => write!(f, "code has non-zero padding bits"),
            Error::InvalidFraction(x) => write!(f, "split fraction {x} not in (0, 1)"),
            Error::UnknownMethod(name) => write!(f, "unknown recommendation method `{name}`"),
            Error::MissingIndex(what) => write!(f, "method requires a {what} that was not built"),
        }
    }
}

impl core::error::Error for Error {}
