use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("pgm parse error at byte {offset}: {reason}")]
    PgmParse { offset: usize, reason: String },

    #[error("unsupported maxval {maxval} at byte {offset}: only maxval 255 is supported")]
    UnsupportedMaxval { offset: usize, maxval: u64 },

    #[error("truncated pgm payload at byte {offset}: expected {expected} sample bytes, found {found}")]
    TruncatedPayload {
        offset: usize,
        expected: usize,
        found: usize,
    },

    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("restricted vector has length {got}, expected {expected} (reliable pixel count)")]
    RestrictedLength { expected: usize, got: usize },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
