use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// A caller broke a documented precondition.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContractViolation {
    #[error("array size must be positive")]
    EmptyArray,
    #[error("index {index} out of range for {size} positions")]
    IndexOutOfRange { index: u64, size: u64 },
    #[error("rank interval {0} must be positive")]
    BadRankInterval(u32),
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("key source is empty")]
    EmptyInput,
    #[error("duplicate keys in input ({unplaced} keys could not be separated)")]
    DuplicateKeys { unplaced: u64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("rescan-input strategy requires a rewindable key source")]
    NotRewindable,
    #[error("key source reported {declared} keys but yielded {actual}")]
    SourceMismatch { declared: u64, actual: u64 },
    #[error("key source changed between passes: {0}")]
    Inconsistent(String),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl BuildError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        BuildError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    /// Every level missed and the key is not in the fallback table. Only
    /// reachable for keys outside the build set.
    #[error("key not found in any level or in the fallback table")]
    NotInFallback,
}

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("malformed image: {0}")]
    Format(String),
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("image truncated at byte offset {offset}")]
    Truncated { offset: u64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}
