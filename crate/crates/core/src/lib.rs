//! Minimal perfect hash functions for large static key sets.
//!
//! Keys are hashed level by level into bit arrays sized `gamma` times the
//! number of keys still unplaced; a key is placed at the first level where it
//! lands on a slot no other key of that level hits. The index of a key is the
//! rank of its bit in the concatenated arrays, so `n` keys map onto exactly
//! `0..n`.
//!
//! ```
//! use bbmph::{build, BuildConfig, SliceSource, Strategy};
//!
//! let keys: Vec<u64> = (0..1000).map(|i| i * 31 + 7).collect();
//! let cfg = BuildConfig { strategy: Strategy::InMemory, ..BuildConfig::default() };
//! let (mphf, _report) = build(&mut SliceSource::new(&keys), &cfg).unwrap();
//!
//! let mut indices: Vec<u64> = keys.iter().map(|k| mphf.query(k).unwrap()).collect();
//! indices.sort_unstable();
//! assert_eq!(indices, (0..1000).collect::<Vec<u64>>());
//! ```

pub mod analysis;
pub mod bitvector;
pub mod cli;
pub mod codec;
mod error;
pub mod hash;
pub mod keygen;
pub mod mphf;
pub mod source;
pub mod spill;

pub use bitvector::{AtomicBitPair, PairState, RankedBits};
pub use error::{BuildError, CodecError, ContractViolation, QueryError};
pub use hash::{hash_level, position, HashKey, HashSeed, Key, KeyKind};
pub use mphf::{build, BuildConfig, BuildReport, Mphf, Placement, Strategy};
pub use source::{IterSource, KeySource, LineFileSource, SliceSource};
