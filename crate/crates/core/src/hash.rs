//! Seeded per-level hash functions `h_0, h_1, ...` built from xorshift-multiply rounds.
//!
//! Every key is treated as a finite byte sequence. A 64-bit integer key is the
//! 8-byte little-endian encoding of the integer, so `hash_level(&42u64, ..)` and
//! `hash_level(&42u64.to_le_bytes()[..], ..)` agree.
//!
//! The constants below are part of the serialized format: changing any of them
//! changes the positions stored in every encoded structure.

use std::borrow::Cow;
use std::io::{self, Read, Write};

use crate::error::ContractViolation;

/// Golden-ratio increment used to spread level indices before mixing.
pub const LEVEL_INCREMENT: u64 = 0x9e37_79b9_7f4a_7c15;
/// First multiplier of the 64-bit finalizer.
pub const FINAL_MUL_1: u64 = 0xbf58_476d_1ce4_e5b9;
/// Second multiplier of the 64-bit finalizer.
pub const FINAL_MUL_2: u64 = 0x94d0_49bb_1331_11eb;
/// Multiplier folding the key length into the initial state.
pub const LENGTH_MUL: u64 = 0xc2b2_ae3d_27d4_eb4f;
/// Multiplier applied after each 8-byte word is absorbed.
pub const FOLD_MUL: u64 = 0x9fb2_1c65_1e98_df25;

/// Bijective xorshift-multiply finalizer over 64-bit words.
#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(FINAL_MUL_1);
    z = (z ^ (z >> 27)).wrapping_mul(FINAL_MUL_2);
    z ^ (z >> 31)
}

#[inline(always)]
fn absorb(state: u64, word: u64) -> u64 {
    let s = (state ^ word).wrapping_mul(FOLD_MUL);
    s ^ (s >> 32)
}

/// Master seed from which every level hash function is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct HashSeed(pub u64);

impl HashSeed {
    pub fn new(master: u64) -> Self {
        HashSeed(master)
    }

    pub fn master(self) -> u64 {
        self.0
    }

    /// Seed of the hash function used at `level`.
    #[inline]
    pub fn level_seed(self, level: usize) -> u64 {
        mix64(
            self.0
                .wrapping_add(LEVEL_INCREMENT.wrapping_mul(level as u64 + 1)),
        )
    }
}

/// Hashes a byte string under an already derived level seed.
#[inline]
pub fn hash_bytes(bytes: &[u8], level_seed: u64) -> u64 {
    let mut state = level_seed ^ (bytes.len() as u64).wrapping_mul(LENGTH_MUL);
    let mut chunks = bytes.chunks_exact(8);
    for chunk in &mut chunks {
        state = absorb(state, u64::from_le_bytes(chunk.try_into().unwrap()));
    }
    let tail = chunks.remainder();
    if !tail.is_empty() {
        let mut buf = [0u8; 8];
        buf[..tail.len()].copy_from_slice(tail);
        state = absorb(state, u64::from_le_bytes(buf));
    }
    mix64(state)
}

/// Hashes a 64-bit integer key; identical to hashing its little-endian bytes.
#[inline(always)]
pub fn hash_u64(key: u64, level_seed: u64) -> u64 {
    mix64(absorb(level_seed ^ 8u64.wrapping_mul(LENGTH_MUL), key))
}

/// Reduces a full-range hash onto `[0, size)`. `size` must be non-zero.
#[inline(always)]
pub(crate) fn reduce(hash: u64, size: u64) -> u64 {
    hash % size
}

/// Discriminates the two on-disk key encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyKind {
    Int64,
    Bytes,
}

/// Anything that can be looked up in a built structure.
pub trait HashKey {
    fn hash_with(&self, level_seed: u64) -> u64;
    fn key_bytes(&self) -> Cow<'_, [u8]>;
}

/// A key type that can also be used to build a structure: it must be cheap to
/// move between workers and have a spill-file record encoding.
pub trait Key: HashKey + Clone + Send + Sync + 'static {
    const KIND: KeyKind;

    fn write_record<W: Write>(&self, out: &mut W) -> io::Result<()>;

    /// Reads one record, returning `None` on a clean end of stream.
    fn read_record<R: Read>(input: &mut R) -> io::Result<Option<Self>>;

    /// Bytes used by one spill record of this key.
    fn record_len(&self) -> u64;
}

impl HashKey for u64 {
    #[inline(always)]
    fn hash_with(&self, level_seed: u64) -> u64 {
        hash_u64(*self, level_seed)
    }

    fn key_bytes(&self) -> Cow<'_, [u8]> {
        Cow::Owned(self.to_le_bytes().to_vec())
    }
}

impl HashKey for [u8] {
    #[inline]
    fn hash_with(&self, level_seed: u64) -> u64 {
        hash_bytes(self, level_seed)
    }

    fn key_bytes(&self) -> Cow<'_, [u8]> {
        Cow::Borrowed(self)
    }
}

impl HashKey for Vec<u8> {
    #[inline]
    fn hash_with(&self, level_seed: u64) -> u64 {
        hash_bytes(self, level_seed)
    }

    fn key_bytes(&self) -> Cow<'_, [u8]> {
        Cow::Borrowed(self)
    }
}

impl HashKey for str {
    #[inline]
    fn hash_with(&self, level_seed: u64) -> u64 {
        hash_bytes(self.as_bytes(), level_seed)
    }

    fn key_bytes(&self) -> Cow<'_, [u8]> {
        Cow::Borrowed(self.as_bytes())
    }
}

impl HashKey for String {
    #[inline]
    fn hash_with(&self, level_seed: u64) -> u64 {
        hash_bytes(self.as_bytes(), level_seed)
    }

    fn key_bytes(&self) -> Cow<'_, [u8]> {
        Cow::Borrowed(self.as_bytes())
    }
}

impl<K: HashKey + ?Sized> HashKey for &K {
    #[inline]
    fn hash_with(&self, level_seed: u64) -> u64 {
        (**self).hash_with(level_seed)
    }

    fn key_bytes(&self) -> Cow<'_, [u8]> {
        (**self).key_bytes()
    }
}

impl Key for u64 {
    const KIND: KeyKind = KeyKind::Int64;

    fn write_record<W: Write>(&self, out: &mut W) -> io::Result<()> {
        out.write_all(&self.to_le_bytes())
    }

    fn read_record<R: Read>(input: &mut R) -> io::Result<Option<Self>> {
        let mut buf = [0u8; 8];
        if !read_exact_or_eof(input, &mut buf)? {
            return Ok(None);
        }
        Ok(Some(u64::from_le_bytes(buf)))
    }

    fn record_len(&self) -> u64 {
        8
    }
}

impl Key for Vec<u8> {
    const KIND: KeyKind = KeyKind::Bytes;

    fn write_record<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let len = u32::try_from(self.len())
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "key longer than 4 GiB"))?;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(self)
    }

    fn read_record<R: Read>(input: &mut R) -> io::Result<Option<Self>> {
        let mut len = [0u8; 4];
        if !read_exact_or_eof(input, &mut len)? {
            return Ok(None);
        }
        let mut key = vec![0u8; u32::from_le_bytes(len) as usize];
        input.read_exact(&mut key)?;
        Ok(Some(key))
    }

    fn record_len(&self) -> u64 {
        4 + self.len() as u64
    }
}

// Ok(false) only when the stream ends before the first byte.
fn read_exact_or_eof<R: Read>(input: &mut R, buf: &mut [u8]) -> io::Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match input.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(read) => filled += read,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(true)
}

/// Hash of `key` under the level-`level` function derived from `seed`.
#[inline]
pub fn hash_level<K: HashKey + ?Sized>(key: &K, level: usize, seed: HashSeed) -> u64 {
    key.hash_with(seed.level_seed(level))
}

/// Slot of `key` in a level array of `array_size` bits.
pub fn position<K: HashKey + ?Sized>(
    key: &K,
    level: usize,
    seed: HashSeed,
    array_size: u64,
) -> Result<u64, ContractViolation> {
    if array_size == 0 {
        return Err(ContractViolation::EmptyArray);
    }
    Ok(reduce(hash_level(key, level, seed), array_size))
}
