//! Level bit arrays.
//!
//! During construction a level is an [`AtomicBitPair`]: every position carries
//! a 2-bit state `(A, C)` packed 32 positions per machine word, so a single
//! compare-exchange updates both bits of a position at once. Once all keys of a
//! level are recorded the pair is frozen into [`RankedBits`], which keeps only
//! the `A` bits plus sampled rank checkpoints.
//!
//! Word layout of frozen bits: little-endian 64-bit words, bit `i` lives in
//! word `i / 64` at bit offset `i % 64`.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::ContractViolation;

/// Default distance between two rank checkpoints, in bit positions.
pub const DEFAULT_RANK_INTERVAL: u32 = 512;

const POSITIONS_PER_WORD: u64 = 32;
const EVEN_BITS: u64 = 0x5555_5555_5555_5555;

/// Logical state of one position of an [`AtomicBitPair`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairState {
    /// `(A=0, C=0)`: no key recorded.
    Empty,
    /// `(A=1, C=0)`: exactly one key recorded.
    Single,
    /// `(A=0, C=1)`: two or more keys recorded.
    Collided,
}

impl PairState {
    fn from_bits(bits: u64) -> Self {
        match bits & 0b11 {
            0b00 => PairState::Empty,
            0b01 => PairState::Single,
            0b10 => PairState::Collided,
            _ => unreachable!("A and C are never both set"),
        }
    }

    pub fn a_bit(self) -> bool {
        self == PairState::Single
    }

    pub fn c_bit(self) -> bool {
        self == PairState::Collided
    }
}

/// The `A_d`/`C_d` pair of a level under construction.
///
/// Any number of threads may call [`record`](Self::record) concurrently; the
/// final state of a position only depends on how many times it was recorded.
pub struct AtomicBitPair {
    len: u64,
    words: Vec<AtomicU64>,
}

impl AtomicBitPair {
    pub fn new(len: u64) -> Self {
        let word_count = len.div_ceil(POSITIONS_PER_WORD) as usize;
        AtomicBitPair {
            len,
            words: (0..word_count).map(|_| AtomicU64::new(0)).collect(),
        }
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Records one key landing on position `i` and returns the new state.
    pub fn record(&self, i: u64) -> Result<PairState, ContractViolation> {
        if i >= self.len {
            return Err(ContractViolation::IndexOutOfRange {
                index: i,
                size: self.len,
            });
        }
        Ok(self.record_unchecked(i))
    }

    #[inline]
    pub(crate) fn record_unchecked(&self, i: u64) -> PairState {
        debug_assert!(i < self.len);
        let word = &self.words[(i / POSITIONS_PER_WORD) as usize];
        let shift = (i % POSITIONS_PER_WORD) * 2;
        // Both legal transitions, 00 -> 01 and 01 -> 10, add one to the field.
        let step = 1u64 << shift;
        let mut current = word.load(Ordering::Relaxed);
        loop {
            if (current >> shift) & 0b11 == 0b10 {
                return PairState::Collided;
            }
            let next = current + step;
            match word.compare_exchange_weak(current, next, Ordering::Relaxed, Ordering::Relaxed) {
                Ok(_) => return PairState::from_bits(next >> shift),
                Err(actual) => current = actual,
            }
        }
    }

    pub fn state(&self, i: u64) -> Result<PairState, ContractViolation> {
        if i >= self.len {
            return Err(ContractViolation::IndexOutOfRange {
                index: i,
                size: self.len,
            });
        }
        let word = self.words[(i / POSITIONS_PER_WORD) as usize].load(Ordering::Relaxed);
        Ok(PairState::from_bits(word >> ((i % POSITIONS_PER_WORD) * 2)))
    }

    /// Drops the collision bits and builds rank support over the `A` bits.
    pub fn freeze(self, rank_interval: u32) -> Result<RankedBits, ContractViolation> {
        let raw: Vec<u64> = self.words.into_iter().map(AtomicU64::into_inner).collect();
        let words = raw
            .chunks(2)
            .map(|pair| {
                let low = compress_even_bits(pair[0]);
                let high = pair.get(1).map_or(0, |&w| compress_even_bits(w));
                low | (high << 32)
            })
            .collect();
        RankedBits::from_words(words, self.len, rank_interval)
    }
}

// Gathers bits 0, 2, 4, ... 62 of `w` into the low 32 bits.
#[inline]
fn compress_even_bits(w: u64) -> u64 {
    let mut x = w & EVEN_BITS;
    x = (x | (x >> 1)) & 0x3333_3333_3333_3333;
    x = (x | (x >> 2)) & 0x0f0f_0f0f_0f0f_0f0f;
    x = (x | (x >> 4)) & 0x00ff_00ff_00ff_00ff;
    x = (x | (x >> 8)) & 0x0000_ffff_0000_ffff;
    (x | (x >> 16)) & 0x0000_0000_ffff_ffff
}

/// Immutable bit array with constant-time inclusive rank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedBits {
    len: u64,
    words: Vec<u64>,
    checkpoints: Vec<u64>,
    interval: u32,
    ones: u64,
}

impl RankedBits {
    /// Wraps raw words; bits at positions `>= len` must be zero.
    pub fn from_words(words: Vec<u64>, len: u64, interval: u32) -> Result<Self, ContractViolation> {
        if interval == 0 {
            return Err(ContractViolation::BadRankInterval(interval));
        }
        assert_eq!(words.len() as u64, len.div_ceil(64), "word count does not match length");
        let step = interval as u64;
        let mut checkpoints = Vec::with_capacity(len.div_ceil(step) as usize);
        let mut ones = 0u64;
        let mut start = 0u64;
        while start < len {
            checkpoints.push(ones);
            let end = (start + step).min(len);
            ones += count_ones_in(&words, start, end);
            start = end;
        }
        Ok(RankedBits {
            len,
            words,
            checkpoints,
            interval,
            ones,
        })
    }

    pub fn from_bools(bits: &[bool], interval: u32) -> Result<Self, ContractViolation> {
        let mut words = vec![0u64; bits.len().div_ceil(64)];
        for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
            words[i / 64] |= 1 << (i % 64);
        }
        Self::from_words(words, bits.len() as u64, interval)
    }

    /// Number of bit positions.
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of set bits, `weight(A_d)`.
    pub fn weight(&self) -> u64 {
        self.ones
    }

    pub fn interval(&self) -> u32 {
        self.interval
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn checkpoints(&self) -> &[u64] {
        &self.checkpoints
    }

    /// Storage footprint in bits: bit words plus 64-bit checkpoints.
    pub fn storage_bits(&self) -> u64 {
        64 * (self.words.len() + self.checkpoints.len()) as u64
    }

    pub fn get(&self, i: u64) -> Result<bool, ContractViolation> {
        if i >= self.len {
            return Err(ContractViolation::IndexOutOfRange {
                index: i,
                size: self.len,
            });
        }
        Ok(self.get_unchecked(i))
    }

    #[inline(always)]
    pub(crate) fn get_unchecked(&self, i: u64) -> bool {
        (self.words[(i / 64) as usize] >> (i % 64)) & 1 == 1
    }

    /// Number of set bits in positions `[0, y]`; the first set bit has rank 1.
    pub fn rank1_inclusive(&self, y: u64) -> Result<u64, ContractViolation> {
        if y >= self.len {
            return Err(ContractViolation::IndexOutOfRange {
                index: y,
                size: self.len,
            });
        }
        Ok(self.rank_unchecked(y))
    }

    #[inline]
    pub(crate) fn rank_unchecked(&self, y: u64) -> u64 {
        let block = y / self.interval as u64;
        self.checkpoints[block as usize] + count_ones_in(&self.words, block * self.interval as u64, y + 1)
    }
}

// Set bits in positions [start, end).
#[inline]
fn count_ones_in(words: &[u64], start: u64, end: u64) -> u64 {
    if start >= end {
        return 0;
    }
    let first = (start / 64) as usize;
    let last = ((end - 1) / 64) as usize;
    let head_mask = u64::MAX << (start % 64);
    let tail_mask = u64::MAX >> (63 - (end - 1) % 64);
    if first == last {
        return (words[first] & head_mask & tail_mask).count_ones() as u64;
    }
    let mut ones = (words[first] & head_mask).count_ones() as u64;
    for w in &words[first + 1..last] {
        ones += w.count_ones() as u64;
    }
    ones + (words[last] & tail_mask).count_ones() as u64
}
