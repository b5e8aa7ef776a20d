//! Deterministic synthetic key sets.
//!
//! Key `i` is a bijective scramble of the counter `i`, so a generated set is
//! duplicate-free by construction, can be regenerated for every pass and
//! supports random access without storing anything.

use std::io;

use crate::error::BuildError;
use crate::source::KeySource;

const ALPHABET: &[u8; 26] = b"abcdefghijklmnopqrstuvwxyz";
// 26^14 > 2^64: fourteen letters can spell every 64-bit value.
const LETTERS_PER_U64: usize = 14;

#[inline]
fn fmix64(mut k: u64) -> u64 {
    k ^= k >> 33;
    k = k.wrapping_mul(0xff51_afd7_ed55_8ccd);
    k ^= k >> 33;
    k = k.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    k ^ (k >> 33)
}

/// Bijection on `[0, 2^bits)` keyed by `key`.
#[derive(Debug, Clone, Copy)]
struct BitPermutation {
    bits: u32,
    key: u64,
}

impl BitPermutation {
    fn mask(&self) -> u64 {
        if self.bits == 64 {
            u64::MAX
        } else {
            (1u64 << self.bits) - 1
        }
    }

    fn apply(&self, mut x: u64) -> u64 {
        if self.bits == 64 {
            return fmix64(x.wrapping_add(self.key));
        }
        let mask = self.mask();
        let shift = (self.bits / 2).max(1);
        for round in 0..4u64 {
            x = x.wrapping_add(self.key.wrapping_add(round)) & mask;
            x = x.wrapping_mul(0xff51_afd7_ed55_8ccd | 1) & mask;
            x ^= x >> shift;
        }
        x
    }

    /// Permutes `[0, domain)` by walking the cycle of `apply` until it lands
    /// back inside the domain.
    fn apply_within(&self, x: u64, domain: u64) -> u64 {
        let mut y = self.apply(x);
        while y >= domain {
            y = self.apply(y);
        }
        y
    }
}

/// `n` distinct pseudo-random 64-bit keys.
#[derive(Debug, Clone)]
pub struct GeneratedKeys {
    n: u64,
    offset: u64,
    cursor: u64,
}

/// Deterministic duplicate-free stream of `n` 64-bit keys for `seed`.
pub fn generate_keys(n: u64, seed: u64) -> GeneratedKeys {
    GeneratedKeys {
        n,
        offset: fmix64(seed ^ 0x6b65_7973_7472_6561),
        cursor: 0,
    }
}

impl GeneratedKeys {
    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn key_at(&self, i: u64) -> u64 {
        fmix64(i.wrapping_add(self.offset))
    }

    pub fn to_vec(&self) -> Vec<u64> {
        (0..self.n).map(|i| self.key_at(i)).collect()
    }
}

impl KeySource for GeneratedKeys {
    type Key = u64;

    fn len_hint(&self) -> Option<u64> {
        Some(self.n)
    }

    fn is_rewindable(&self) -> bool {
        true
    }

    fn rewind(&mut self) -> io::Result<()> {
        self.cursor = 0;
        Ok(())
    }

    fn next_batch(&mut self, buf: &mut Vec<u64>, max: usize) -> io::Result<usize> {
        let end = (self.cursor + max as u64).min(self.n);
        buf.extend((self.cursor..end).map(|i| self.key_at(i)));
        let taken = (end - self.cursor) as usize;
        self.cursor = end;
        Ok(taken)
    }
}

/// `n` distinct pseudo-random lowercase ASCII strings of a fixed length.
#[derive(Debug, Clone)]
pub struct GeneratedStrings {
    n: u64,
    len: usize,
    // 26^len when it fits in a u64, None when every u64 is representable
    domain: Option<u64>,
    permutation: BitPermutation,
    filler_seed: u64,
    cursor: u64,
}

/// Deterministic duplicate-free corpus of `n` strings of exactly `len` bytes.
pub fn generate_strings(n: u64, len: usize, seed: u64) -> Result<GeneratedStrings, BuildError> {
    if len == 0 {
        return Err(BuildError::Config("string length must be positive".into()));
    }
    let domain = (0..len).try_fold(1u64, |acc, _| acc.checked_mul(ALPHABET.len() as u64));
    if let Some(domain) = domain {
        if n > domain {
            return Err(BuildError::Config(format!(
                "cannot generate {n} distinct strings of length {len} over {} letters",
                ALPHABET.len()
            )));
        }
    }
    let bits = match domain {
        Some(d) => (64 - (d - 1).leading_zeros()).max(1),
        None => 64,
    };
    Ok(GeneratedStrings {
        n,
        len,
        domain,
        permutation: BitPermutation {
            bits,
            key: fmix64(seed ^ 0x7374_7269_6e67_7321),
        },
        filler_seed: fmix64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15)),
        cursor: 0,
    })
}

impl GeneratedStrings {
    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn key_at(&self, i: u64) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len);
        match self.domain {
            Some(domain) => {
                let mut v = self.permutation.apply_within(i, domain);
                for _ in 0..self.len {
                    out.push(ALPHABET[(v % 26) as usize]);
                    v /= 26;
                }
            }
            None => {
                let mut v = self.permutation.apply(i);
                let mut filler = fmix64(v ^ self.filler_seed);
                for pos in 0..self.len {
                    if pos < LETTERS_PER_U64 {
                        out.push(ALPHABET[(v % 26) as usize]);
                        v /= 26;
                    } else {
                        out.push(ALPHABET[(filler % 26) as usize]);
                        filler = fmix64(filler);
                    }
                }
            }
        }
        out
    }

    pub fn to_vec(&self) -> Vec<Vec<u8>> {
        (0..self.n).map(|i| self.key_at(i)).collect()
    }
}

impl KeySource for GeneratedStrings {
    type Key = Vec<u8>;

    fn len_hint(&self) -> Option<u64> {
        Some(self.n)
    }

    fn is_rewindable(&self) -> bool {
        true
    }

    fn rewind(&mut self) -> io::Result<()> {
        self.cursor = 0;
        Ok(())
    }

    fn next_batch(&mut self, buf: &mut Vec<Vec<u8>>, max: usize) -> io::Result<usize> {
        let end = (self.cursor + max as u64).min(self.n);
        buf.extend((self.cursor..end).map(|i| self.key_at(i)));
        let taken = (end - self.cursor) as usize;
        self.cursor = end;
        Ok(taken)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn single_key_is_stable() {
        assert_eq!(generate_keys(1, 5).to_vec(), generate_keys(1, 5).to_vec());
        assert_eq!(generate_keys(1, 5).to_vec().len(), 1);
        assert_ne!(generate_keys(1, 5).to_vec(), generate_keys(1, 6).to_vec());
    }

    #[test]
    fn million_keys_without_duplicates() {
        let mut keys = generate_keys(1_000_000, 42).to_vec();
        keys.sort_unstable();
        assert!(keys.windows(2).all(|w| w[0] != w[1]));
    }

    #[test]
    fn stream_matches_random_access() {
        let mut src = generate_keys(100_000, 3);
        src.rewind().unwrap();
        let mut streamed = Vec::new();
        while src.next_batch(&mut streamed, 999).unwrap() > 0 {}
        assert_eq!(streamed, src.to_vec());
    }

    #[test]
    fn strings_have_requested_length_and_are_distinct() {
        let one = generate_strings(1, 18, 0).unwrap().to_vec();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].len(), 18);
        for len in [1usize, 2, 3, 5, 13, 14, 18, 40] {
            let n = 26u64.saturating_pow(len as u32).min(20_000);
            let corpus = generate_strings(n, len, 9).unwrap().to_vec();
            assert!(corpus.iter().all(|s| s.len() == len && s.iter().all(u8::is_ascii_lowercase)));
            let distinct: HashSet<_> = corpus.iter().collect();
            assert_eq!(distinct.len() as u64, n, "len {len}");
        }
        assert_eq!(generate_strings(100, 18, 1).unwrap().to_vec(), generate_strings(100, 18, 1).unwrap().to_vec());
    }

    #[test]
    fn infeasible_string_sets_are_rejected() {
        assert!(generate_strings(677, 2, 0).is_err());
        assert!(generate_strings(676, 2, 0).is_ok());
        assert!(generate_strings(1, 0, 0).is_err());
    }
}
