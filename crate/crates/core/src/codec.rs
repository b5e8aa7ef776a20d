//! Binary image of a built [`Mphf`].
//!
//! All integers are little-endian and fields are packed without padding:
//!
//! ```text
//! offset  size  field
//!      0     8  magic "BBMPH001"
//!      8     4  version (u32, currently 1)
//!     12     8  n, number of keys (u64)
//!     20     8  gamma (IEEE-754 binary64)
//!     28     8  master seed (u64)
//!     36     4  rank interval (u32)
//!     40     4  level count L (u32)
//!     44        L level records:
//!                 bit_count (u64)
//!                 ceil(bit_count / 64) words (u64 each), bit i in word i/64 at offset i%64
//!                 ceil(bit_count / interval) rank checkpoints (u64 each)
//!               fallback count F (u64)
//!               F fallback entries:
//!                 key length (u32), key bytes, 0-based index (u64)
//! ```
//!
//! Bits past `bit_count` in the last word are zero. Checkpoints are stored but
//! checked against the words on decode.

use std::io::Write;

use crate::bitvector::RankedBits;
use crate::error::CodecError;
use crate::hash::HashSeed;
use crate::mphf::Mphf;

pub const MAGIC: [u8; 8] = *b"BBMPH001";
pub const VERSION: u32 = 1;
/// Bytes before the first level record.
pub const HEADER_LEN: u64 = 44;

/// Serializes `mphf`; the output depends only on the structure.
pub fn encode(mphf: &Mphf) -> Vec<u8> {
    let mut out = Vec::with_capacity(encoded_len(mphf) as usize);
    encode_to(mphf, &mut out).expect("writing to a Vec cannot fail");
    out
}

pub fn encode_to<W: Write>(mphf: &Mphf, out: &mut W) -> std::io::Result<()> {
    out.write_all(&MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&mphf.len().to_le_bytes())?;
    out.write_all(&mphf.gamma().to_bits().to_le_bytes())?;
    out.write_all(&mphf.seed().master().to_le_bytes())?;
    out.write_all(&mphf.rank_interval().to_le_bytes())?;
    out.write_all(&(mphf.levels().len() as u32).to_le_bytes())?;
    for level in mphf.levels() {
        out.write_all(&level.len().to_le_bytes())?;
        for w in level.words().iter().chain(level.checkpoints()) {
            out.write_all(&w.to_le_bytes())?;
        }
    }
    let fallback = mphf.fallback().entries();
    out.write_all(&(fallback.len() as u64).to_le_bytes())?;
    for (key, index) in fallback {
        out.write_all(&(key.len() as u32).to_le_bytes())?;
        out.write_all(key)?;
        out.write_all(&index.to_le_bytes())?;
    }
    Ok(())
}

/// Bytes of the fallback section, including its count field.
pub fn fallback_section_len(mphf: &Mphf) -> u64 {
    8 + mphf
        .fallback()
        .entries()
        .iter()
        .map(|(k, _)| 12 + k.len() as u64)
        .sum::<u64>()
}

/// Exact length of `encode(mphf)`.
pub fn encoded_len(mphf: &Mphf) -> u64 {
    HEADER_LEN + mphf.structure_bits() / 8 + fallback_section_len(mphf)
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: u64) -> Result<&'a [u8], CodecError> {
        let truncated = CodecError::Truncated {
            offset: self.pos as u64,
        };
        let len = usize::try_from(len).map_err(|_| CodecError::Truncated {
            offset: self.pos as u64,
        })?;
        let end = self.pos.checked_add(len).ok_or(truncated)?;
        if end > self.data.len() {
            return Err(CodecError::Truncated {
                offset: self.pos as u64,
            });
        }
        let bytes = &self.data[self.pos..end];
        self.pos = end;
        Ok(bytes)
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u64_array(&mut self, count: u64) -> Result<Vec<u64>, CodecError> {
        let bytes = self.take(count.checked_mul(8).ok_or(CodecError::Truncated {
            offset: self.pos as u64,
        })?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }
}

/// Parses an image produced by [`encode`].
pub fn decode(bytes: &[u8]) -> Result<Mphf, CodecError> {
    let mut r = Reader { data: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(CodecError::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CodecError::Version {
            found: version,
            expected: VERSION,
        });
    }
    let n = r.u64()?;
    let gamma = f64::from_bits(r.u64()?);
    if !(gamma.is_finite() && gamma >= 1.0) {
        return Err(CodecError::Format(format!("invalid gamma {gamma}")));
    }
    let seed = HashSeed(r.u64()?);
    let interval = r.u32()?;
    if interval == 0 {
        return Err(CodecError::Format("rank interval is zero".into()));
    }
    let level_count = r.u32()?;

    let mut levels = Vec::with_capacity((level_count as usize).min(r.remaining() / 8));
    for d in 0..level_count {
        let bit_count = r.u64()?;
        if bit_count == 0 {
            return Err(CodecError::Format(format!("level {d} has no bits")));
        }
        let words = r.u64_array(bit_count.div_ceil(64))?;
        let checkpoints = r.u64_array(bit_count.div_ceil(interval as u64))?;
        if bit_count % 64 != 0 && words.last().unwrap() >> (bit_count % 64) != 0 {
            return Err(CodecError::Format(format!("level {d} has bits past its end")));
        }
        let level = RankedBits::from_words(words, bit_count, interval)
            .map_err(|e| CodecError::Format(e.to_string()))?;
        if level.checkpoints() != &checkpoints[..] {
            return Err(CodecError::Format(format!("level {d} rank checkpoints disagree with its bits")));
        }
        levels.push(level);
    }

    let fallback_count = r.u64()?;
    let mut entries = Vec::with_capacity((fallback_count as usize).min(r.remaining() / 12));
    for _ in 0..fallback_count {
        let len = r.u32()?;
        let key = r.take(len as u64)?.to_vec();
        let index = r.u64()?;
        entries.push((key, index));
    }
    if r.remaining() != 0 {
        return Err(CodecError::Format(format!(
            "{} trailing bytes after the fallback table",
            r.remaining()
        )));
    }
    Mphf::from_parts(n, gamma, seed, interval, levels, entries).map_err(CodecError::Format)
}
