//! Streams of input keys.

use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use crate::hash::Key;

/// A stream of distinct keys that the builder reads in batches.
///
/// A rewindable source can be read any number of times and must yield the same
/// keys in the same order on every pass.
pub trait KeySource {
    type Key: Key;

    /// Exact number of keys, when known without reading the stream.
    fn len_hint(&self) -> Option<u64>;

    fn is_rewindable(&self) -> bool;

    /// Starts a new pass at the first key. Fails for a non-rewindable source
    /// that has already been read.
    fn rewind(&mut self) -> io::Result<()>;

    /// Appends up to `max` keys to `buf` and returns how many were appended;
    /// zero means the pass is over.
    fn next_batch(&mut self, buf: &mut Vec<Self::Key>, max: usize) -> io::Result<usize>;

    /// Where the keys come from, for error messages.
    fn origin(&self) -> PathBuf {
        PathBuf::from("<memory>")
    }
}

/// Keys held in a slice.
pub struct SliceSource<'a, K> {
    keys: &'a [K],
    cursor: usize,
}

impl<'a, K> SliceSource<'a, K> {
    pub fn new(keys: &'a [K]) -> Self {
        SliceSource { keys, cursor: 0 }
    }
}

impl<K: Key> KeySource for SliceSource<'_, K> {
    type Key = K;

    fn len_hint(&self) -> Option<u64> {
        Some(self.keys.len() as u64)
    }

    fn is_rewindable(&self) -> bool {
        true
    }

    fn rewind(&mut self) -> io::Result<()> {
        self.cursor = 0;
        Ok(())
    }

    fn next_batch(&mut self, buf: &mut Vec<K>, max: usize) -> io::Result<usize> {
        let end = (self.cursor + max).min(self.keys.len());
        buf.extend_from_slice(&self.keys[self.cursor..end]);
        let taken = end - self.cursor;
        self.cursor = end;
        Ok(taken)
    }
}

/// A one-shot iterator. The builder copies it into a level buffer before use.
pub struct IterSource<I> {
    iter: Option<I>,
    started: bool,
}

impl<I> IterSource<I> {
    pub fn new(iter: I) -> Self {
        IterSource {
            iter: Some(iter),
            started: false,
        }
    }
}

impl<K: Key, I: Iterator<Item = K>> KeySource for IterSource<I> {
    type Key = K;

    fn len_hint(&self) -> Option<u64> {
        None
    }

    fn is_rewindable(&self) -> bool {
        false
    }

    fn rewind(&mut self) -> io::Result<()> {
        if self.started {
            return Err(io::Error::new(
                io::ErrorKind::Unsupported,
                "iterator source cannot be rewound",
            ));
        }
        self.started = true;
        Ok(())
    }

    fn next_batch(&mut self, buf: &mut Vec<K>, max: usize) -> io::Result<usize> {
        let Some(iter) = self.iter.as_mut() else {
            return Ok(0);
        };
        let before = buf.len();
        buf.extend(iter.by_ref().take(max));
        let taken = buf.len() - before;
        if taken < max {
            self.iter = None;
        }
        Ok(taken)
    }
}

/// Byte-string keys read from a file, one key per newline-terminated line.
///
/// Line content is taken verbatim; only the terminating `\n` is stripped. A
/// missing newline after the last key is tolerated.
pub struct LineFileSource {
    path: PathBuf,
    reader: Option<BufReader<File>>,
}

impl LineFileSource {
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        // fail early on a missing or unreadable file
        File::open(&path)?;
        Ok(LineFileSource { path, reader: None })
    }
}

impl KeySource for LineFileSource {
    type Key = Vec<u8>;

    fn len_hint(&self) -> Option<u64> {
        None
    }

    fn is_rewindable(&self) -> bool {
        true
    }

    fn rewind(&mut self) -> io::Result<()> {
        self.reader = Some(BufReader::with_capacity(1 << 20, File::open(&self.path)?));
        Ok(())
    }

    fn next_batch(&mut self, buf: &mut Vec<Vec<u8>>, max: usize) -> io::Result<usize> {
        let Some(reader) = self.reader.as_mut() else {
            return Ok(0);
        };
        let mut taken = 0;
        while taken < max {
            let mut line = Vec::new();
            if reader.read_until(b'\n', &mut line)? == 0 {
                break;
            }
            if line.last() == Some(&b'\n') {
                line.pop();
            }
            buf.push(line);
            taken += 1;
        }
        Ok(taken)
    }

    fn origin(&self) -> PathBuf {
        self.path.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn drain<S: KeySource>(source: &mut S, batch: usize) -> Vec<S::Key> {
        source.rewind().unwrap();
        let mut out = Vec::new();
        while source.next_batch(&mut out, batch).unwrap() > 0 {}
        out
    }

    #[test]
    fn slice_source_rewinds() {
        let keys: Vec<u64> = (0..10).collect();
        let mut src = SliceSource::new(&keys);
        assert_eq!(drain(&mut src, 3), keys);
        assert_eq!(drain(&mut src, 4), keys);
    }

    #[test]
    fn iter_source_is_one_shot() {
        let mut src = IterSource::new(0u64..5);
        assert_eq!(drain(&mut src, 2), vec![0, 1, 2, 3, 4]);
        assert!(src.rewind().is_err());
    }

    #[test]
    fn line_file_keys_are_verbatim() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(b"alpha\nbe ta\r\n\ngamma").unwrap();
        let mut src = LineFileSource::open(file.path()).unwrap();
        let expected: Vec<Vec<u8>> = vec![b"alpha".to_vec(), b"be ta\r".to_vec(), vec![], b"gamma".to_vec()];
        assert_eq!(drain(&mut src, 3), expected);
        assert_eq!(drain(&mut src, 100), expected);
        assert!(LineFileSource::open("/nonexistent/keys.txt").is_err());
    }
}
