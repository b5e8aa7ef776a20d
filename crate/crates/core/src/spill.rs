//! Storage for the sets of keys still unplaced between levels.
//!
//! Spill files hold raw little-endian records: an integer key is 8 bytes, a
//! byte-string key is a 4-byte length followed by its bytes. Files are named
//! `<temp_dir>/bbmph.<build-id>.F<d>` and removed when their buffer is dropped,
//! which covers both normal completion and error paths.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::BuildError;
use crate::hash::Key;
use crate::mphf::{BuildConfig, BuildReport, Strategy};
use crate::source::KeySource;

/// Where the keys of a level buffer live.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backing {
    Disk,
    Memory,
    /// Not stored at all: the builder re-reads the original input and skips
    /// keys already placed at an earlier level.
    Rescan,
}

/// An append-only, ordered set of keys `F_d`.
pub struct LevelBuffer<K: Key> {
    level: usize,
    count: u64,
    store: Store<K>,
}

enum Store<K> {
    Memory { keys: Vec<K>, cursor: usize },
    Disk(SpillFile),
    Rescan,
}

struct SpillFile {
    path: PathBuf,
    writer: Option<BufWriter<File>>,
    reader: Option<BufReader<File>>,
    bytes: u64,
}

impl Drop for SpillFile {
    fn drop(&mut self) {
        self.writer.take();
        self.reader.take();
        let _ = fs::remove_file(&self.path);
    }
}

impl<K: Key> LevelBuffer<K> {
    pub fn in_memory(level: usize) -> Self {
        LevelBuffer {
            level,
            count: 0,
            store: Store::Memory {
                keys: Vec::new(),
                cursor: 0,
            },
        }
    }

    pub fn rescan(level: usize) -> Self {
        LevelBuffer {
            level,
            count: 0,
            store: Store::Rescan,
        }
    }

    pub fn on_disk(level: usize, path: PathBuf) -> Result<Self, BuildError> {
        let file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| BuildError::io(&path, e))?;
        Ok(LevelBuffer {
            level,
            count: 0,
            store: Store::Disk(SpillFile {
                path,
                writer: Some(BufWriter::with_capacity(1 << 20, file)),
                reader: None,
                bytes: 0,
            }),
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn backing(&self) -> Backing {
        match self.store {
            Store::Memory { .. } => Backing::Memory,
            Store::Disk(_) => Backing::Disk,
            Store::Rescan => Backing::Rescan,
        }
    }

    /// Bytes currently held in the spill file; zero for other backings.
    pub fn disk_bytes(&self) -> u64 {
        match &self.store {
            Store::Disk(file) => file.bytes,
            _ => 0,
        }
    }

    pub fn path(&self) -> Option<&Path> {
        match &self.store {
            Store::Disk(file) => Some(&file.path),
            _ => None,
        }
    }

    pub fn append(&mut self, keys: &[K]) -> Result<(), BuildError> {
        self.count += keys.len() as u64;
        match &mut self.store {
            Store::Memory { keys: stored, .. } => stored.extend_from_slice(keys),
            Store::Disk(file) => {
                let writer = file
                    .writer
                    .as_mut()
                    .expect("append after the buffer was sealed");
                for key in keys {
                    key.write_record(writer).map_err(|e| BuildError::io(&file.path, e))?;
                    file.bytes += key.record_len();
                }
            }
            Store::Rescan => {}
        }
        Ok(())
    }

    /// Sets the count of a rescan buffer, whose keys are never stored.
    pub(crate) fn assume_len(&mut self, count: u64) {
        debug_assert!(matches!(self.store, Store::Rescan));
        self.count = count;
    }

    /// Flushes pending writes; the buffer becomes read-only.
    pub fn seal(&mut self) -> Result<(), BuildError> {
        if let Store::Disk(file) = &mut self.store {
            if let Some(mut writer) = file.writer.take() {
                writer.flush().map_err(|e| BuildError::io(&file.path, e))?;
            }
        }
        Ok(())
    }
}

impl<K: Key> KeySource for LevelBuffer<K> {
    type Key = K;

    fn len_hint(&self) -> Option<u64> {
        Some(self.count)
    }

    fn is_rewindable(&self) -> bool {
        !matches!(self.store, Store::Rescan)
    }

    fn rewind(&mut self) -> io::Result<()> {
        match &mut self.store {
            Store::Memory { cursor, .. } => *cursor = 0,
            Store::Disk(file) => {
                if let Some(mut writer) = file.writer.take() {
                    writer.flush()?;
                }
                file.reader = Some(BufReader::with_capacity(1 << 20, File::open(&file.path)?));
            }
            Store::Rescan => {
                return Err(io::Error::new(
                    io::ErrorKind::Unsupported,
                    "rescan buffers hold no keys",
                ))
            }
        }
        Ok(())
    }

    fn next_batch(&mut self, buf: &mut Vec<K>, max: usize) -> io::Result<usize> {
        match &mut self.store {
            Store::Memory { keys, cursor } => {
                let end = (*cursor + max).min(keys.len());
                buf.extend_from_slice(&keys[*cursor..end]);
                let taken = end - *cursor;
                *cursor = end;
                Ok(taken)
            }
            Store::Disk(file) => {
                let Some(reader) = file.reader.as_mut() else {
                    return Ok(0);
                };
                let mut taken = 0;
                while taken < max {
                    match K::read_record(reader)? {
                        Some(key) => buf.push(key),
                        None => break,
                    }
                    taken += 1;
                }
                Ok(taken)
            }
            Store::Rescan => Ok(0),
        }
    }

    fn origin(&self) -> PathBuf {
        self.path()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("<memory>"))
    }
}

/// Identifies the spill files of one build.
pub fn new_build_id() -> String {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let nanos = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0);
    format!(
        "{}-{:x}-{}",
        std::process::id(),
        nanos,
        COUNTER.fetch_add(1, Ordering::Relaxed)
    )
}

pub fn spill_path(temp_dir: &Path, build_id: &str, level: usize) -> PathBuf {
    temp_dir.join(format!("bbmph.{build_id}.F{level}"))
}

/// Chooses where `F_level` will be kept.
///
/// Under the disk-spill strategy a set is written to disk only while it holds
/// more than `spill_to_memory_threshold * total_keys` keys.
pub fn next_level_sink<K: Key>(
    cfg: &BuildConfig,
    build_id: &str,
    level: usize,
    expected_count: u64,
    total_keys: u64,
) -> Result<LevelBuffer<K>, BuildError> {
    match cfg.strategy {
        Strategy::InMemory => Ok(LevelBuffer::in_memory(level)),
        Strategy::RescanInput => Ok(LevelBuffer::rescan(level)),
        Strategy::DiskSpill => {
            let threshold = cfg.spill_to_memory_threshold * total_keys as f64;
            if expected_count as f64 > threshold {
                LevelBuffer::on_disk(level, spill_path(&cfg.temp_dir, build_id, level))
            } else {
                Ok(LevelBuffer::in_memory(level))
            }
        }
    }
}

/// Largest number of spill-file bytes that were alive at the same time.
pub fn peak_spill_bytes(report: &BuildReport) -> u64 {
    report.peak_spill_bytes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read_all<K: Key>(buf: &mut LevelBuffer<K>) -> Vec<K> {
        buf.rewind().unwrap();
        let mut out = Vec::new();
        while buf.next_batch(&mut out, 7).unwrap() > 0 {}
        out
    }

    fn config(strategy: Strategy, dir: &Path) -> BuildConfig {
        BuildConfig {
            strategy,
            temp_dir: dir.to_path_buf(),
            ..BuildConfig::default()
        }
    }

    #[test]
    fn in_memory_strategy_always_uses_memory() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(Strategy::InMemory, dir.path());
        for expected in [0, 10, 1_000_000] {
            let sink = next_level_sink::<u64>(&cfg, "t", 1, expected, 1000).unwrap();
            assert_eq!(sink.backing(), Backing::Memory);
        }
    }

    #[test]
    fn disk_strategy_respects_threshold() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(Strategy::DiskSpill, dir.path());
        let small = next_level_sink::<u64>(&cfg, "t", 3, 20, 1000).unwrap();
        assert_eq!(small.backing(), Backing::Memory);
        let large = next_level_sink::<u64>(&cfg, "t", 1, 21, 1000).unwrap();
        assert_eq!(large.backing(), Backing::Disk);
        assert_eq!(large.path().unwrap(), dir.path().join("bbmph.t.F1"));
        let rescan = next_level_sink::<u64>(&config(Strategy::RescanInput, dir.path()), "t", 1, 500, 1000).unwrap();
        assert_eq!(rescan.backing(), Backing::Rescan);
    }

    #[test]
    fn disk_buffer_preserves_order_and_is_removed_on_drop() {
        let dir = tempfile::tempdir().unwrap();
        let path = spill_path(dir.path(), "x", 2);
        let mut buf = LevelBuffer::<Vec<u8>>::on_disk(2, path.clone()).unwrap();
        let keys: Vec<Vec<u8>> = (0..100u32).map(|i| format!("k{i}").into_bytes()).collect();
        buf.append(&keys[..60]).unwrap();
        buf.append(&keys[60..]).unwrap();
        buf.seal().unwrap();
        assert_eq!(buf.len(), 100);
        assert_eq!(buf.disk_bytes(), fs::metadata(&path).unwrap().len());
        assert_eq!(read_all(&mut buf), keys);
        assert_eq!(read_all(&mut buf), keys);
        drop(buf);
        assert!(!path.exists());
    }

    #[test]
    fn memory_buffer_round_trip() {
        let mut buf = LevelBuffer::<u64>::in_memory(1);
        buf.append(&[5, 3, 9]).unwrap();
        buf.seal().unwrap();
        assert_eq!(read_all(&mut buf), vec![5, 3, 9]);
        assert_eq!(buf.disk_bytes(), 0);
    }

    #[test]
    fn unwritable_temp_dir_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("does-not-exist");
        let cfg = config(Strategy::DiskSpill, &missing);
        match next_level_sink::<u64>(&cfg, "t", 1, 1000, 1000) {
            Err(BuildError::Io { path, .. }) => assert!(path.starts_with(&missing)),
            other => panic!("expected Io error, got {:?}", other.err()),
        }
    }
}
