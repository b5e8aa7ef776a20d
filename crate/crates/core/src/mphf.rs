//! Construction and query of the cascading bit-array MPHF.
//!
//! Level `d` hashes every key of `F_d` (the keys not yet placed) into a fresh
//! array of `ceil(gamma * |F_d|)` positions. Positions hit by exactly one key
//! keep a set bit; keys that collided form `F_{d+1}`. After `max_levels`
//! levels the residue goes to a fallback table that owns the tail of the
//! output range. A key's index is the number of set bits that precede its own
//! bit in the concatenation of all levels.
//!
//! Every `F_d` is the input order filtered, whatever the strategy or worker
//! count, so builds are reproducible byte for byte.

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::bitvector::{AtomicBitPair, RankedBits, DEFAULT_RANK_INTERVAL};
use crate::error::{BuildError, QueryError};
use crate::hash::{reduce, HashKey, HashSeed, Key};
use crate::source::KeySource;
use crate::spill::{self, Backing, LevelBuffer};

/// Default number of hashed levels before the fallback table.
pub const DEFAULT_MAX_LEVELS: usize = 25;
pub const DEFAULT_GAMMA: f64 = 2.0;
pub const DEFAULT_SPILL_THRESHOLD: f64 = 0.02;
pub const DEFAULT_SEED: u64 = 0x6262_6d70_6800_0001;

const BATCH_KEYS: usize = 1 << 16;
const MIN_KEYS_PER_TASK: usize = 4096;

/// How unplaced keys are carried from one level to the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Write `F_{d+1}` to a temporary file while it is large.
    DiskSpill,
    /// Store nothing; re-read the input at every level and skip placed keys.
    RescanInput,
    /// Keep every `F_{d+1}` in memory.
    InMemory,
}

#[derive(Debug, Clone)]
pub struct BuildConfig {
    pub gamma: f64,
    pub workers: usize,
    pub max_levels: usize,
    pub rank_interval: u32,
    pub strategy: Strategy,
    /// Under [`Strategy::DiskSpill`], sets of at most this fraction of the
    /// input size are kept in memory instead of on disk.
    pub spill_to_memory_threshold: f64,
    pub seed: HashSeed,
    pub temp_dir: PathBuf,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            gamma: DEFAULT_GAMMA,
            workers: 1,
            max_levels: DEFAULT_MAX_LEVELS,
            rank_interval: DEFAULT_RANK_INTERVAL,
            strategy: Strategy::DiskSpill,
            spill_to_memory_threshold: DEFAULT_SPILL_THRESHOLD,
            seed: HashSeed(DEFAULT_SEED),
            temp_dir: std::env::temp_dir(),
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<(), BuildError> {
        if !(self.gamma.is_finite() && self.gamma >= 1.0) {
            return Err(BuildError::Config(format!("gamma must be >= 1, got {}", self.gamma)));
        }
        if self.workers == 0 {
            return Err(BuildError::Config("workers must be positive".into()));
        }
        if self.max_levels == 0 {
            return Err(BuildError::Config("max_levels must be positive".into()));
        }
        if self.rank_interval == 0 {
            return Err(BuildError::Config("rank_interval must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.spill_to_memory_threshold) {
            return Err(BuildError::Config(format!(
                "spill_to_memory_threshold must be in [0, 1], got {}",
                self.spill_to_memory_threshold
            )));
        }
        Ok(())
    }

    /// `ceil(gamma * count)`, at least 1.
    pub fn array_size(&self, count: u64) -> u64 {
        array_size(self.gamma, count)
    }
}

pub(crate) fn array_size(gamma: f64, count: u64) -> u64 {
    ((gamma * count as f64).ceil() as u64).max(1)
}

/// Where a key was resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Level(usize),
    Fallback,
}

/// Keys left over after the last level, with their final indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Fallback {
    entries: Vec<(Vec<u8>, u64)>,
    index: HashMap<Vec<u8>, u64>,
}

impl Fallback {
    pub(crate) fn from_entries(entries: Vec<(Vec<u8>, u64)>) -> Result<Self, Vec<u8>> {
        let mut index = HashMap::with_capacity(entries.len());
        for (key, value) in &entries {
            if index.insert(key.clone(), *value).is_some() {
                return Err(key.clone());
            }
        }
        Ok(Fallback { entries, index })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &[u8]) -> Option<u64> {
        self.index.get(key).copied()
    }

    /// Entries in the order they were assigned.
    pub fn entries(&self) -> &[(Vec<u8>, u64)] {
        &self.entries
    }
}

/// A minimal perfect hash function over a static key set.
#[derive(Debug, Clone, PartialEq)]
pub struct Mphf {
    n: u64,
    gamma: f64,
    seed: HashSeed,
    rank_interval: u32,
    levels: Vec<RankedBits>,
    level_seeds: Vec<u64>,
    cumulative: Vec<u64>,
    fallback: Fallback,
}

impl Mphf {
    /// Assembles a structure from its stored parts, checking that the level
    /// weights and fallback exactly cover `0..n`.
    pub fn from_parts(
        n: u64,
        gamma: f64,
        seed: HashSeed,
        rank_interval: u32,
        levels: Vec<RankedBits>,
        fallback_entries: Vec<(Vec<u8>, u64)>,
    ) -> Result<Self, String> {
        if levels.iter().any(|l| l.interval() != rank_interval) {
            return Err("level rank interval differs from header".into());
        }
        if levels.iter().any(|l| l.is_empty()) {
            return Err("empty level array".into());
        }
        let mut cumulative = Vec::with_capacity(levels.len());
        let mut placed = 0u64;
        for level in &levels {
            cumulative.push(placed);
            placed += level.weight();
        }
        let fallback_count = fallback_entries.len() as u64;
        if placed.checked_add(fallback_count) != Some(n) {
            return Err(format!(
                "{placed} placed keys + {fallback_count} fallback keys != {n}"
            ));
        }
        let mut seen = vec![false; fallback_entries.len()];
        for (_, index) in &fallback_entries {
            let slot = index
                .checked_sub(placed)
                .filter(|&s| s < fallback_count)
                .ok_or_else(|| format!("fallback index {index} outside [{placed}, {n})"))?;
            if std::mem::replace(&mut seen[slot as usize], true) {
                return Err(format!("fallback index {index} assigned twice"));
            }
        }
        let fallback = Fallback::from_entries(fallback_entries)
            .map_err(|_| "repeated fallback key".to_string())?;
        let level_seeds = (0..levels.len()).map(|d| seed.level_seed(d)).collect();
        Ok(Mphf {
            n,
            gamma,
            seed,
            rank_interval,
            levels,
            level_seeds,
            cumulative,
            fallback,
        })
    }

    /// Number of keys; queries of members return values in `0..n`.
    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn seed(&self) -> HashSeed {
        self.seed
    }

    pub fn rank_interval(&self) -> u32 {
        self.rank_interval
    }

    pub fn levels(&self) -> &[RankedBits] {
        &self.levels
    }

    pub fn level_weights(&self) -> Vec<u64> {
        self.levels.iter().map(RankedBits::weight).collect()
    }

    /// `cumulative_weights()[d]` is the number of keys placed before level `d`.
    pub fn cumulative_weights(&self) -> &[u64] {
        &self.cumulative
    }

    pub fn fallback(&self) -> &Fallback {
        &self.fallback
    }

    /// Total positions over all level arrays, without rank support.
    pub fn core_bits(&self) -> u64 {
        self.levels.iter().map(RankedBits::len).sum()
    }

    /// Stored size of the levels: per level a 64-bit length, the bit words
    /// and the rank checkpoints. Excludes the fixed header and the fallback.
    pub fn structure_bits(&self) -> u64 {
        self.levels.iter().map(|l| 64 + l.storage_bits()).sum()
    }

    pub fn bits_per_key(&self) -> f64 {
        self.structure_bits() as f64 / self.n as f64
    }

    /// 0-based index of `key`. For keys outside the build set the result is
    /// arbitrary, or [`QueryError::NotInFallback`].
    #[inline]
    pub fn query<Q: HashKey + ?Sized>(&self, key: &Q) -> Result<u64, QueryError> {
        for (d, bits) in self.levels.iter().enumerate() {
            let pos = reduce(key.hash_with(self.level_seeds[d]), bits.len());
            if bits.get_unchecked(pos) {
                return Ok(self.cumulative[d] + bits.rank_unchecked(pos) - 1);
            }
        }
        self.fallback
            .get(&key.key_bytes())
            .ok_or(QueryError::NotInFallback)
    }

    /// The level at which `key` was placed.
    pub fn query_level<Q: HashKey + ?Sized>(&self, key: &Q) -> Result<Placement, QueryError> {
        match self.first_hit(key, self.levels.len()) {
            Some(d) => Ok(Placement::Level(d)),
            None if self.fallback.get(&key.key_bytes()).is_some() => Ok(Placement::Fallback),
            None => Err(QueryError::NotInFallback),
        }
    }

    fn first_hit<Q: HashKey + ?Sized>(&self, key: &Q, below: usize) -> Option<usize> {
        first_hit(&self.levels[..below], &self.level_seeds, key)
    }
}

#[inline]
fn first_hit<Q: HashKey + ?Sized>(levels: &[RankedBits], seeds: &[u64], key: &Q) -> Option<usize> {
    levels
        .iter()
        .zip(seeds)
        .position(|(bits, &seed)| bits.get_unchecked(reduce(key.hash_with(seed), bits.len())))
}

/// Time spent on one level.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LevelTiming {
    /// Hashing every key of the level into its bit pair.
    pub fill: Duration,
    /// Collecting the keys that collided.
    pub split: Duration,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildReport {
    pub n: u64,
    /// `|F_d|` for every built level.
    pub level_sizes: Vec<u64>,
    /// `|A_d|` for every built level.
    pub array_sizes: Vec<u64>,
    pub level_weights: Vec<u64>,
    pub fallback_count: u64,
    /// `max_d (sum_{i<d} |A_i| + 2 |A_d|)`, in bits.
    pub peak_bits_in_memory: u64,
    /// Largest total size of spill files alive at the same time.
    pub peak_spill_bytes: u64,
    /// Spill-record size of the whole input.
    pub input_bytes: u64,
    /// Full passes made over the caller's key source.
    pub source_passes: u64,
    pub level_timings: Vec<LevelTiming>,
    pub fallback_time: Duration,
    pub total_time: Duration,
}

impl BuildReport {
    /// Keys resolved by the hashed levels, per level, as a fraction of `n`.
    pub fn level_fraction(&self, d: usize) -> f64 {
        self.level_sizes.get(d).copied().unwrap_or(self.fallback_count) as f64 / self.n as f64
    }

    /// Mean of `level + 1` over the keys placed in the levels.
    pub fn mean_level(&self) -> f64 {
        let placed: u64 = self.level_weights.iter().sum();
        let weighted: u64 = self
            .level_weights
            .iter()
            .enumerate()
            .map(|(d, &w)| (d as u64 + 1) * w)
            .sum();
        weighted as f64 / placed as f64
    }
}

/// Peak bit-array memory of a build whose level arrays have `sizes` bits.
pub fn peak_bits_in_memory(sizes: &[u64]) -> u64 {
    let mut before = 0u64;
    let mut peak = 0u64;
    for &size in sizes {
        peak = peak.max(before + 2 * size);
        before += size;
    }
    peak
}

/// Builds the structure for every key of `source`.
pub fn build<S: KeySource>(source: &mut S, cfg: &BuildConfig) -> Result<(Mphf, BuildReport), BuildError> {
    cfg.validate()?;
    let start = Instant::now();
    let build_id = spill::new_build_id();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| BuildError::Config(format!("cannot start {} workers: {e}", cfg.workers)))?;

    let (mphf, mut report) = if source.is_rewindable() {
        Builder::new(source, cfg, &pool, &build_id, 0).run()?
    } else {
        if cfg.strategy == Strategy::RescanInput {
            return Err(BuildError::NotRewindable);
        }
        // Copy a one-shot stream so it can be read once per pass.
        let mut copy = match cfg.strategy {
            Strategy::DiskSpill => {
                LevelBuffer::on_disk(0, spill::spill_path(&cfg.temp_dir, &build_id, 0))?
            }
            _ => LevelBuffer::in_memory(0),
        };
        source.rewind().map_err(|e| BuildError::io(source.origin(), e))?;
        scan(source, |batch| copy.append(batch))?;
        copy.seal()?;
        let baseline = copy.disk_bytes();
        let (mphf, mut report) = Builder::new(&mut copy, cfg, &pool, &build_id, baseline).run()?;
        report.source_passes = 1;
        (mphf, report)
    };
    report.total_time = start.elapsed();
    Ok((mphf, report))
}

// Reads one full pass of `src` in batches; returns the number of keys seen.
fn scan<S: KeySource>(
    src: &mut S,
    mut f: impl FnMut(&[S::Key]) -> Result<(), BuildError>,
) -> Result<u64, BuildError> {
    let mut batch = Vec::with_capacity(BATCH_KEYS);
    let mut seen = 0u64;
    loop {
        batch.clear();
        let got = src
            .next_batch(&mut batch, BATCH_KEYS)
            .map_err(|e| BuildError::io(src.origin(), e))?;
        if got == 0 {
            return Ok(seen);
        }
        seen += got as u64;
        f(&batch)?;
    }
}

// Passes over the keys of F_level. For rescan buffers this re-reads the
// source and drops keys already placed by an earlier level.
#[allow(clippy::too_many_arguments)]
fn read_level<S: KeySource>(
    source: &mut S,
    levels: &[RankedBits],
    seeds: &[u64],
    pool: &rayon::ThreadPool,
    source_passes: &mut u64,
    input: &mut LevelInput<S::Key>,
    level: usize,
    mut f: impl FnMut(&[S::Key]) -> Result<(), BuildError>,
) -> Result<u64, BuildError> {
    let rescan = matches!(input, LevelInput::Buffer(b) if b.backing() == Backing::Rescan);
    match input {
        LevelInput::Buffer(buffer) if !rescan => {
            buffer.rewind().map_err(|e| BuildError::io(buffer.origin(), e))?;
            scan(buffer, f)
        }
        _ => {
            *source_passes += 1;
            source.rewind().map_err(|e| BuildError::io(source.origin(), e))?;
            if !rescan {
                return scan(source, f);
            }
            let (levels, seeds) = (&levels[..level], &seeds[..level]);
            let mut kept = 0u64;
            scan(source, |batch| {
                let unplaced: Vec<S::Key> = pool.install(|| {
                    batch
                        .par_iter()
                        .with_min_len(MIN_KEYS_PER_TASK)
                        .filter(|k| first_hit(levels, seeds, *k).is_none())
                        .cloned()
                        .collect()
                });
                kept += unplaced.len() as u64;
                f(&unplaced)
            })?;
            Ok(kept)
        }
    }
}

enum LevelInput<K: Key> {
    Source,
    Buffer(LevelBuffer<K>),
}

impl<K: Key> LevelInput<K> {
    fn disk_bytes(&self) -> u64 {
        match self {
            LevelInput::Source => 0,
            LevelInput::Buffer(b) => b.disk_bytes(),
        }
    }
}

struct Builder<'a, S: KeySource> {
    source: &'a mut S,
    cfg: &'a BuildConfig,
    pool: &'a rayon::ThreadPool,
    build_id: &'a str,
    spill_baseline: u64,
    levels: Vec<RankedBits>,
    seeds: Vec<u64>,
    report: BuildReport,
}

impl<'a, S: KeySource> Builder<'a, S> {
    fn new(
        source: &'a mut S,
        cfg: &'a BuildConfig,
        pool: &'a rayon::ThreadPool,
        build_id: &'a str,
        spill_baseline: u64,
    ) -> Self {
        Builder {
            source,
            cfg,
            pool,
            build_id,
            spill_baseline,
            levels: Vec::new(),
            seeds: Vec::new(),
            report: BuildReport {
                peak_spill_bytes: spill_baseline,
                ..BuildReport::default()
            },
        }
    }

    fn read_level(
        &mut self,
        input: &mut LevelInput<S::Key>,
        level: usize,
        f: impl FnMut(&[S::Key]) -> Result<(), BuildError>,
    ) -> Result<u64, BuildError> {
        read_level(
            self.source,
            &self.levels,
            &self.seeds,
            self.pool,
            &mut self.report.source_passes,
            input,
            level,
            f,
        )
    }

    fn run(mut self) -> Result<(Mphf, BuildReport), BuildError> {
        let n = match self.source.len_hint() {
            Some(n) => n,
            None => self.read_level(&mut LevelInput::Source, 0, |_| Ok(()))?,
        };
        if n == 0 {
            return Err(BuildError::EmptyInput);
        }
        self.report.n = n;

        let mut input = LevelInput::<S::Key>::Source;
        let mut remaining = n;
        for d in 0..self.cfg.max_levels {
            if remaining == 0 {
                break;
            }
            let bits = self.fill_level(&mut input, d, remaining)?;
            let next_count = remaining - bits.weight();
            self.report.level_sizes.push(remaining);
            self.report.array_sizes.push(bits.len());
            self.report.level_weights.push(bits.weight());
            self.seeds.push(self.cfg.seed.level_seed(d));
            self.levels.push(bits);
            if next_count > 0 {
                let started = Instant::now();
                input = self.split_level(input, d, next_count)?;
                self.report.level_timings[d].split = started.elapsed();
            }
            remaining = next_count;
        }

        let started = Instant::now();
        let fallback = self.collect_fallback(&mut input, n, remaining)?;
        drop(input);
        self.report.fallback_time = started.elapsed();
        self.report.fallback_count = remaining;
        self.report.peak_bits_in_memory = peak_bits_in_memory(&self.report.array_sizes);

        let mphf = Mphf::from_parts(
            n,
            self.cfg.gamma,
            self.cfg.seed,
            self.cfg.rank_interval,
            self.levels,
            fallback,
        )
        .map_err(BuildError::Inconsistent)?;
        Ok((mphf, self.report))
    }

    fn fill_level(
        &mut self,
        input: &mut LevelInput<S::Key>,
        d: usize,
        expected: u64,
    ) -> Result<RankedBits, BuildError> {
        let started = Instant::now();
        let size = self.cfg.array_size(expected);
        let seed = self.cfg.seed.level_seed(d);
        let pair = AtomicBitPair::new(size);
        let pool = self.pool;
        let mut record_bytes = 0u64;
        let seen = self.read_level(input, d, |batch| {
            if d == 0 {
                record_bytes += batch.iter().map(Key::record_len).sum::<u64>();
            }
            pool.install(|| {
                batch
                    .par_iter()
                    .with_min_len(MIN_KEYS_PER_TASK)
                    .for_each(|k| {
                        pair.record_unchecked(reduce(k.hash_with(seed), size));
                    })
            });
            Ok(())
        })?;
        if seen != expected {
            return Err(BuildError::SourceMismatch {
                declared: expected,
                actual: seen,
            });
        }
        if d == 0 {
            self.report.input_bytes = record_bytes;
        }
        let bits = pair
            .freeze(self.cfg.rank_interval)
            .map_err(|e| BuildError::Config(e.to_string()))?;
        self.report.level_timings.push(LevelTiming {
            fill: started.elapsed(),
            split: Duration::ZERO,
        });
        Ok(bits)
    }

    // Produces F_{d+1} from F_d and the frozen level d.
    fn split_level(
        &mut self,
        mut input: LevelInput<S::Key>,
        d: usize,
        next_count: u64,
    ) -> Result<LevelInput<S::Key>, BuildError> {
        let mut sink = spill::next_level_sink::<S::Key>(
            self.cfg,
            self.build_id,
            d + 1,
            next_count,
            self.report.n,
        )?;
        if sink.backing() == Backing::Rescan {
            sink.assume_len(next_count);
            return Ok(LevelInput::Buffer(sink));
        }
        let live_before = self.spill_baseline + input.disk_bytes();
        let bits = &self.levels[d];
        let seed = self.seeds[d];
        let size = bits.len();
        let pool = self.pool;
        let mut peak = self.report.peak_spill_bytes;
        read_level(
            self.source,
            &self.levels,
            &self.seeds,
            pool,
            &mut self.report.source_passes,
            &mut input,
            d,
            |batch| {
                let unplaced: Vec<S::Key> = pool.install(|| {
                    batch
                        .par_iter()
                        .with_min_len(MIN_KEYS_PER_TASK)
                        .filter(|k| !bits.get_unchecked(reduce(k.hash_with(seed), size)))
                        .cloned()
                        .collect()
                });
                sink.append(&unplaced)?;
                peak = peak.max(live_before + sink.disk_bytes());
                Ok(())
            },
        )?;
        sink.seal()?;
        self.report.peak_spill_bytes = peak;
        if sink.len() != next_count {
            return Err(BuildError::SourceMismatch {
                declared: next_count,
                actual: sink.len(),
            });
        }
        // dropping `input` deletes the spill file of F_d
        drop(input);
        Ok(LevelInput::Buffer(sink))
    }

    fn collect_fallback(
        &mut self,
        input: &mut LevelInput<S::Key>,
        n: u64,
        remaining: u64,
    ) -> Result<Vec<(Vec<u8>, u64)>, BuildError> {
        if remaining == 0 {
            return Ok(Vec::new());
        }
        let mut keys: Vec<Vec<u8>> = Vec::with_capacity(remaining as usize);
        let level = self.levels.len();
        self.read_level(input, level, |batch| {
            keys.extend(batch.iter().map(|k| k.key_bytes().into_owned()));
            Ok(())
        })?;
        if keys.len() as u64 != remaining {
            return Err(BuildError::SourceMismatch {
                declared: remaining,
                actual: keys.len() as u64,
            });
        }
        let first = n - remaining;
        let entries: Vec<(Vec<u8>, u64)> = keys
            .into_iter()
            .zip(first..)
            .collect();
        let mut seen = std::collections::HashSet::with_capacity(entries.len());
        if entries.iter().any(|(k, _)| !seen.insert(k.as_slice())) {
            return Err(BuildError::DuplicateKeys { unplaced: remaining });
        }
        Ok(entries)
    }
}
