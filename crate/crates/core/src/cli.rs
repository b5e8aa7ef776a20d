//! Benchmark driver: build from synthetic keys or a key file, report observed
//! statistics next to the predicted ones, optionally benchmark queries and
//! save the structure.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use thiserror::Error;

use crate::analysis::{self, Prediction};
use crate::codec;
use crate::error::BuildError;
use crate::hash::{HashKey, HashSeed};
use crate::keygen::{generate_keys, generate_strings};
use crate::mphf::{build, BuildConfig, BuildReport, Mphf, Strategy, DEFAULT_SPILL_THRESHOLD};
use crate::source::{KeySource, LineFileSource, SliceSource};
use crate::bitvector::DEFAULT_RANK_INTERVAL;
use crate::mphf::{DEFAULT_GAMMA, DEFAULT_MAX_LEVELS, DEFAULT_SEED};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KeyOrigin {
    /// `n` synthetic 64-bit integers.
    Int64 { n: u64 },
    /// `n` synthetic lowercase strings of length `len`.
    Strings { n: u64, len: usize },
    /// One key per line of a file.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub origin: KeyOrigin,
    pub gamma: f64,
    pub threads: usize,
    pub max_levels: usize,
    pub rank_interval: u32,
    pub seed: u64,
    pub bench: bool,
    pub nodisk: bool,
    pub in_memory: bool,
    /// Stream synthetic keys from the generator instead of materializing them.
    pub onthefly: bool,
    pub output: Option<PathBuf>,
    pub temp_dir: Option<PathBuf>,
}

impl RunSpec {
    pub fn new(origin: KeyOrigin) -> Self {
        RunSpec {
            origin,
            gamma: DEFAULT_GAMMA,
            threads: 1,
            max_levels: DEFAULT_MAX_LEVELS,
            rank_interval: DEFAULT_RANK_INTERVAL,
            seed: DEFAULT_SEED,
            bench: false,
            nodisk: false,
            in_memory: false,
            onthefly: false,
            output: None,
            temp_dir: None,
        }
    }

    pub fn strategy(&self) -> Strategy {
        if self.nodisk {
            Strategy::RescanInput
        } else if self.in_memory {
            Strategy::InMemory
        } else {
            Strategy::DiskSpill
        }
    }

    fn build_config(&self) -> BuildConfig {
        BuildConfig {
            gamma: self.gamma,
            workers: self.threads,
            max_levels: self.max_levels,
            rank_interval: self.rank_interval,
            strategy: self.strategy(),
            spill_to_memory_threshold: DEFAULT_SPILL_THRESHOLD,
            seed: HashSeed(self.seed),
            temp_dir: self.temp_dir.clone().unwrap_or_else(std::env::temp_dir),
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        match &self.origin {
            KeyOrigin::Int64 { n: 0 } | KeyOrigin::Strings { n: 0, .. } => {
                return Err(CliError::Config("key count must be positive".into()))
            }
            KeyOrigin::Strings { len: 0, .. } => {
                return Err(CliError::Config("string length must be positive".into()))
            }
            _ => {}
        }
        if self.nodisk && self.in_memory {
            return Err(CliError::Config("--nodisk and --in-memory are exclusive".into()));
        }
        self.build_config().validate().map_err(CliError::from)
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Duplicates(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Duplicates(_) => 4,
        }
    }

    fn io(context: impl Into<String>, source: io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }
}

impl From<BuildError> for CliError {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::Io { path, source } => {
                CliError::io(format!("I/O error on {}", path.display()), source)
            }
            e @ BuildError::DuplicateKeys { .. } => CliError::Duplicates(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

/// Everything a run measured.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub n: u64,
    pub key_kind: &'static str,
    pub gamma: f64,
    pub threads: usize,
    pub strategy: Strategy,
    pub rank_interval: u32,
    pub levels: usize,
    pub fallback_count: u64,
    pub bits_per_key: f64,
    pub core_bits_per_key: f64,
    pub level0_fraction: f64,
    pub mean_level: f64,
    pub peak_bits_in_memory: u64,
    pub peak_memory_ratio: f64,
    pub peak_spill_bytes: u64,
    pub input_bytes: u64,
    pub source_passes: u64,
    pub build_seconds: f64,
    pub query_ns: Option<f64>,
    pub file_bytes: Option<u64>,
    pub prediction: Prediction,
}

impl RunOutcome {
    fn new(spec: &RunSpec, key_kind: &'static str, mphf: &Mphf, report: &BuildReport) -> Self {
        let n = mphf.len();
        let weights = mphf.level_weights();
        RunOutcome {
            n,
            key_kind,
            gamma: spec.gamma,
            threads: spec.threads,
            strategy: spec.strategy(),
            rank_interval: spec.rank_interval,
            levels: mphf.levels().len(),
            fallback_count: report.fallback_count,
            bits_per_key: mphf.bits_per_key(),
            core_bits_per_key: mphf.core_bits() as f64 / n as f64,
            level0_fraction: weights.first().copied().unwrap_or(0) as f64 / n as f64,
            mean_level: report.mean_level(),
            peak_bits_in_memory: report.peak_bits_in_memory,
            peak_memory_ratio: report.peak_bits_in_memory as f64 / mphf.core_bits() as f64,
            peak_spill_bytes: report.peak_spill_bytes,
            input_bytes: report.input_bytes,
            source_passes: report.source_passes,
            build_seconds: report.total_time.as_secs_f64(),
            query_ns: None,
            file_bytes: None,
            prediction: Prediction::new(spec.gamma, spec.rank_interval),
        }
    }

    pub fn spill_ratio(&self) -> f64 {
        self.peak_spill_bytes as f64 / self.input_bytes as f64
    }

    /// Machine-readable `key=value` lines.
    pub fn key_values(&self) -> Vec<(String, String)> {
        let p = &self.prediction;
        let strategy = match self.strategy {
            Strategy::DiskSpill => "disk-spill",
            Strategy::RescanInput => "rescan-input",
            Strategy::InMemory => "in-memory",
        };
        let mut kv: Vec<(&str, String)> = vec![
            ("n", self.n.to_string()),
            ("key_kind", self.key_kind.to_string()),
            ("gamma", self.gamma.to_string()),
            ("threads", self.threads.to_string()),
            ("strategy", strategy.to_string()),
            ("rank_interval", self.rank_interval.to_string()),
            ("levels", self.levels.to_string()),
            ("fallback_count", self.fallback_count.to_string()),
            ("bits_per_key", format!("{:.6}", self.bits_per_key)),
            ("predicted_bits_per_key", format!("{:.6}", p.bits_per_key_total)),
            ("core_bits_per_key", format!("{:.6}", self.core_bits_per_key)),
            ("predicted_core_bits_per_key", format!("{:.6}", p.bits_per_key_core)),
            ("level0_fraction", format!("{:.6}", self.level0_fraction)),
            ("predicted_level0_fraction", format!("{:.6}", 1.0 - p.level_fraction(1))),
            ("mean_level", format!("{:.6}", self.mean_level)),
            ("predicted_mean_level", format!("{:.6}", p.mean_level)),
            ("peak_bits_in_memory", self.peak_bits_in_memory.to_string()),
            ("peak_memory_ratio", format!("{:.6}", self.peak_memory_ratio)),
            ("predicted_peak_memory_ratio", format!("{:.6}", p.peak_memory_ratio)),
            ("peak_spill_bytes", self.peak_spill_bytes.to_string()),
            ("input_bytes", self.input_bytes.to_string()),
            ("spill_ratio", format!("{:.6}", self.spill_ratio())),
            ("predicted_spill_ratio", format!("{:.6}", p.peak_spill_ratio)),
            ("source_passes", self.source_passes.to_string()),
            ("build_seconds", format!("{:.6}", self.build_seconds)),
        ];
        if let Some(ns) = self.query_ns {
            kv.push(("query_ns", format!("{ns:.2}")));
        }
        if let Some(bytes) = self.file_bytes {
            kv.push(("file_bytes", bytes.to_string()));
        }
        kv.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn write_report<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let p = &self.prediction;
        writeln!(out, "{:<28} {:>14} {:>14}", "statistic", "observed", "predicted")?;
        let rows = [
            ("bits/key", self.bits_per_key, p.bits_per_key_total),
            ("bits/key without rank", self.core_bits_per_key, p.bits_per_key_core),
            ("fraction placed at level 0", self.level0_fraction, 1.0 - p.level_fraction(1)),
            ("mean level + 1", self.mean_level, p.mean_level),
            ("peak memory / structure", self.peak_memory_ratio, p.peak_memory_ratio),
        ];
        for (name, observed, predicted) in rows {
            writeln!(out, "{name:<28} {observed:>14.4} {predicted:>14.4}")?;
        }
        if self.strategy == Strategy::DiskSpill {
            writeln!(
                out,
                "{:<28} {:>14.4} {:>14.4}",
                "peak spill / input",
                self.spill_ratio(),
                p.peak_spill_ratio
            )?;
        }
        writeln!(
            out,
            "{} keys, {} levels, {} in fallback, built in {:.3} s",
            self.n, self.levels, self.fallback_count, self.build_seconds
        )?;
        if let Some(ns) = self.query_ns {
            writeln!(out, "mean query time {ns:.1} ns")?;
        }
        writeln!(out)?;
        for (k, v) in self.key_values() {
            writeln!(out, "{k}={v}")?;
        }
        Ok(())
    }
}

fn build_with<S: KeySource>(source: &mut S, spec: &RunSpec) -> Result<(Mphf, BuildReport), CliError> {
    build(source, &spec.build_config()).map_err(CliError::from)
}

/// Mean nanoseconds per query over `keys`, which should already be shuffled.
pub fn bench_queries<K: HashKey>(mphf: &Mphf, keys: &[K]) -> f64 {
    let started = Instant::now();
    let mut checksum = 0u64;
    for k in keys {
        checksum = checksum.wrapping_add(mphf.query(k).unwrap_or(u64::MAX));
    }
    let elapsed = started.elapsed();
    std::hint::black_box(checksum);
    elapsed.as_nanos() as f64 / keys.len().max(1) as f64
}

fn shuffled<K>(mut keys: Vec<K>, seed: u64) -> Vec<K> {
    keys.shuffle(&mut rand::rngs::StdRng::seed_from_u64(seed));
    keys
}

/// Executes one run and writes its report to `out`.
pub fn run<W: Write>(spec: &RunSpec, out: &mut W) -> Result<RunOutcome, CliError> {
    spec.validate()?;
    let (mphf, mut outcome) = match &spec.origin {
        KeyOrigin::Int64 { n } => {
            let generator = generate_keys(*n, spec.seed);
            let (mphf, report) = if spec.onthefly {
                build_with(&mut generator.clone(), spec)?
            } else {
                let keys = generator.to_vec();
                build_with(&mut SliceSource::new(&keys), spec)?
            };
            let mut outcome = RunOutcome::new(spec, "int64", &mphf, &report);
            if spec.bench {
                let keys = shuffled(generator.to_vec(), spec.seed);
                outcome.query_ns = Some(bench_queries(&mphf, &keys));
            }
            (mphf, outcome)
        }
        KeyOrigin::Strings { n, len } => {
            let generator = generate_strings(*n, *len, spec.seed)?;
            let (mphf, report) = if spec.onthefly {
                build_with(&mut generator.clone(), spec)?
            } else {
                let keys = generator.to_vec();
                build_with(&mut SliceSource::new(&keys), spec)?
            };
            let mut outcome = RunOutcome::new(spec, "strings", &mphf, &report);
            if spec.bench {
                let keys = shuffled(generator.to_vec(), spec.seed);
                outcome.query_ns = Some(bench_queries(&mphf, &keys));
            }
            (mphf, outcome)
        }
        KeyOrigin::File(path) => {
            let mut source = LineFileSource::open(path)
                .map_err(|e| CliError::io(format!("cannot open {}", path.display()), e))?;
            let (mphf, report) = build_with(&mut source, spec)?;
            let mut outcome = RunOutcome::new(spec, "strings", &mphf, &report);
            if spec.bench {
                source
                    .rewind()
                    .map_err(|e| CliError::io(format!("cannot read {}", path.display()), e))?;
                let mut keys = Vec::new();
                while source
                    .next_batch(&mut keys, 1 << 16)
                    .map_err(|e| CliError::io(format!("cannot read {}", path.display()), e))?
                    > 0
                {}
                let keys = shuffled(keys, spec.seed);
                outcome.query_ns = Some(bench_queries(&mphf, &keys));
            }
            (mphf, outcome)
        }
    };

    if let Some(path) = &spec.output {
        outcome.file_bytes = Some(write_atomically(path, &mphf)?);
    }
    outcome
        .write_report(out)
        .map_err(|e| CliError::io("cannot write report", e))?;
    log::info!(
        "built {} keys: {:.3} bits/key, predicted {:.3}",
        outcome.n,
        outcome.bits_per_key,
        analysis::predict_bits_per_key(spec.gamma, spec.rank_interval)
    );
    Ok(outcome)
}

// Writes next to the destination and renames, so a failed run never leaves a
// partial file behind.
fn write_atomically(path: &Path, mphf: &Mphf) -> Result<u64, CliError> {
    let file_name = path
        .file_name()
        .ok_or_else(|| CliError::Config(format!("invalid output path {}", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(format!(".partial-{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut writer = BufWriter::new(File::create(&tmp)?);
        codec::encode_to(mphf, &mut writer)?;
        writer.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)?;
        fs::metadata(path).map(|m| m.len())
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::io(format!("cannot write {}", path.display()), e)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(output: &[u8]) -> std::collections::HashMap<String, String> {
        String::from_utf8_lossy(output)
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn zero_keys_is_a_config_error() {
        let err = run(&RunSpec::new(KeyOrigin::Int64 { n: 0 }), &mut Vec::new()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn conflicting_strategies_rejected() {
        let mut spec = RunSpec::new(KeyOrigin::Int64 { n: 10 });
        spec.nodisk = true;
        spec.in_memory = true;
        assert_eq!(run(&spec, &mut Vec::new()).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn report_lines_parse() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = RunSpec::new(KeyOrigin::Int64 { n: 20_000 });
        spec.bench = true;
        spec.temp_dir = Some(dir.path().to_path_buf());
        spec.output = Some(dir.path().join("out.mphf"));
        let mut out = Vec::new();
        let outcome = run(&spec, &mut out).unwrap();
        let kv = parse(&out);
        assert_eq!(kv["n"], "20000");
        assert_eq!(kv["strategy"], "disk-spill");
        assert!(kv.contains_key("query_ns"));
        let file_bytes: u64 = kv["file_bytes"].parse().unwrap();
        assert_eq!(file_bytes, fs::metadata(dir.path().join("out.mphf")).unwrap().len());
        assert!(outcome.bits_per_key > 3.0 && outcome.bits_per_key < 4.5);
        // only the output file remains
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("out.mphf")]);
    }

    #[test]
    fn missing_input_file_is_io_error() {
        let spec = RunSpec::new(KeyOrigin::File("/nonexistent/keys.txt".into()));
        assert_eq!(run(&spec, &mut Vec::new()).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn duplicate_lines_exit_with_code_4() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("keys.txt");
        fs::write(&input, "a\nb\nc\na\n").unwrap();
        let mut spec = RunSpec::new(KeyOrigin::File(input));
        spec.in_memory = true;
        spec.output = Some(dir.path().join("never.mphf"));
        let err = run(&spec, &mut Vec::new()).unwrap_err();
        assert_eq!(err.exit_code(), 4);
        assert!(!dir.path().join("never.mphf").exists());
    }
}
