use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser};

use bbmph::cli::{run, KeyOrigin, RunSpec};
use bbmph::mphf::{DEFAULT_GAMMA, DEFAULT_MAX_LEVELS, DEFAULT_SEED};

/// Build and benchmark a minimal perfect hash function.
#[derive(Debug, Parser)]
#[command(name = "bbmph", version)]
#[command(group(ArgGroup::new("origin").required(true).args(["keys", "input", "strings"])))]
struct Args {
    /// Number of synthetic 64-bit keys.
    #[arg(long, value_name = "N")]
    keys: Option<u64>,
    /// File with one key per line.
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    /// Synthetic strings: count and length, e.g. 100000,18.
    #[arg(long, value_name = "N,LEN", value_parser = parse_strings)]
    strings: Option<(u64, usize)>,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long = "max-levels", default_value_t = DEFAULT_MAX_LEVELS)]
    max_levels: usize,
    #[arg(long = "rank-interval", default_value_t = 512)]
    rank_interval: u32,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Measure mean query time over all keys in shuffled order.
    #[arg(long)]
    bench: bool,
    /// Re-read the input at every level instead of spilling unplaced keys.
    #[arg(long, conflicts_with = "in_memory")]
    nodisk: bool,
    /// Keep unplaced keys in memory.
    #[arg(long = "in-memory")]
    in_memory: bool,
    /// Stream synthetic keys from the generator without materializing them.
    #[arg(long)]
    onthefly: bool,
    /// Write the encoded structure here.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
    #[arg(long = "temp-dir", value_name = "DIR")]
    temp_dir: Option<PathBuf>,
}

fn parse_strings(s: &str) -> Result<(u64, usize), String> {
    let (n, len) = s
        .split_once(',')
        .ok_or_else(|| format!("expected N,LEN, got {s:?}"))?;
    let n = n.trim().parse().map_err(|e| format!("bad count {n:?}: {e}"))?;
    let len = len.trim().parse().map_err(|e| format!("bad length {len:?}: {e}"))?;
    Ok((n, len))
}

impl Args {
    fn into_spec(self) -> RunSpec {
        let origin = match (self.keys, self.input, self.strings) {
            (Some(n), _, _) => KeyOrigin::Int64 { n },
            (_, Some(path), _) => KeyOrigin::File(path),
            (_, _, Some((n, len))) => KeyOrigin::Strings { n, len },
            _ => unreachable!("clap requires one key origin"),
        };
        RunSpec {
            gamma: self.gamma,
            threads: self.threads,
            max_levels: self.max_levels,
            rank_interval: self.rank_interval,
            seed: self.seed,
            bench: self.bench,
            nodisk: self.nodisk,
            in_memory: self.in_memory,
            onthefly: self.onthefly,
            output: self.output,
            temp_dir: self.temp_dir,
            ..RunSpec::new(origin)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let spec = Args::parse().into_spec();
    let stdout = std::io::stdout();
    match run(&spec, &mut stdout.lock()) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bbmph: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
