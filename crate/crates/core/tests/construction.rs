use std::collections::HashSet;
use std::io::Write;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bbmph::analysis::{binomial_band, predict_level_fraction};
use bbmph::codec::{decode, encode};
use bbmph::keygen::{generate_keys, generate_strings};
use bbmph::{
    build, BuildConfig, BuildError, HashKey, HashSeed, IterSource, LineFileSource, Mphf,
    Placement, QueryError, SliceSource, Strategy,
};

fn config(gamma: f64, strategy: Strategy, workers: usize, dir: &std::path::Path) -> BuildConfig {
    BuildConfig {
        gamma,
        strategy,
        workers,
        temp_dir: dir.to_path_buf(),
        ..BuildConfig::default()
    }
}

fn sorted_indices<K: HashKey>(mphf: &Mphf, keys: &[K]) -> Vec<u64> {
    let mut out: Vec<u64> = keys.iter().map(|k| mphf.query(k).unwrap()).collect();
    out.sort_unstable();
    out
}

fn spill_files(dir: &std::path::Path) -> usize {
    std::fs::read_dir(dir).unwrap().count()
}

#[test]
fn every_strategy_and_thread_count_is_minimal_and_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let keys = generate_keys(50_000, 1).to_vec();
    let identity: Vec<u64> = (0..keys.len() as u64).collect();
    for strategy in [Strategy::DiskSpill, Strategy::RescanInput, Strategy::InMemory] {
        for workers in [1, 3, 8] {
            for gamma in [1.0, 1.5, 5.0] {
                let cfg = config(gamma, strategy, workers, dir.path());
                let (mphf, report) = build(&mut SliceSource::new(&keys), &cfg).unwrap();
                assert_eq!(sorted_indices(&mphf, &keys), identity, "{strategy:?} {workers} {gamma}");
                assert_eq!(report.level_weights.iter().sum::<u64>() + report.fallback_count, report.n);
            }
        }
    }
    assert_eq!(spill_files(dir.path()), 0);
}

#[test]
fn fallback_fraction_with_three_levels() {
    let n = 100_000u64;
    let keys = generate_keys(n, 2).to_vec();
    let cfg = BuildConfig {
        gamma: 1.0,
        max_levels: 3,
        strategy: Strategy::InMemory,
        ..BuildConfig::default()
    };
    let (mphf, report) = build(&mut SliceSource::new(&keys), &cfg).unwrap();
    assert_eq!(report.level_sizes.len(), 3);
    assert_eq!(mphf.fallback().len() as u64, report.fallback_count);

    // Independent oracle: throw balls into bins with a generic RNG, three
    // rounds, and keep the balls that shared a bin each time.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut remaining = n as usize;
    for _ in 0..3 {
        let mut hits = vec![0u32; remaining];
        let throws: Vec<usize> = (0..remaining).map(|_| rng.gen_range(0..remaining)).collect();
        for &t in &throws {
            hits[t] += 1;
        }
        remaining = throws.iter().filter(|&&t| hits[t] > 1).count();
    }
    let p = predict_level_fraction(1.0, 3);
    assert!((p - 0.2525).abs() < 1e-4);
    let (mean, sigma) = binomial_band(n, p);
    for observed in [report.fallback_count as f64, remaining as f64] {
        assert!((observed - mean).abs() <= 3.0 * sigma, "{observed} vs {mean} +- {sigma}");
    }

    // the fallback owns the tail of the range
    let tail: HashSet<u64> = mphf.fallback().entries().iter().map(|(_, i)| *i).collect();
    let start = n - report.fallback_count;
    assert_eq!(tail, (start..n).collect());
    for k in keys.iter().take(5_000) {
        let index = mphf.query(k).unwrap();
        let fell_back = mphf.query_level(k).unwrap() == Placement::Fallback;
        assert_eq!(fell_back, index >= start);
    }
}

#[test]
fn level_placement_fraction_per_level() {
    let n = 200_000u64;
    let keys = generate_keys(n, 3).to_vec();
    for gamma in [1.0, 2.0, 4.0] {
        let cfg = BuildConfig {
            gamma,
            strategy: Strategy::InMemory,
            ..BuildConfig::default()
        };
        let (_, report) = build(&mut SliceSource::new(&keys), &cfg).unwrap();
        let expected = (-1.0 / gamma).exp();
        for d in 0..3 {
            let placed = report.level_weights[d] as f64 / report.level_sizes[d] as f64;
            assert!((placed - expected).abs() < 0.05 * expected, "gamma {gamma} level {d}: {placed}");
        }
    }
}

#[test]
fn string_and_line_file_builds() {
    let dir = tempfile::tempdir().unwrap();
    let strings = generate_strings(20_000, 18, 4).unwrap().to_vec();
    let path = dir.path().join("keys.txt");
    let mut file = std::fs::File::create(&path).unwrap();
    for s in &strings {
        file.write_all(s).unwrap();
        file.write_all(b"\n").unwrap();
    }
    drop(file);

    let spill = tempfile::tempdir().unwrap();
    let identity: Vec<u64> = (0..strings.len() as u64).collect();
    let mut images = Vec::new();
    for strategy in [Strategy::DiskSpill, Strategy::RescanInput, Strategy::InMemory] {
        let cfg = config(2.0, strategy, 2, spill.path());
        let mut source = LineFileSource::open(&path).unwrap();
        let (from_file, _) = build(&mut source, &cfg).unwrap();
        let (from_memory, _) = build(&mut SliceSource::new(&strings), &cfg).unwrap();
        assert_eq!(sorted_indices(&from_file, &strings), identity);
        let as_str: Vec<String> = strings.iter().map(|s| String::from_utf8(s.clone()).unwrap()).collect();
        assert_eq!(sorted_indices(&from_file, &as_str), identity);
        images.push(encode(&from_file));
        images.push(encode(&from_memory));
    }
    assert!(images.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(spill_files(spill.path()), 0);
}

#[test]
fn one_shot_iterator_source() {
    let dir = tempfile::tempdir().unwrap();
    let keys = generate_keys(30_000, 5).to_vec();
    let cfg = config(2.0, Strategy::DiskSpill, 1, dir.path());
    let (mphf, report) = build(&mut IterSource::new(keys.clone().into_iter()), &cfg).unwrap();
    assert_eq!(sorted_indices(&mphf, &keys), (0..30_000).collect::<Vec<u64>>());
    assert!(report.peak_spill_bytes >= report.input_bytes);
    let reference = build(&mut SliceSource::new(&keys), &cfg).unwrap().0;
    assert_eq!(encode(&mphf), encode(&reference));

    let rescan = config(2.0, Strategy::RescanInput, 1, dir.path());
    assert!(matches!(
        build(&mut IterSource::new(keys.into_iter()), &rescan),
        Err(BuildError::NotRewindable)
    ));
    assert_eq!(spill_files(dir.path()), 0);
}

#[test]
fn duplicate_keys_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut keys = generate_keys(10_000, 6).to_vec();
    keys.push(keys[1234]);
    for strategy in [Strategy::DiskSpill, Strategy::RescanInput, Strategy::InMemory] {
        let cfg = config(2.0, strategy, 2, dir.path());
        match build(&mut SliceSource::new(&keys), &cfg) {
            Err(BuildError::DuplicateKeys { .. }) => {}
            other => panic!("{strategy:?}: {:?}", other.map(|(m, _)| m.len())),
        }
    }
    assert_eq!(spill_files(dir.path()), 0);
}

#[test]
fn decoded_structures_answer_identically() {
    let keys = generate_keys(40_000, 7).to_vec();
    for (gamma, max_levels) in [(1.0, 2), (2.0, 25), (3.0, 1)] {
        let cfg = BuildConfig {
            gamma,
            max_levels,
            strategy: Strategy::InMemory,
            ..BuildConfig::default()
        };
        let (mphf, _) = build(&mut SliceSource::new(&keys), &cfg).unwrap();
        let bytes = encode(&mphf);
        let decoded = decode(&bytes).unwrap();
        assert_eq!(encode(&decoded), bytes);
        for k in keys.iter().step_by(4) {
            assert_eq!(decoded.query(k), mphf.query(k));
        }
    }
}

#[test]
fn non_members_reach_the_fallback_and_fail() {
    let keys = generate_keys(20_000, 8).to_vec();
    let cfg = BuildConfig {
        gamma: 1.0,
        max_levels: 1,
        strategy: Strategy::InMemory,
        ..BuildConfig::default()
    };
    let (mphf, _) = build(&mut SliceSource::new(&keys), &cfg).unwrap();
    let members: HashSet<u64> = keys.iter().copied().collect();
    let mut failures = 0;
    for probe in (0..5_000u64).map(|i| i.wrapping_mul(0x2545_f491_4f6c_dd1d)) {
        if members.contains(&probe) {
            continue;
        }
        match mphf.query(&probe) {
            Ok(i) => assert!(i < keys.len() as u64),
            Err(QueryError::NotInFallback) => failures += 1,
        }
    }
    assert!(failures > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn output_depends_only_on_keys_and_seed(
        key_seed in any::<u64>(),
        hash_seed in any::<u64>(),
        n in 1u64..5_000,
        gamma in 1.0f64..4.0,
        max_levels in 1usize..6,
        interval in 1u32..2048,
    ) {
        let dir = tempfile::tempdir().unwrap();
        let keys = generate_keys(n, key_seed).to_vec();
        let mut images = Vec::new();
        for strategy in [Strategy::DiskSpill, Strategy::RescanInput, Strategy::InMemory] {
            for workers in [1, 4] {
                let cfg = BuildConfig {
                    gamma,
                    workers,
                    max_levels,
                    rank_interval: interval,
                    strategy,
                    spill_to_memory_threshold: 0.0,
                    seed: HashSeed::new(hash_seed),
                    temp_dir: dir.path().to_path_buf(),
                };
                let (mphf, _) = build(&mut SliceSource::new(&keys), &cfg).unwrap();
                prop_assert_eq!(sorted_indices(&mphf, &keys), (0..n).collect::<Vec<u64>>());
                images.push(encode(&mphf));
            }
        }
        prop_assert!(images.windows(2).all(|w| w[0] == w[1]));
    }
}
