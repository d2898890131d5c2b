use std::collections::HashSet;

use proptest::prelude::*;
use snn_core::datasets::pavlov::{gen_pavlov, PavlovConfig};
use snn_core::datasets::pong::{gen_pong, PongConfig};
use snn_core::datasets::{Dataset, DatasetError};

#[test]
fn distinct_seeds_give_distinct_pavlov_files() {
    let mut seen = HashSet::new();
    for seed in 0..100u64 {
        let d = gen_pavlov(&PavlovConfig { episodes: 16, seed, ..Default::default() }).unwrap();
        assert!(seen.insert(d.content_hash()), "seed {seed} collides");
    }
}

#[test]
fn distinct_seeds_give_distinct_pong_files() {
    let mut seen = HashSet::new();
    for seed in 0..100u64 {
        let d = gen_pong(&PongConfig { episodes: 4, seed, ..Default::default() }).unwrap();
        assert!(seen.insert(d.content_hash()), "seed {seed} collides");
    }
}

#[test]
fn same_seed_same_bytes() {
    let cfg = PongConfig { episodes: 10, seed: 42, ..Default::default() };
    assert_eq!(gen_pong(&cfg).unwrap().to_bytes(), gen_pong(&cfg).unwrap().to_bytes());
    let cfg = PavlovConfig { episodes: 50, seed: 42, ..Default::default() };
    assert_eq!(gen_pavlov(&cfg).unwrap().to_bytes(), gen_pavlov(&cfg).unwrap().to_bytes());
}

#[test]
fn files_survive_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pavlov.jsonl");
    let d = gen_pavlov(&PavlovConfig { episodes: 30, ..Default::default() }).unwrap();
    d.save(&path).unwrap();
    let back = Dataset::load(&path).unwrap();
    assert_eq!(back.episodes, d.episodes);
    assert_eq!(back.content_hash(), d.content_hash());
}

#[test]
fn truncated_file_reports_a_line() {
    let d = gen_pong(&PongConfig { episodes: 3, ..Default::default() }).unwrap();
    let bytes = d.to_bytes();
    let cut = &bytes[..bytes.len() - 20];
    match Dataset::read_from(cut) {
        Err(DatasetError::Parse { line, .. }) => assert!(line >= 2),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn every_pavlov_episode_is_well_formed(seed in 0u64..10_000, k in 1usize..4) {
        let d = gen_pavlov(&PavlovConfig { episodes: 8, seed, k, ..Default::default() }).unwrap();
        for ep in &d.episodes {
            prop_assert!(ep.check(d.dims()).is_ok());
            prop_assert!(ep.x.iter().flatten().all(|&v| v == 0.0 || v == 1.0));
        }
    }
}
