// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use proptest::prelude::*;

use common::*;
use trace_core::archive::{read_jsonl, read_trajectory_archive, write_jsonl, write_trajectory_archive};
use trace_core::engine::{run_batch, EngineConfig, Verdict};
use trace_core::HyperParameters;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn trajectory_archives_round_trip_exactly(seed in any::<u64>(), count in 1usize..12) {
        let items = random_corpus(seed, count, CorpusShape::default());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("items.jsonl");
        write_trajectory_archive(&items, &path).unwrap();
        let back = read_trajectory_archive(&path).unwrap();
        prop_assert_eq!(&back, &items);

        let again = dir.path().join("again.jsonl");
        write_trajectory_archive(&back, &again).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }
}

#[test]
fn logit_free_items_round_trip() {
    let mut items = random_corpus(3, 5, CorpusShape::default());
    for item in &mut items {
        item.logits.clear();
        item.trajectory.truthful_indices = None;
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bare.jsonl");
    write_trajectory_archive(&items, &path).unwrap();
    assert_eq!(read_trajectory_archive(&path).unwrap(), items);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(!text.contains("position_depth_logits"));
}

#[test]
fn verdict_streams_round_trip() {
    let items = random_corpus(4, 60, CorpusShape::default());
    let verdicts = run_batch(&items, &EngineConfig::new(HyperParameters::default(), 2.5), 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("verdicts.jsonl");
    write_jsonl(&verdicts, &path).unwrap();
    let back: Vec<Verdict> = read_jsonl(&path).unwrap();
    assert_eq!(back, verdicts);
}

#[test]
fn corrupted_archive_names_the_line() {
    let items = random_corpus(5, 3, CorpusShape::default());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("items.jsonl");
    write_trajectory_archive(&items, &path).unwrap();
    let mut lines: Vec<String> = std::fs::read_to_string(&path).unwrap().lines().map(String::from).collect();
    lines[2] = lines[2].replacen("\"n\":", "\"n_candidates\":", 1);
    std::fs::write(&path, lines.join("\n")).unwrap();
    let err = read_trajectory_archive(&path).unwrap_err().to_string();
    assert!(err.contains("line 3"), "{err}");
}
