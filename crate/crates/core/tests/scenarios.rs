mod common;

use std::collections::BTreeSet;

use common::*;
use questprobe::harness::{reachable, scenario_files};
use questprobe::sim::{Difficulty, FaultKind, CRASH_NODE};

/// Published sizes of the ten Game A tasks: (difficulty, states, effective actions).
const REFERENCE: [(Difficulty, usize, usize); 10] = [
    (Difficulty::Simple, 9, 6),
    (Difficulty::Simple, 11, 8),
    (Difficulty::Simple, 15, 8),
    (Difficulty::Normal, 14, 11),
    (Difficulty::Normal, 19, 11),
    (Difficulty::Normal, 20, 13),
    (Difficulty::Normal, 26, 18),
    (Difficulty::Hard, 23, 21),
    (Difficulty::Hard, 32, 25),
    (Difficulty::Hard, 33, 27),
];
const TOLERANCE: usize = 2;

#[test]
fn corpus_has_ten_tasks_in_order() {
    let files = scenario_files(&[game_a().join("tasks")]).unwrap();
    let names: Vec<String> = files.iter().map(|p| p.file_stem().unwrap().to_string_lossy().into_owned()).collect();
    let want: Vec<String> = (1..=10).map(|n| format!("t{n:02}")).collect();
    assert_eq!(names, want);
    let ids: BTreeSet<String> = all_tasks().into_iter().map(|s| s.id).collect();
    assert_eq!(ids.len(), 10);
}

#[test]
fn sizes_match_the_reference_within_tolerance() {
    let meta = meta();
    for (spec, (difficulty, states, actions)) in all_tasks().iter().zip(REFERENCE) {
        assert_eq!(spec.difficulty, difficulty, "{}", spec.id);
        let g = reachable(spec, &meta, 100_000).unwrap();
        let n_actions = g.effective_actions().len();
        assert!(g.nodes.len().abs_diff(states) <= TOLERANCE, "{}: {} states vs {states}", spec.id, g.nodes.len());
        assert!(n_actions.abs_diff(actions) <= TOLERANCE, "{}: {n_actions} actions vs {actions}", spec.id);
    }
}

#[test]
fn harder_tiers_are_larger_on_average() {
    let meta = meta();
    let mean = |tier: Difficulty| {
        let sizes: Vec<usize> = all_tasks()
            .iter()
            .filter(|s| s.difficulty == tier)
            .map(|s| reachable(s, &meta, 100_000).unwrap().nodes.len())
            .collect();
        sizes.iter().sum::<usize>() as f64 / sizes.len() as f64
    };
    assert!(mean(Difficulty::Simple) < mean(Difficulty::Normal));
    assert!(mean(Difficulty::Normal) < mean(Difficulty::Hard));
}

#[test]
fn seeded_faults_are_five_crashes_two_hangs_two_logic() {
    let faults: Vec<(String, FaultKind)> =
        all_tasks().into_iter().flat_map(|s| s.faults.into_iter().map(move |f| (s.id.clone(), f.kind))).collect();
    let count = |p: fn(&FaultKind) -> bool| faults.iter().filter(|(_, k)| p(k)).count();
    assert_eq!(faults.len(), 9);
    assert_eq!(count(|k| *k == FaultKind::Crash), 5);
    assert_eq!(count(|k| matches!(k, FaultKind::HangInteraction { .. })), 2);
    assert_eq!(count(|k| matches!(k, FaultKind::LogicStepCount { .. })), 2);
}

#[test]
fn crash_faults_are_reachable_and_other_tasks_completable() {
    let meta = meta();
    for spec in all_tasks() {
        let g = reachable(&spec, &meta, 100_000).unwrap();
        let crashes = spec.faults.iter().any(|f| f.kind == FaultKind::Crash);
        assert!(!g.nodes.contains(CRASH_NODE));
        assert_eq!(g.edges.iter().any(|(_, _, to)| to == CRASH_NODE), crashes, "{}", spec.id);
        assert_eq!(g.completable, !crashes, "{}", spec.id);
    }
}
