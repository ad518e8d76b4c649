mod common;

use common::{reaches_fail, source, Exit};

use std::collections::BTreeSet;

use opforge_core::ir::{build_cfg, find_error_sites, parse_module, ErrorPatterns};
use opforge_core::pipeline::{extract, ExtractConfig};
use opforge_core::valpath::{
    identify_validation_blocks, reachability_check, validation_anchors, PathExit, ReachCaches, DEFAULT_BUDGET,
};
use proptest::prelude::*;

fn term(n: usize) -> impl Strategy<Value = Exit> {
    prop_oneof![
        3 => (0..n, 0..n).prop_map(|(a, b)| Exit::Br(a, b)),
        2 => (0..n).prop_map(Exit::Jmp),
        1 => Just(Exit::Ret),
        1 => Just(Exit::Fail),
    ]
}

fn cfg_strategy() -> impl Strategy<Value = Vec<Exit>> {
    (1usize..=50).prop_flat_map(|n| prop::collection::vec(term(n), n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn reach_caches_stay_coherent(blocks in cfg_strategy(), queries in prop::collection::vec(0usize..50, 1..80)) {
        let m = parse_module(&source(&blocks)).unwrap();
        let cfg = build_cfg(m.main());
        let anchors = validation_anchors(&m, &find_error_sites(&m, &ErrorPatterns::default()));
        let truth = reaches_fail(&blocks);
        let mut shared = ReachCaches::new(anchors.iter().copied());
        for q in queries.into_iter().map(|q| q % blocks.len()) {
            let cached = reachability_check(q, &mut shared, &cfg);
            let fresh = reachability_check(q, &mut ReachCaches::new(anchors.iter().copied()), &cfg);
            prop_assert_eq!(cached, fresh);
            prop_assert_eq!(cached, truth[q]);
            prop_assert!(shared.reachable_cache.is_disjoint(&shared.unreachable_cache));
            prop_assert!(shared.reachable_cache.iter().all(|&b| truth[b]));
            prop_assert!(shared.unreachable_cache.iter().all(|&b| !truth[b]));
        }
    }

    #[test]
    fn budget_fallback_never_misclassifies(blocks in cfg_strategy(), budget in 1u64..40) {
        let m = parse_module(&source(&blocks)).unwrap();
        let cfg = build_cfg(m.main());
        let anchors = validation_anchors(&m, &find_error_sites(&m, &ErrorPatterns::default()));
        let truth: BTreeSet<usize> =
            reaches_fail(&blocks).iter().enumerate().filter(|(_, &r)| r).map(|(i, _)| i).collect();
        let full = identify_validation_blocks(&cfg, &anchors, DEFAULT_BUDGET).unwrap();
        let tight = identify_validation_blocks(&cfg, &anchors, budget).unwrap();
        prop_assert!(!full.budget_hit);
        prop_assert_eq!(&full.blocks, &truth);
        prop_assert_eq!(&tight.blocks, &truth);
        prop_assert!(tight.expansions <= budget);
        for e in &tight.frontier {
            prop_assert!(tight.contains(e.from) && !tight.contains(e.to));
        }
    }
}

#[test]
fn operator_a_validation_blocks() {
    let m = common::load("operator_a");
    let ex = extract(&m, &ExtractConfig::default()).unwrap();
    let labels: Vec<&str> = ex.vset.blocks.iter().map(|&b| m.main().blocks[b].label.as_str()).collect();
    assert_eq!(labels, ["entry", "channels_last", "channels_first", "check", "invalid"]);
    assert!(!ex.vset.budget_hit);
    let to: Vec<&str> = ex.vset.frontier.iter().map(|e| m.main().blocks[e.to].label.as_str()).collect();
    assert_eq!(to, ["compute"]);
}

#[test]
fn operator_a_keeps_two_paths_and_ejects_two() {
    let m = common::load("operator_a");
    let ex = extract(&m, &ExtractConfig::default()).unwrap();
    assert_eq!(ex.paths.retained.len(), 2);
    assert_eq!(ex.paths.ejected_count, 2);
    assert!(ex.paths.retained.iter().all(|p| p.exit == PathExit::Functional));
    assert!(ex.paths.ejected.iter().all(|p| p.exit == PathExit::Error));
    assert!(!ex.paths.truncated);
}

#[test]
fn validation_set_is_sound_on_the_corpus() {
    for (name, m) in common::corpus() {
        let sites = find_error_sites(&m, &ErrorPatterns::default());
        let anchors = validation_anchors(&m, &sites);
        let cfg = build_cfg(m.main());
        let v = identify_validation_blocks(&cfg, &anchors, DEFAULT_BUDGET).unwrap();
        for &b in &v.blocks {
            let mut seen = BTreeSet::from([b]);
            let mut stack = vec![b];
            let mut hit = false;
            while let Some(x) = stack.pop() {
                hit |= anchors.contains(&x);
                for e in cfg.succs(x) {
                    if seen.insert(e.to) {
                        stack.push(e.to);
                    }
                }
            }
            assert!(hit, "{name}: block {b} reaches no error site");
        }
    }
}

#[test]
fn paths_step_along_cfg_edges_and_take_back_edges_once() {
    for (name, m) in common::corpus() {
        let ex = extract(&m, &ExtractConfig::default()).unwrap();
        let main = m.main_index();
        let cfg = build_cfg(m.main());
        for p in ex.paths.retained.iter().chain(&ex.paths.ejected) {
            let mains: Vec<_> = p.steps.iter().filter(|s| s.func == main && s.depth == 0).collect();
            for w in mains.windows(2) {
                let same = w[0].block == w[1].block && w[0].end as usize != m.main().blocks[w[0].block].instrs.len();
                let edge = cfg.succs(w[0].block).iter().any(|e| e.to == w[1].block);
                assert!(same || edge || w[1].start > 0, "{name}: {} -> {}", w[0].block, w[1].block);
            }
            let back: Vec<_> = p.steps.iter().filter(|s| s.via_back_edge && s.func == main).map(|s| s.block).collect();
            let uniq: BTreeSet<_> = back.iter().collect();
            assert_eq!(back.len(), uniq.len(), "{name}: back edge repeated");
        }
    }
}

#[test]
fn path_ids_are_stable() {
    let m = common::load("operator_a");
    let a = extract(&m, &ExtractConfig::default()).unwrap();
    let b = extract(&common::load("operator_a"), &ExtractConfig::default()).unwrap();
    let ids = |e: &opforge_core::pipeline::Extraction| e.paths.retained.iter().map(|p| p.id.clone()).collect::<Vec<_>>();
    assert_eq!(ids(&a), ids(&b));
    assert_eq!(ids(&a), ["f8ef1f56c2fdf547", "15e352cfe594527b"]);
}
