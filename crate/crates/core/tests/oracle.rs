mod common;

use opforge_core::pipeline::{extract, ExtractConfig};

fn loop_free_corpus() -> Vec<(String, opforge_core::ir::IRModule)> {
    common::corpus().into_iter().filter(|(_, m)| common::loop_free(m)).collect()
}

#[test]
fn corpus_has_enough_loop_free_operators() {
    assert!(loop_free_corpus().len() >= 12);
}

#[test]
fn every_valid_input_satisfies_some_path() {
    for (name, m) in loop_free_corpus() {
        let ex = extract(&m, &ExtractConfig::default()).unwrap();
        let r = common::brute_force(&m, &ex, &common::oracle_bounds());
        assert!(r.enumerated > 0, "{name}");
        assert_eq!(r.uncovered, 0, "{name}: {:?}", r.first_uncovered);
        assert_eq!(r.unsound, 0, "{name}: {:?}", r.first_unsound);
    }
}

#[test]
fn sampled_constrained_cases_never_fail_validation() {
    for (name, m) in loop_free_corpus() {
        let ex = extract(&m, &ExtractConfig::default()).unwrap();
        for seed in [0, 1, 2] {
            let r = common::sampled_cases(&m, &ex, seed, 300);
            assert!(r.cases > 0, "{name}");
            assert_eq!(r.rejected + r.validation_crashes, 0, "{name}: {:?}", r.first_bad);
        }
    }
}
