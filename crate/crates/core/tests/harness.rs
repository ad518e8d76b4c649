mod common;

use std::collections::BTreeMap;
use std::time::Duration;

use opforge_core::harness::{
    dedup_crashes, run_campaign, run_case, CampaignLimits, CrashKind, Outcome, RunLimits, StopReason, Verdict, Worker,
};
use opforge_core::ir::{parse_module, IRModule};
use opforge_core::pipeline::{constrained_cases, extract, sample_paths, ExtractConfig};
use opforge_core::solve::SolverConfig;
use opforge_core::testgen::{random_baseline, ConcreteValue, GenConfig, Provenance, TestCase, SCHEMA_VERSION};
use proptest::prelude::*;

const TOY: &str = r#"
op "Toy" api "t.Toy" {
  param x: tensor
  attr z: int
  attr mode: int
  fn @main {
  entry:
    %x = get_input "x"
    %z = get_attr "z"
    %m = get_attr "mode"
    %nd = ndim %x
    %ok = icmp sle %nd, 2
    br %ok, body, bad
  bad:
    fail "bad shape"
  body:
    %m0 = icmp eq %m, 0
    br %m0, divide, m1
  divide:
    %q = sdiv 10, %z
    sink %q
    ret
  m1:
    %is1 = icmp eq %m, 1
    br %is1, oob, m2
  oob:
    %v = read %x, %z
    sink %v
    ret
  m2:
    %is2 = icmp eq %m, 2
    br %is2, abort, m3
  abort:
    %neg = icmp slt %z, 0
    abort_if %neg
    ret
  m3:
    %is3 = icmp eq %m, 3
    br %is3, spin, done
  spin:
    jmp spin
  done:
    ret
  }
}
"#;

fn toy() -> IRModule {
    parse_module(TOY).unwrap()
}

fn tc(ndim: usize, z: i64, mode: i64) -> TestCase {
    let values = BTreeMap::from([
        (
            "x".to_string(),
            ConcreteValue::Tensor { dtype: 0, shape: vec![2; ndim], fill_seed: 1, explicit_elements: None },
        ),
        ("z".to_string(), ConcreteValue::Int { value: z }),
        ("mode".to_string(), ConcreteValue::Int { value: mode }),
    ]);
    TestCase {
        schema: SCHEMA_VERSION,
        op_name: "Toy".into(),
        values,
        provenance: Provenance { path_id: None, solution_id: None, mutated: false, seed: 0 },
    }
}

fn run(t: &TestCase) -> Verdict {
    run_case(&toy(), t, Duration::from_secs(1)).unwrap().verdict
}

fn crash(kind: CrashKind, site: &str) -> (CrashKind, String) {
    (kind, site.to_string())
}

fn crash_of(v: &Verdict) -> Option<(CrashKind, String)> {
    match v {
        Verdict::Crash { kind, site, .. } => Some((*kind, site.clone())),
        _ => None,
    }
}

#[test]
fn fail_is_reject_with_message() {
    assert_eq!(run(&tc(3, 1, 4)), Verdict::Reject { message: "bad shape".into() });
}

#[test]
fn division_by_zero_is_fpe_at_the_instruction() {
    assert_eq!(crash_of(&run(&tc(1, 0, 0))), Some(crash(CrashKind::Fpe, "@main/divide#0")));
    assert!(run(&tc(1, 3, 0)).is_pass());
}

#[test]
fn out_of_bounds_read_is_segv() {
    assert_eq!(crash_of(&run(&tc(1, 2, 1))), Some(crash(CrashKind::Segv, "@main/oob#0")));
    assert_eq!(crash_of(&run(&tc(1, -1, 1))), Some(crash(CrashKind::Segv, "@main/oob#0")));
    assert!(run(&tc(1, 1, 1)).is_pass());
}

#[test]
fn abort_if_true_is_abrt() {
    assert_eq!(crash_of(&run(&tc(0, -1, 2))), Some(crash(CrashKind::Abrt, "@main/abort#1")));
    assert!(run(&tc(0, 1, 2)).is_pass());
}

#[test]
fn step_limit_is_timeout() {
    let m = toy();
    let mut w = Worker::new(&m, RunLimits { step_limit: 500, timeout: Duration::from_secs(5) });
    let out = w.run(&tc(0, 0, 3)).unwrap();
    assert_eq!(out.verdict.crash_kind(), Some(CrashKind::Timeout));
}

#[test]
fn malformed_case_is_a_harness_error() {
    let mut t = tc(1, 1, 4);
    t.values.remove("z");
    assert!(run_case(&toy(), &t, Duration::from_secs(1)).is_err());
    let mut t = tc(1, 1, 4);
    t.values.insert("z".into(), ConcreteValue::Str { value: "a".into() });
    assert!(run_case(&toy(), &t, Duration::from_secs(1)).is_err());
}

#[test]
fn pass_rate_is_passes_over_rounds() {
    let cases: Vec<TestCase> = (0..8).map(|i| if i % 2 == 0 { tc(1, 1, 4) } else { tc(3, 1, 4) }).collect();
    let r = run_campaign(&toy(), cases, &CampaignLimits { rounds: 8, ..CampaignLimits::default() }).unwrap();
    assert_eq!((r.rounds, r.passes, r.rejects), (8, 4, 4));
    assert_eq!(r.pass_rate, 0.5);
    assert_eq!(r.stop_reason, StopReason::Rounds);
}

#[test]
fn crash_cap_stops_the_campaign() {
    let cases = vec![tc(1, 0, 0); 60];
    let r = run_campaign(&toy(), cases, &CampaignLimits::default()).unwrap();
    assert_eq!(r.stop_reason, StopReason::CrashCap);
    assert_eq!((r.rounds, r.crashes), (50, 50));
    assert_eq!(r.worker_resets, 50);
    assert_eq!(r.bugs.len(), 1);
    assert_eq!(r.bugs[0].hits, 50);
}

#[test]
fn timeouts_count_towards_the_cap() {
    let mut lim = CampaignLimits { crash_cap: 3, case_step_limit: 200, ..CampaignLimits::default() };
    lim.rounds = 10;
    let cases = vec![tc(0, 0, 3), tc(1, 0, 0), tc(0, 0, 3), tc(1, 1, 4)];
    let r = run_campaign(&toy(), cases, &lim).unwrap();
    assert_eq!((r.timeouts, r.crashes, r.rounds), (2, 1, 3));
    assert_eq!(r.stop_reason, StopReason::CrashCap);
}

#[test]
fn short_stream_is_flagged() {
    let r = run_campaign(&toy(), vec![tc(1, 1, 4)], &CampaignLimits::default()).unwrap();
    assert_eq!(r.stop_reason, StopReason::StreamExhausted);
    assert_eq!(r.rounds, 1);
}

fn outcomes(cases: &[TestCase]) -> Vec<(usize, TestCase, Outcome)> {
    let m = toy();
    cases
        .iter()
        .enumerate()
        .map(|(i, t)| (i + 1, t.clone(), run_case(&m, t, Duration::from_secs(1)).unwrap()))
        .collect()
}

#[test]
fn dedup_groups_by_kind_and_site() {
    let mut cases = vec![tc(1, 0, 0); 10];
    cases.extend([tc(1, 9, 1), tc(1, -7, 1)]);
    let d = dedup_crashes(&toy(), &outcomes(&cases), RunLimits::default());
    assert_eq!(d.bugs.len(), 2);
    let hits: Vec<(CrashKind, usize)> = d.bugs.iter().map(|b| (b.kind, b.hits)).collect();
    assert_eq!(hits, [(CrashKind::Fpe, 10), (CrashKind::Segv, 2)]);
    assert!(d.unreproduced.is_empty());
}

#[test]
fn non_reproducing_crash_is_unreproduced() {
    let mut o = outcomes(&[tc(1, 1, 4)]);
    o[0].2.verdict = Verdict::Crash { kind: CrashKind::Fpe, site: "@main/divide#0".into(), main_block: 3 };
    let d = dedup_crashes(&toy(), &o, RunLimits::default());
    assert!(d.bugs.is_empty());
    assert_eq!(d.unreproduced.len(), 1);
}

#[test]
fn no_outcomes_no_bugs() {
    let d = dedup_crashes(&toy(), &[], RunLimits::default());
    assert!(d.bugs.is_empty() && d.unreproduced.is_empty());
}

#[test]
fn sampled_operator_a_cases_replay_along_their_path() {
    let m = common::load("operator_a");
    let ex = extract(&m, &ExtractConfig::default()).unwrap();
    let samples = sample_paths(&ex, &SolverConfig::default());
    let gen = GenConfig { p_extreme: 0.0, ..GenConfig::default() };
    let mut w = Worker::new(&m, RunLimits::default());
    let main = m.main_index();
    let mut passes = 0;
    for t in constrained_cases(&m, &samples, &gen).take(64) {
        let out = w.run(&t).unwrap();
        assert!(!out.verdict.is_reject(), "{out:?}");
        if out.verdict.crash_kind().is_some() {
            w.reset();
            continue;
        }
        passes += 1;
        let path = ex.paths.retained.iter().find(|p| Some(&p.id) == t.provenance.path_id.as_ref()).unwrap();
        for (f, b, d) in path.taken_dirs().into_iter().filter(|&(f, _, _)| f == main) {
            assert!(out.covered_edges.contains(&w.edges().edge(f, b, d)));
        }
    }
    assert!(passes > 32);
}

fn corpus_case() -> impl Strategy<Value = (usize, u64)> {
    (0..common::corpus().len(), any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn replay_is_deterministic((i, seed) in corpus_case()) {
        let (_, m) = &common::corpus()[i];
        let gen = GenConfig { seed, ..GenConfig::default() };
        let t = random_baseline(&m.meta, &m.literals, &gen);
        let a = run_case(m, &t, Duration::from_secs(1)).unwrap();
        let b = run_case(m, &t, Duration::from_secs(1)).unwrap();
        prop_assert_eq!(&a, &b);
        // A worker that already ran other cases gives the same outcome.
        let mut w = Worker::new(m, RunLimits::default());
        for k in 0..3 {
            let other = random_baseline(&m.meta, &m.literals, &gen.with_seed(seed ^ (k + 1)));
            if w.run(&other).unwrap().verdict.crash_kind().is_some() {
                w.reset();
            }
        }
        prop_assert_eq!(w.run(&t).unwrap(), a.clone());
        prop_assert!(a.covered_edges.iter().all(|&e| (e as usize) < w.edges().total));
    }

    #[test]
    fn coverage_is_nondecreasing((i, seed) in corpus_case()) {
        let (_, m) = &common::corpus()[i];
        let gen = GenConfig { seed, ..GenConfig::default() };
        let cases: Vec<TestCase> = (0..40).map(|k| random_baseline(&m.meta, &m.literals, &gen.with_seed(seed.wrapping_add(k)))).collect();
        let r = run_campaign(m, cases, &CampaignLimits { rounds: 40, ..CampaignLimits::default() }).unwrap();
        prop_assert!(r.coverage.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(r.coverage.len(), r.rounds);
        prop_assert_eq!(r.passes + r.rejects + r.crashes + r.timeouts, r.rounds);
    }
}
