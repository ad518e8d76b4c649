//! Shared helpers for the integration tests: corpus loading and the bounded
//! brute-force oracle.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use opforge_core::harness::{RunLimits, Verdict, Worker};
use opforge_core::ir::{build_cfg, parse_module, IRModule, Op, Operand, ValueId};
use opforge_core::pipeline::Extraction;
use opforge_core::registry::ParamType;
use opforge_core::solve::evaluate;
use opforge_core::symprop::SizeBounds;
use opforge_core::testgen::{project, ConcreteValue, Provenance, TestCase, SCHEMA_VERSION};

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus"))
}

pub fn load(name: &str) -> IRModule {
    let path = corpus_dir().join(format!("{name}.ovir"));
    let src = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_module(&src).unwrap_or_else(|d| panic!("{}: {d}", path.display()))
}

/// Every corpus module, sorted by file name.
pub fn corpus() -> Vec<(String, IRModule)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .expect("corpus directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "ovir"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let stem = p.file_stem().unwrap().to_string_lossy().into_owned();
            (stem.clone(), load(&stem))
        })
        .collect()
}

/// `main` contains no loop.
pub fn loop_free(m: &IRModule) -> bool {
    build_cfg(m.main()).loop_blocks().iter().all(|b| !b)
}

/// Planted sites as (block label, kind), read from `# planted: KIND` comments.
pub fn planted_sites(name: &str) -> Vec<(String, String)> {
    let src = std::fs::read_to_string(corpus_dir().join(format!("{name}.ovir"))).unwrap();
    let mut func = String::new();
    let mut label = String::new();
    let mut out = Vec::new();
    for line in src.lines() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix("fn @") {
            func = rest.split(['(', ' ']).next().unwrap_or("").to_string();
        } else if t.ends_with(':') && !t.contains(' ') {
            label = t.trim_end_matches(':').to_string();
        }
        if let Some((_, kind)) = t.split_once("# planted:") {
            out.push((format!("@{func}/{label}"), kind.trim().to_string()));
        }
    }
    out
}

/// The bounds of the oracle domain.
pub fn oracle_bounds() -> SizeBounds {
    SizeBounds { max_ndim: 2, max_dim: 3, max_len: 2, min_int: -3, max_int: 3 }
}

fn shapes(b: &SizeBounds) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..b.max_ndim {
        let mut next = Vec::new();
        for s in &frontier {
            for d in 0..=b.max_dim {
                let mut t: Vec<i64> = s.clone();
                t.push(d);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn int_lists(b: &SizeBounds) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..b.max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for v in b.min_int..=b.max_int {
                let mut t: Vec<i64> = s.clone();
                t.push(v);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Tensor inputs whose dtype the module inspects, or `None` when a dtype is
/// read from a value that is not directly an input.
fn dtype_inputs(m: &IRModule) -> Option<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    for f in &m.functions {
        let inputs: BTreeMap<ValueId, &str> = f
            .blocks
            .iter()
            .flat_map(|b| b.instrs.iter())
            .filter_map(|i| match (&i.op, i.dst) {
                (Op::GetInput(n), Some(d)) => Some((d, n.as_str())),
                _ => None,
            })
            .collect();
        for i in f.blocks.iter().flat_map(|b| b.instrs.iter()) {
            if let Op::Dtype(a) = &i.op {
                match a {
                    Operand::Value(v) if inputs.contains_key(v) => {
                        out.insert(inputs[v].to_string());
                    }
                    _ => return None,
                }
            }
        }
    }
    Some(out)
}

/// Candidate values of every parameter. A tensor's dtype is enumerated only
/// when the module inspects it; element data and floats stay fixed since
/// loop-free validation never reads them.
pub fn domains(m: &IRModule, b: &SizeBounds) -> Vec<(String, Vec<ConcreteValue>)> {
    let typed = dtype_inputs(m);
    m.meta
        .all_params()
        .map(|(_, p)| {
            let dtypes: Vec<i64> = match &typed {
                Some(t) if !t.contains(&p.name) => vec![0],
                _ => (0..=4).collect(),
            };
            let vals = match p.ptype {
                ParamType::Tensor => dtypes
                    .iter()
                    .flat_map(|&dtype| {
                        shapes(b).into_iter().map(move |shape| ConcreteValue::Tensor {
                            dtype,
                            shape,
                            fill_seed: 7,
                            explicit_elements: None,
                        })
                    })
                    .collect(),
                ParamType::ListInt => int_lists(b).into_iter().map(|values| ConcreteValue::ListInt { values }).collect(),
                ParamType::ListFloat => (0..=b.max_len as usize)
                    .map(|n| ConcreteValue::ListFloat { values: vec![0.5; n] })
                    .collect(),
                ParamType::Str => m
                    .literals
                    .iter()
                    .cloned()
                    .chain(["?unlisted".to_string()])
                    .map(|value| ConcreteValue::Str { value })
                    .collect(),
                ParamType::Int => (b.min_int..=b.max_int).map(|value| ConcreteValue::Int { value }).collect(),
                ParamType::Float => vec![ConcreteValue::Float { value: 0.5 }],
                ParamType::Bool => vec![ConcreteValue::Bool { value: false }, ConcreteValue::Bool { value: true }],
            };
            (p.name.clone(), vals)
        })
        .collect()
}

pub fn domain_size(d: &[(String, Vec<ConcreteValue>)]) -> u64 {
    d.iter().map(|(_, v)| v.len() as u64).product()
}

/// Calls `f` on every combination of the domains.
pub fn for_each_case(op_name: &str, d: &[(String, Vec<ConcreteValue>)], mut f: impl FnMut(&TestCase)) {
    if d.iter().any(|(_, v)| v.is_empty()) {
        return;
    }
    let mut idx = vec![0usize; d.len()];
    let mut tc = TestCase {
        schema: SCHEMA_VERSION,
        op_name: op_name.to_string(),
        values: d.iter().map(|(n, v)| (n.clone(), v[0].clone())).collect::<BTreeMap<_, _>>(),
        provenance: Provenance { path_id: None, solution_id: None, mutated: false, seed: 0 },
    };
    loop {
        f(&tc);
        let mut k = 0;
        loop {
            if k == d.len() {
                return;
            }
            idx[k] += 1;
            if idx[k] < d[k].1.len() {
                tc.values.insert(d[k].0.clone(), d[k].1[idx[k]].clone());
                break;
            }
            idx[k] = 0;
            tc.values.insert(d[k].0.clone(), d[k].1[0].clone());
            k += 1;
        }
    }
}

/// Outcome of a case relative to the validation region.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Class {
    Valid,
    Rejected,
    ValidationCrash,
}

pub fn classify(ex: &Extraction, v: &Verdict) -> Class {
    match v {
        Verdict::Pass => Class::Valid,
        Verdict::Reject { .. } => Class::Rejected,
        Verdict::Crash { main_block, .. } => {
            if ex.vset.contains(*main_block) {
                Class::ValidationCrash
            } else {
                Class::Valid
            }
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct OracleReport {
    pub enumerated: u64,
    pub valid: u64,
    pub validation_crashes: u64,
    /// Valid inputs that satisfy no extracted path.
    pub uncovered: u64,
    pub first_uncovered: Option<TestCase>,
    /// Inputs that satisfy some path yet fail validation.
    pub unsound: u64,
    pub first_unsound: Option<TestCase>,
}

/// Brute-force check over the bounded domain: an enumerated input gets through
/// validation exactly when it satisfies some satisfiable path's constraints.
pub fn brute_force(m: &IRModule, ex: &Extraction, b: &SizeBounds) -> OracleReport {
    let d = domains(m, b);
    let mut worker = Worker::new(m, RunLimits::default());
    let sets: Vec<_> = ex.sat_sets().collect();
    let proj_bounds = SizeBounds::default();
    let mut r = OracleReport::default();
    for_each_case(&m.meta.op_name, &d, |tc| {
        r.enumerated += 1;
        let out = worker.run(tc).expect("enumerated case is well typed");
        if out.verdict.crash_kind().is_some() {
            worker.reset();
        }
        let a = project(tc, &m.literals, &proj_bounds);
        let covered = sets.iter().any(|cs| evaluate(&cs.constraints, &a));
        let class = classify(ex, &out.verdict);
        match class {
            Class::Rejected => {}
            Class::ValidationCrash => r.validation_crashes += 1,
            Class::Valid => r.valid += 1,
        }
        if class == Class::Valid && !covered {
            r.uncovered += 1;
            r.first_uncovered.get_or_insert_with(|| tc.clone());
        }
        if class != Class::Valid && covered {
            r.unsound += 1;
            r.first_unsound.get_or_insert_with(|| tc.clone());
        }
    });
    r
}

/// `OPFORGE_SMT_SOLVER` or a z3 on the usual path, if either exists.
pub fn external_solver() -> Option<PathBuf> {
    std::env::var_os("OPFORGE_SMT_SOLVER")
        .filter(|s| !s.is_empty())
        .map(PathBuf::from)
        .or_else(|| Some(PathBuf::from("/usr/local/bin/z3")))
        .filter(|p| p.exists())
}

#[derive(Clone, Debug, Default)]
pub struct SampledReport {
    pub cases: u64,
    pub rejected: u64,
    pub validation_crashes: u64,
    pub first_bad: Option<TestCase>,
}

/// Runs `rounds` unmutated constrained cases and counts those that do not get
/// through validation.
pub fn sampled_cases(m: &IRModule, ex: &Extraction, seed: u64, rounds: usize) -> SampledReport {
    let solver = opforge_core::solve::SolverConfig { seed, ..Default::default() };
    let gen = opforge_core::testgen::GenConfig { p_extreme: 0.0, seed, ..Default::default() };
    let paths = opforge_core::pipeline::sample_paths(ex, &solver);
    let mut worker = Worker::new(m, RunLimits::default());
    let mut r = SampledReport::default();
    if paths.iter().all(|p| p.samples.solutions.is_empty()) {
        return r;
    }
    for tc in opforge_core::pipeline::constrained_cases(m, &paths, &gen).take(rounds) {
        r.cases += 1;
        let out = worker.run(&tc).expect("generated case is well typed");
        if out.verdict.crash_kind().is_some() {
            worker.reset();
        }
        match classify(ex, &out.verdict) {
            Class::Valid => continue,
            Class::Rejected => r.rejected += 1,
            Class::ValidationCrash => r.validation_crashes += 1,
        }
        r.first_bad.get_or_insert(tc);
    }
    r
}

/// Terminator of a generated block.
#[derive(Clone, Debug)]
pub enum Exit {
    Br(usize, usize),
    Jmp(usize),
    Ret,
    Fail,
}

/// Random CFG of 1..=50 blocks.
pub fn random_cfg(rng: &mut impl rand::Rng) -> Vec<Exit> {
    let n = rng.gen_range(1..=50);
    (0..n)
        .map(|_| match rng.gen_range(0..7) {
            0..=2 => Exit::Br(rng.gen_range(0..n), rng.gen_range(0..n)),
            3 | 4 => Exit::Jmp(rng.gen_range(0..n)),
            5 => Exit::Ret,
            _ => Exit::Fail,
        })
        .collect()
}

pub fn source(blocks: &[Exit]) -> String {
    let mut s = String::from("op \"R\" api \"t.R\" {\n fn @main {\n");
    for (i, t) in blocks.iter().enumerate() {
        s.push_str(&format!("  b{i}:\n"));
        match t {
            Exit::Br(a, b) => s.push_str(&format!("    %c{i} = const true\n    br %c{i}, b{a}, b{b}\n")),
            Exit::Jmp(a) => s.push_str(&format!("    jmp b{a}\n")),
            Exit::Ret => s.push_str("    ret\n"),
            Exit::Fail => s.push_str("    fail \"x\"\n"),
        }
    }
    s.push_str(" }\n}\n");
    s
}

/// Blocks that reach a `fail` block, by fixpoint over the generated terminators.
pub fn reaches_fail(blocks: &[Exit]) -> Vec<bool> {
    let mut r: Vec<bool> = blocks.iter().map(|t| matches!(t, Exit::Fail)).collect();
    loop {
        let mut changed = false;
        for (i, t) in blocks.iter().enumerate() {
            let next = match t {
                Exit::Br(a, b) => r[*a] || r[*b],
                Exit::Jmp(a) => r[*a],
                _ => r[i],
            };
            if next && !r[i] {
                r[i] = true;
                changed = true;
            }
        }
        if !changed {
            return r;
        }
    }
}
