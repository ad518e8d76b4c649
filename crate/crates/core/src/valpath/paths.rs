use std::fmt::Write;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::ValidationSet;
use crate::ir::{
    build_cfg, is_intrinsic, BlockId, Cfg, Edge, EdgeKind, ErrorPatterns, FuncId, IRModule, Op,
    Terminator,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PathLimits {
    pub max_paths: usize,
    pub max_inline_depth: usize,
    pub max_len: usize,
}

impl Default for PathLimits {
    fn default() -> Self {
        PathLimits { max_paths: 512, max_inline_depth: 4, max_len: 4096 }
    }
}

/// Execution of the instruction range `start..end` of one block in one call frame.
///
/// `end < instrs.len()` means the step stops at an inlined call whose callee entry
/// is the next step; otherwise the block's terminator ran and `dir` records the
/// branch direction taken, if any.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Step {
    pub depth: u32,
    pub func: FuncId,
    pub block: BlockId,
    pub start: u32,
    pub end: u32,
    pub dir: Option<bool>,
    /// The step was entered through a back edge.
    pub via_back_edge: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PathExit {
    /// Left the validation set; the last step is the first functional block and is not executed.
    Functional,
    /// `main` returned inside validation code.
    Return,
    /// Reached an error site; such paths are ejected.
    Error,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Path {
    pub id: String,
    pub steps: Vec<Step>,
    pub exit: PathExit,
}

impl Path {
    fn new(steps: Vec<Step>, exit: PathExit) -> Self {
        let mut canon = String::new();
        for s in &steps {
            let dir = match s.dir {
                None => '-',
                Some(true) => 'T',
                Some(false) => 'F',
            };
            let _ = write!(
                canon,
                "{}:{}:{}:{}:{}:{}:{};",
                s.depth, s.func, s.block, s.start, s.end, dir, s.via_back_edge as u8
            );
        }
        let digest = Sha256::digest(canon.as_bytes());
        let id: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
        Path { id, steps, exit }
    }

    /// Steps whose instructions actually execute along the path.
    pub fn executed_steps(&self) -> &[Step] {
        match self.exit {
            PathExit::Functional => &self.steps[..self.steps.len() - 1],
            _ => &self.steps,
        }
    }

    /// Branch decisions `(func, block, dir)` in path order.
    pub fn taken_dirs(&self) -> Vec<(FuncId, BlockId, bool)> {
        self.steps
            .iter()
            .filter_map(|s| s.dir.map(|d| (s.func, s.block, d)))
            .collect()
    }

    pub fn back_edges_taken(&self) -> usize {
        self.steps.iter().filter(|s| s.via_back_edge).count()
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct PathSet {
    pub retained: Vec<Path>,
    /// Error-reaching paths; at most `max_paths` are kept, all are counted.
    pub ejected: Vec<Path>,
    pub ejected_count: usize,
    /// Paths abandoned because they would take a back edge a second time.
    pub pruned: usize,
    pub truncated: bool,
}

#[derive(Clone)]
struct Frame {
    func: FuncId,
    used_back_edges: Vec<Edge>,
    /// Caller block and instruction index to resume at after `ret`.
    resume: Option<(BlockId, u32)>,
}

#[derive(Clone)]
struct State {
    steps: Vec<Step>,
    frames: Vec<Frame>,
    next: (BlockId, u32, bool),
}

enum CallScan {
    None,
    Inline(u32, FuncId),
    Pattern(u32),
}

/// Enumerates paths from `main`'s entry through the validation set. Helper calls
/// are inlined up to `limits.max_inline_depth`; deeper calls are opaque. Each back
/// edge may be taken once per frame, with the continuation condition ignored.
pub fn extract_valid_paths(
    module: &IRModule,
    vset: &ValidationSet,
    patterns: &ErrorPatterns,
    limits: &PathLimits,
) -> PathSet {
    let cfgs: Vec<Cfg> = module.functions.iter().map(build_cfg).collect();
    let main = module.main_index();
    let mut out = PathSet::default();
    let guard = limits.max_paths.saturating_mul(16).max(1);

    let mut work = vec![State {
        steps: Vec::new(),
        frames: vec![Frame { func: main, used_back_edges: Vec::new(), resume: None }],
        next: (module.functions[main].entry, 0, false),
    }];

    'paths: while let Some(mut st) = work.pop() {
        if out.retained.len() >= limits.max_paths || out.ejected_count + out.pruned >= guard {
            out.truncated = true;
            break;
        }
        loop {
            let (block, start, via) = st.next;
            let depth = st.frames.len() - 1;
            let func = st.frames[depth].func;
            let step = |end: u32, dir: Option<bool>| Step {
                depth: depth as u32,
                func,
                block,
                start,
                end,
                dir,
                via_back_edge: via,
            };
            // With an empty validation set this fires on the entry block itself.
            if depth == 0 && start == 0 && !vset.contains(block) {
                st.steps.push(step(0, None));
                out.retained.push(Path::new(st.steps, PathExit::Functional));
                continue 'paths;
            }
            if st.steps.len() >= limits.max_len {
                out.truncated = true;
                continue 'paths;
            }

            let bb = &module.functions[func].blocks[block];
            let scan = scan_calls(module, patterns, bb, start as usize, depth < limits.max_inline_depth);
            match scan {
                CallScan::Pattern(i) => {
                    st.steps.push(step(i, None));
                    eject(&mut out, st.steps, limits);
                    continue 'paths;
                }
                CallScan::Inline(i, callee) => {
                    st.steps.push(step(i, None));
                    st.frames.push(Frame {
                        func: callee,
                        used_back_edges: Vec::new(),
                        resume: Some((block, i + 1)),
                    });
                    st.next = (module.functions[callee].entry, 0, false);
                    continue;
                }
                CallScan::None => {}
            }

            let end = bb.instrs.len() as u32;
            let cfg = &cfgs[func];
            match &bb.term {
                Terminator::Fail(_) => {
                    st.steps.push(step(end, None));
                    eject(&mut out, st.steps, limits);
                    continue 'paths;
                }
                Terminator::Ret(_) => {
                    st.steps.push(step(end, None));
                    let frame = st.frames.pop().expect("frame stack never empty");
                    match frame.resume {
                        None => {
                            out.retained.push(Path::new(st.steps, PathExit::Return));
                            continue 'paths;
                        }
                        Some((rb, ri)) => st.next = (rb, ri, false),
                    }
                }
                Terminator::Jmp(t) => {
                    let e = Edge { from: block, to: *t, kind: EdgeKind::Uncond };
                    st.steps.push(step(end, None));
                    match take_edge(&mut st, cfg, e) {
                        Some(next) => st.next = next,
                        None => {
                            out.pruned += 1;
                            continue 'paths;
                        }
                    }
                }
                Terminator::Br { then_bb, else_bb, .. } => {
                    let mut succ = [
                        Edge { from: block, to: *then_bb, kind: EdgeKind::True },
                        Edge { from: block, to: *else_bb, kind: EdgeKind::False },
                    ];
                    if succ[1].to < succ[0].to {
                        succ.swap(0, 1);
                    }
                    // Second successor waits on the stack; the first continues here.
                    let mut other = st.clone();
                    other.steps.push(step(end, succ[1].kind.dir()));
                    match take_edge(&mut other, cfg, succ[1]) {
                        Some(next) => {
                            other.next = next;
                            work.push(other);
                        }
                        None => out.pruned += 1,
                    }
                    st.steps.push(step(end, succ[0].kind.dir()));
                    match take_edge(&mut st, cfg, succ[0]) {
                        Some(next) => st.next = next,
                        None => {
                            out.pruned += 1;
                            continue 'paths;
                        }
                    }
                }
            }
        }
    }
    out
}

fn eject(out: &mut PathSet, steps: Vec<Step>, limits: &PathLimits) {
    out.ejected_count += 1;
    if out.ejected.len() < limits.max_paths {
        out.ejected.push(Path::new(steps, PathExit::Error));
    }
}

/// Records a back edge use in the current frame; `None` if it was already used.
fn take_edge(st: &mut State, cfg: &Cfg, e: Edge) -> Option<(BlockId, u32, bool)> {
    let back = cfg.is_back_edge(&e);
    if back {
        let frame = st.frames.last_mut().expect("frame stack never empty");
        if frame.used_back_edges.contains(&e) {
            return None;
        }
        frame.used_back_edges.push(e);
    }
    Some((e.to, 0, back))
}

fn scan_calls(
    module: &IRModule,
    patterns: &ErrorPatterns,
    bb: &crate::ir::BasicBlock,
    start: usize,
    may_inline: bool,
) -> CallScan {
    for (i, instr) in bb.instrs.iter().enumerate().skip(start) {
        if let Op::Call(name, _) = &instr.op {
            if is_intrinsic(name) {
                continue;
            }
            if patterns.matches(name) {
                return CallScan::Pattern(i as u32);
            }
            if may_inline {
                if let Some(callee) = module.func_index(name) {
                    return CallScan::Inline(i as u32, callee);
                }
            }
        }
    }
    CallScan::None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::find_error_sites;
    use crate::valpath::{identify_validation_blocks, validation_anchors, DEFAULT_BUDGET};

    fn run(src: &str) -> PathSet {
        let m = crate::ir::parse_module(src).unwrap();
        let pats = ErrorPatterns::new(&["check_*", "*_failure"]).unwrap();
        let sites = find_error_sites(&m, &pats);
        let cfg = build_cfg(m.main());
        let vset = identify_validation_blocks(&cfg, &validation_anchors(&m, &sites), DEFAULT_BUDGET).unwrap();
        extract_valid_paths(&m, &vset, &pats, &PathLimits::default())
    }

    #[test]
    fn straight_line_validation_one_path() {
        let ps = run(
            r#"op "T" api "t.T" { param a: int fn @main {
              e: %a = get_attr "a"  %c = icmp sgt %a, 0  br %c, ok, bad
              bad: fail "neg"
              ok: jmp f
              f: ret } }"#,
        );
        assert_eq!(ps.retained.len(), 1);
        assert_eq!(ps.ejected_count, 1);
    }

    #[test]
    fn rejoining_branch_two_paths() {
        let ps = run(
            r#"op "T" api "t.T" { param a: int fn @main {
              e: %a = get_attr "a"  %c = icmp sgt %a, 0  br %c, l, r
              l: jmp j
              r: jmp j
              j: %d = icmp slt %a, 9  br %d, f, bad
              bad: fail "big"
              f: ret } }"#,
        );
        assert_eq!(ps.retained.len(), 2);
        assert!(ps.retained.iter().all(|p| p.exit == PathExit::Functional));
        assert_ne!(ps.retained[0].id, ps.retained[1].id);
    }

    #[test]
    fn helper_failure_is_ejected_through_inlining() {
        let ps = run(
            r#"op "T" api "t.T" { param a: int fn @main {
              e: %a = get_attr "a"  call @validate(%a)  jmp f
              f: ret }
            fn @validate(%v) {
              e: %c = icmp sge %v, 0  br %c, ok, bad
              bad: call @ctx_failure()  ret
              ok: ret }
            fn @ctx_failure { e: fail "invalid" } }"#,
        );
        assert_eq!(ps.retained.len(), 1);
        assert_eq!(ps.ejected_count, 1);
        let p = &ps.retained[0];
        // main up to the call, helper entry, helper `ok`, main resumed, functional block
        assert_eq!(p.steps.len(), 5);
        assert_eq!(p.steps[1].depth, 1);
        assert_eq!((p.steps[3].depth, p.steps[3].start), (0, 2));
    }

    #[test]
    fn loop_unrolled_once() {
        let ps = run(
            r#"op "T" api "t.T" { attr l: list<int> fn @main {
              e: %l = get_attr "l"  %n = len %l  %i0 = alloca  store %i0, 0  jmp head
              head: %i = load %i0  %c = icmp slt %i, %n  br %c, body, done
              body: %v = elem %l, %i  %ok = icmp sge %v, 0  br %ok, latch, bad
              bad: fail "negative"
              latch: %j = add %i, 1  store %i0, %j  jmp head
              done: ret } }"#,
        );
        // zero iterations, or one iteration followed by the ignored continuation
        assert_eq!(ps.retained.len(), 2);
        assert!(ps.retained.iter().any(|p| p.back_edges_taken() == 1));
        assert!(ps.pruned >= 1);
        for p in &ps.retained {
            assert!(p.back_edges_taken() <= 1);
        }
    }

    #[test]
    fn ids_stable() {
        let src = r#"op "T" api "t.T" { param a: int fn @main {
              e: %a = get_attr "a"  %c = icmp sgt %a, 0  br %c, ok, bad
              bad: fail "neg"
              ok: ret } }"#;
        assert_eq!(run(src).retained[0].id, run(src).retained[0].id);
        assert_eq!(run(src).retained[0].id.len(), 16);
    }
}
