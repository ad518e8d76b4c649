//! Input-validation code identification and validation path enumeration.

mod paths;
mod reach;

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

pub use paths::{extract_valid_paths, Path, PathExit, PathLimits, PathSet, Step};
pub use reach::{reachability_check, ReachCaches};

use crate::ir::{BlockId, Cfg, Edge, ErrorSite, FuncId, IRModule, Op};

pub const DEFAULT_BUDGET: u64 = 1_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ValPathError {
    #[error("traversal budget must be positive")]
    ZeroBudget,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValidationSet {
    pub blocks: BTreeSet<BlockId>,
    /// Edges from a validation block to a block outside the set.
    pub frontier: Vec<Edge>,
    pub budget_hit: bool,
    /// Backward edge expansions performed before stopping.
    pub expansions: u64,
}

impl ValidationSet {
    pub fn contains(&self, b: BlockId) -> bool {
        self.blocks.contains(&b)
    }
}

/// Helpers that can reach an error site, directly or through further calls.
pub fn may_fail_helpers(module: &IRModule, sites: &[ErrorSite]) -> BTreeSet<FuncId> {
    let mut failing: BTreeSet<FuncId> = sites.iter().map(|s| s.func).collect();
    loop {
        let mut changed = false;
        for (fi, f) in module.functions.iter().enumerate() {
            if failing.contains(&fi) {
                continue;
            }
            let calls_failing = f.blocks.iter().flat_map(|b| &b.instrs).any(|i| match &i.op {
                Op::Call(name, _) => module.func_index(name).is_some_and(|c| failing.contains(&c)),
                _ => false,
            });
            if calls_failing {
                failing.insert(fi);
                changed = true;
            }
        }
        if !changed {
            return failing;
        }
    }
}

/// Blocks of `main` that anchor the backward traversal: blocks holding an error
/// site plus blocks calling a helper that may fail.
pub fn validation_anchors(module: &IRModule, sites: &[ErrorSite]) -> BTreeSet<BlockId> {
    let main = module.main_index();
    let failing = may_fail_helpers(module, sites);
    let mut anchors: BTreeSet<BlockId> =
        sites.iter().filter(|s| s.func == main).map(|s| s.block).collect();
    for (bi, b) in module.functions[main].blocks.iter().enumerate() {
        for i in &b.instrs {
            if let Op::Call(name, _) = &i.op {
                if module.func_index(name).is_some_and(|c| c != main && failing.contains(&c)) {
                    anchors.insert(bi);
                }
            }
        }
    }
    anchors
}

/// Backward depth-first traversal from every anchor block. Each predecessor edge
/// examined costs one unit of `budget`; once the budget is spent, the remaining
/// blocks are classified with [`reachability_check`].
pub fn identify_validation_blocks(
    cfg: &Cfg,
    anchors: &BTreeSet<BlockId>,
    budget: u64,
) -> Result<ValidationSet, ValPathError> {
    if budget == 0 {
        return Err(ValPathError::ZeroBudget);
    }
    let n = cfg.num_blocks();
    let mut marked = vec![false; n];
    let mut expansions = 0u64;
    let mut budget_hit = false;

    'outer: for &a in anchors {
        if marked[a] {
            continue;
        }
        marked[a] = true;
        let mut stack = vec![a];
        while let Some(b) = stack.pop() {
            for e in cfg.preds(b) {
                if expansions >= budget {
                    budget_hit = true;
                    break 'outer;
                }
                expansions += 1;
                if !marked[e.from] {
                    marked[e.from] = true;
                    stack.push(e.from);
                }
            }
        }
    }

    if budget_hit {
        let mut caches = ReachCaches::new(anchors.iter().copied());
        for b in 0..n {
            if !marked[b] && reachability_check(b, &mut caches, cfg) {
                marked[b] = true;
            }
        }
    }

    let blocks: BTreeSet<BlockId> = (0..n).filter(|&b| marked[b]).collect();
    let frontier = cfg
        .edges
        .iter()
        .filter(|e| marked[e.from] && !marked[e.to])
        .copied()
        .collect();
    Ok(ValidationSet { blocks, frontier, budget_hit, expansions })
}
