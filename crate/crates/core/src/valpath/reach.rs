use std::collections::BTreeSet;

use crate::ir::{BlockId, Cfg};

/// State shared by successive reachability queries on one CFG.
#[derive(Clone, Debug, Default)]
pub struct ReachCaches {
    pub reachable_cache: BTreeSet<BlockId>,
    pub unreachable_cache: BTreeSet<BlockId>,
    pub eh_bbs: BTreeSet<BlockId>,
    /// Worklist pops performed so far, across all queries.
    pub steps: u64,
}

impl ReachCaches {
    pub fn new(eh_bbs: impl IntoIterator<Item = BlockId>) -> Self {
        let eh_bbs: BTreeSet<BlockId> = eh_bbs.into_iter().collect();
        ReachCaches {
            reachable_cache: eh_bbs.clone(),
            unreachable_cache: BTreeSet::new(),
            eh_bbs,
            steps: 0,
        }
    }
}

/// Whether an error-handling block is forward-reachable from `current_bb`.
pub fn reachability_check(current_bb: BlockId, caches: &mut ReachCaches, cfg: &Cfg) -> bool {
    if caches.reachable_cache.contains(&current_bb) {
        return true;
    }
    if caches.unreachable_cache.contains(&current_bb) {
        return false;
    }
    let mut worklist = vec![current_bb];
    let mut visited = BTreeSet::from([current_bb]);
    while let Some(bb) = worklist.pop() {
        caches.steps += 1;
        if caches.eh_bbs.contains(&bb) || caches.reachable_cache.contains(&bb) {
            caches.reachable_cache.insert(current_bb);
            return true;
        }
        for e in cfg.succs(bb) {
            if visited.insert(e.to) {
                worklist.push(e.to);
            }
        }
    }
    caches.unreachable_cache.extend(visited);
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{build_cfg, parse_module};

    fn cfg_of(body: &str) -> Cfg {
        let src = format!("op \"T\" api \"t.T\" {{ fn @main {{ {body} }} }}");
        build_cfg(parse_module(&src).unwrap().main())
    }

    #[test]
    fn chain_positive_query_caches_start() {
        let cfg = cfg_of("A: jmp B  B: jmp C  C: fail \"x\"");
        let mut c = ReachCaches::new([2]);
        assert!(reachability_check(0, &mut c, &cfg));
        assert!(c.reachable_cache.contains(&0));
    }

    #[test]
    fn isolated_block_is_unreachable() {
        let cfg = cfg_of("A: ret  D: ret");
        let mut c = ReachCaches::new([]);
        assert!(!reachability_check(1, &mut c, &cfg));
        assert!(c.unreachable_cache.contains(&1));
    }

    #[test]
    fn cached_negative_does_not_retraverse() {
        let cfg = cfg_of("A: jmp B  B: ret  E: fail \"x\"");
        let mut c = ReachCaches::new([2]);
        assert!(!reachability_check(0, &mut c, &cfg));
        let before = c.steps;
        assert!(!reachability_check(0, &mut c, &cfg));
        assert!(!reachability_check(1, &mut c, &cfg));
        assert_eq!(c.steps - before, 0);
    }
}
