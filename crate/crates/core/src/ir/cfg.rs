use petgraph::algo::dominators::{simple_fast, Dominators};
use petgraph::graph::{DiGraph, NodeIndex};
use serde::Serialize;

use super::{BlockId, IRFunction, Terminator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Uncond,
    True,
    False,
}

impl EdgeKind {
    /// Branch direction for `True`/`False`, `None` for unconditional edges.
    pub fn dir(self) -> Option<bool> {
        match self {
            EdgeKind::Uncond => None,
            EdgeKind::True => Some(true),
            EdgeKind::False => Some(false),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Edge {
    pub from: BlockId,
    pub to: BlockId,
    pub kind: EdgeKind,
}

#[derive(Clone, Debug)]
pub struct Cfg {
    pub entry: BlockId,
    pub edges: Vec<Edge>,
    pub back_edges: Vec<Edge>,
    succs: Vec<Vec<Edge>>,
    preds: Vec<Vec<Edge>>,
    idom: Vec<Option<BlockId>>,
    reachable: Vec<bool>,
}

pub fn build_cfg(func: &IRFunction) -> Cfg {
    let n = func.blocks.len();
    let mut edges = Vec::new();
    for (b, block) in func.blocks.iter().enumerate() {
        match block.term {
            Terminator::Br { then_bb, else_bb, .. } => {
                edges.push(Edge { from: b, to: then_bb, kind: EdgeKind::True });
                edges.push(Edge { from: b, to: else_bb, kind: EdgeKind::False });
            }
            Terminator::Jmp(t) => edges.push(Edge { from: b, to: t, kind: EdgeKind::Uncond }),
            Terminator::Ret(_) | Terminator::Fail(_) => {}
        }
    }
    let mut succs = vec![Vec::new(); n];
    let mut preds = vec![Vec::new(); n];
    let mut g: DiGraph<(), ()> = DiGraph::with_capacity(n, edges.len());
    let nodes: Vec<NodeIndex> = (0..n).map(|_| g.add_node(())).collect();
    for e in &edges {
        succs[e.from].push(*e);
        preds[e.to].push(*e);
        g.add_edge(nodes[e.from], nodes[e.to], ());
    }

    let mut reachable = vec![false; n];
    let mut idom = vec![None; n];
    if n > 0 {
        let doms: Dominators<NodeIndex> = simple_fast(&g, nodes[func.entry]);
        let mut stack = vec![func.entry];
        reachable[func.entry] = true;
        while let Some(b) = stack.pop() {
            for e in &succs[b] {
                if !reachable[e.to] {
                    reachable[e.to] = true;
                    stack.push(e.to);
                }
            }
        }
        for b in 0..n {
            if reachable[b] && b != func.entry {
                idom[b] = doms.immediate_dominator(nodes[b]).map(|d| d.index());
            }
        }
    }

    let mut cfg = Cfg {
        entry: func.entry,
        edges,
        back_edges: Vec::new(),
        succs,
        preds,
        idom,
        reachable,
    };
    cfg.back_edges = cfg
        .edges
        .iter()
        .filter(|e| cfg.reachable[e.from] && cfg.dominates(e.to, e.from))
        .copied()
        .collect();
    cfg
}

impl Cfg {
    pub fn num_blocks(&self) -> usize {
        self.succs.len()
    }

    pub fn succs(&self, b: BlockId) -> &[Edge] {
        &self.succs[b]
    }

    pub fn preds(&self, b: BlockId) -> &[Edge] {
        &self.preds[b]
    }

    pub fn is_reachable(&self, b: BlockId) -> bool {
        self.reachable[b]
    }

    pub fn idom(&self, b: BlockId) -> Option<BlockId> {
        self.idom[b]
    }

    /// Whether `a` dominates `b`. Unreachable blocks are dominated by nothing.
    pub fn dominates(&self, a: BlockId, b: BlockId) -> bool {
        if !self.reachable[b] {
            return false;
        }
        let mut cur = Some(b);
        while let Some(c) = cur {
            if c == a {
                return true;
            }
            cur = self.idom[c];
        }
        false
    }

    pub fn is_back_edge(&self, e: &Edge) -> bool {
        self.back_edges.contains(e)
    }

    /// Blocks of the natural loop of back edge `e`: its header plus every block
    /// that reaches `e.from` without passing through the header.
    pub fn natural_loop(&self, e: &Edge) -> Vec<BlockId> {
        let mut body = vec![false; self.num_blocks()];
        body[e.to] = true;
        let mut stack = Vec::new();
        if !body[e.from] {
            body[e.from] = true;
            stack.push(e.from);
        }
        while let Some(b) = stack.pop() {
            for p in &self.preds[b] {
                if !body[p.from] {
                    body[p.from] = true;
                    stack.push(p.from);
                }
            }
        }
        (0..self.num_blocks()).filter(|&b| body[b]).collect()
    }

    /// Union of all natural loops; a block is "in a loop" if it belongs to any.
    pub fn loop_blocks(&self) -> Vec<bool> {
        let mut inside = vec![false; self.num_blocks()];
        for e in &self.back_edges {
            for b in self.natural_loop(e) {
                inside[b] = true;
            }
        }
        inside
    }
}
