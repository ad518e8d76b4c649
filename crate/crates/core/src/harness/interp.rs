use std::collections::HashMap;
use std::rc::Rc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{is_intrinsic, BinOp, BlockId, FuncId, IRModule, Literal, LogicOp, Op, Operand, Terminator};
use crate::registry::ParamType;
use crate::symprop::{LIST_FLOAT_CODE, LIST_INT_CODE};
use crate::testgen::{ConcreteValue, TestCase};

/// Value returned by the `runtime_threads` intrinsic.
pub const RUNTIME_THREADS: i64 = 8;
const MAX_CALL_DEPTH: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CrashKind {
    Abrt,
    Fpe,
    Segv,
    Timeout,
}

impl CrashKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CrashKind::Abrt => "ABRT",
            CrashKind::Fpe => "FPE",
            CrashKind::Segv => "SEGV",
            CrashKind::Timeout => "TIMEOUT",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Reject {
        message: String,
    },
    Crash {
        kind: CrashKind,
        /// `@func/label#index`; the terminator has index `instrs.len()`.
        site: String,
        /// Block of `main` that was executing, directly or through calls.
        main_block: BlockId,
    },
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn is_reject(&self) -> bool {
        matches!(self, Verdict::Reject { .. })
    }

    pub fn crash_kind(&self) -> Option<CrashKind> {
        match self {
            Verdict::Crash { kind, .. } => Some(*kind),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Outcome {
    pub verdict: Verdict,
    /// Sorted edge ids, see [`EdgeTable`].
    pub covered_edges: Vec<u32>,
    pub steps: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HarnessError {
    #[error("test case is for operator {found:?}, module is {expected:?}")]
    WrongOperator { expected: String, found: String },
    #[error("test case has no value for parameter {0:?}")]
    MissingValue(String),
    #[error("parameter {name:?} expects {expected}, test case gives {found}")]
    TypeMismatch { name: String, expected: &'static str, found: &'static str },
    #[error("test case value {0:?} names no parameter")]
    UnknownValue(String),
    #[error("ill-typed program at {site}: {msg}")]
    IllTyped { site: String, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunLimits {
    pub step_limit: u64,
    pub timeout: Duration,
}

impl Default for RunLimits {
    fn default() -> Self {
        RunLimits { step_limit: 1_000_000, timeout: Duration::from_secs(1) }
    }
}

/// Numbering of conditional branch edges: `then` is `2k`, `else` is `2k + 1`
/// for the k-th `br` in function/block order.
#[derive(Clone, Debug)]
pub struct EdgeTable {
    base: Vec<Vec<u32>>,
    pub total: usize,
}

impl EdgeTable {
    pub fn new(m: &IRModule) -> Self {
        let mut next = 0u32;
        let base = m
            .functions
            .iter()
            .map(|f| {
                f.blocks
                    .iter()
                    .map(|b| match b.term {
                        Terminator::Br { .. } => {
                            next += 2;
                            next - 2
                        }
                        _ => u32::MAX,
                    })
                    .collect()
            })
            .collect();
        EdgeTable { base, total: next as usize }
    }

    pub fn edge(&self, func: FuncId, block: BlockId, taken: bool) -> u32 {
        self.base[func][block] + u32::from(!taken)
    }

    /// (function, block, taken) of an edge id.
    pub fn describe(&self, edge: u32) -> Option<(FuncId, BlockId, bool)> {
        let base = edge & !1;
        self.base.iter().enumerate().find_map(|(f, bs)| {
            bs.iter().position(|&b| b == base).map(|b| (f, b, edge & 1 == 0))
        })
    }
}

struct TensorV {
    dtype: i64,
    shape: Vec<i64>,
    fill_seed: u64,
    explicit: Option<Vec<i64>>,
}

impl TensorV {
    fn numel(&self) -> i64 {
        self.shape.iter().fold(1i64, |acc, d| acc.wrapping_mul(*d))
    }

    /// Element `i`; values not given explicitly are derived from the fill seed.
    fn element(&self, i: i64) -> i64 {
        if let Some(v) = self.explicit.as_ref().and_then(|e| e.get(i as usize)) {
            return *v;
        }
        let mut z = self.fill_seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        (z % 9) as i64 - 4
    }
}

#[derive(Clone)]
enum V {
    Unit,
    Int(i64),
    Bool(bool),
    Float(f64),
    Str(Rc<str>),
    Tensor(Rc<TensorV>),
    Shape(Rc<[i64]>),
    ListI(Rc<[i64]>),
    ListF(Rc<[f64]>),
    Ptr(usize),
}

impl V {
    fn kind(&self) -> &'static str {
        match self {
            V::Unit => "unit",
            V::Int(_) => "int",
            V::Bool(_) => "bool",
            V::Float(_) => "float",
            V::Str(_) => "string",
            V::Tensor(_) => "tensor",
            V::Shape(_) => "shape",
            V::ListI(_) => "list<int>",
            V::ListF(_) => "list<float>",
            V::Ptr(_) => "pointer",
        }
    }
}

enum Stop {
    Reject(String),
    Crash(CrashKind, FuncId, BlockId, usize),
    Error(FuncId, BlockId, usize, String),
}

struct Frame {
    func: FuncId,
    block: BlockId,
    idx: usize,
}

/// Single-threaded interpreter holding the per-run scratch state. Reusing one
/// across cases is the persistent worker; [`Worker::reset`] drops all state.
pub struct Worker<'m> {
    m: &'m IRModule,
    edges: EdgeTable,
    funcs: HashMap<&'m str, FuncId>,
    main: FuncId,
    limits: RunLimits,
    inputs: HashMap<String, V>,
    memory: Vec<V>,
    seen: Vec<bool>,
    covered: Vec<u32>,
    steps: u64,
    started: Instant,
    main_block: BlockId,
    resets: usize,
}

fn operand_kind(p: ParamType) -> &'static str {
    p.as_str()
}

fn convert(name: &str, ptype: ParamType, v: &ConcreteValue) -> Result<V, HarnessError> {
    let mismatch = || HarnessError::TypeMismatch {
        name: name.to_string(),
        expected: operand_kind(ptype),
        found: operand_kind(v.ptype()),
    };
    if v.ptype() != ptype {
        return Err(mismatch());
    }
    Ok(match v {
        ConcreteValue::Tensor { dtype, shape, fill_seed, explicit_elements } => V::Tensor(Rc::new(TensorV {
            dtype: *dtype,
            shape: shape.clone(),
            fill_seed: *fill_seed,
            explicit: explicit_elements.clone(),
        })),
        ConcreteValue::ListInt { values } => V::ListI(values.as_slice().into()),
        ConcreteValue::ListFloat { values } => V::ListF(values.as_slice().into()),
        ConcreteValue::Str { value } => V::Str(value.as_str().into()),
        ConcreteValue::Int { value } => V::Int(*value),
        ConcreteValue::Float { value } => V::Float(*value),
        ConcreteValue::Bool { value } => V::Bool(*value),
    })
}

impl<'m> Worker<'m> {
    pub fn new(m: &'m IRModule, limits: RunLimits) -> Self {
        let edges = EdgeTable::new(m);
        Worker {
            m,
            funcs: m.functions.iter().enumerate().map(|(i, f)| (f.name.as_str(), i)).collect(),
            main: m.main_index(),
            limits,
            inputs: HashMap::new(),
            memory: Vec::new(),
            seen: vec![false; edges.total],
            covered: Vec::new(),
            edges,
            steps: 0,
            started: Instant::now(),
            main_block: 0,
            resets: 0,
        }
    }

    pub fn edges(&self) -> &EdgeTable {
        &self.edges
    }

    pub fn resets(&self) -> usize {
        self.resets
    }

    /// Drops every piece of state carried between runs.
    pub fn reset(&mut self) {
        self.inputs = HashMap::new();
        self.memory = Vec::new();
        self.seen = vec![false; self.edges.total];
        self.covered = Vec::new();
        self.resets += 1;
    }

    fn load_case(&mut self, tc: &TestCase) -> Result<(), HarnessError> {
        let meta = &self.m.meta;
        if tc.op_name != meta.op_name {
            return Err(HarnessError::WrongOperator { expected: meta.op_name.clone(), found: tc.op_name.clone() });
        }
        if let Some(k) = tc.values.keys().find(|k| meta.lookup(k).is_none()) {
            return Err(HarnessError::UnknownValue(k.clone()));
        }
        self.inputs.clear();
        for (_, d) in meta.all_params() {
            let v = tc.values.get(&d.name).ok_or_else(|| HarnessError::MissingValue(d.name.clone()))?;
            self.inputs.insert(d.name.clone(), convert(&d.name, d.ptype, v)?);
        }
        Ok(())
    }

    pub fn run(&mut self, tc: &TestCase) -> Result<Outcome, HarnessError> {
        self.load_case(tc)?;
        self.memory.clear();
        for &e in &self.covered {
            self.seen[e as usize] = false;
        }
        self.covered.clear();
        self.steps = 0;
        self.started = Instant::now();
        self.main_block = self.m.functions[self.main].entry;
        let result = self.call(self.main, Vec::new(), 0);
        let verdict = match result {
            Ok(_) => Verdict::Pass,
            Err(Stop::Reject(message)) => Verdict::Reject { message },
            Err(Stop::Crash(kind, f, b, i)) => Verdict::Crash { kind, site: self.site(f, b, i), main_block: self.main_block },
            Err(Stop::Error(f, b, i, msg)) => return Err(HarnessError::IllTyped { site: self.site(f, b, i), msg }),
        };
        let mut covered_edges = self.covered.clone();
        covered_edges.sort_unstable();
        Ok(Outcome { verdict, covered_edges, steps: self.steps })
    }

    fn site(&self, f: FuncId, b: BlockId, i: usize) -> String {
        let func = &self.m.functions[f];
        format!("@{}/{}#{}", func.name, func.blocks[b].label, i)
    }

    fn tick(&mut self, fr: &Frame) -> Result<(), Stop> {
        self.steps += 1;
        if self.steps > self.limits.step_limit
            || (self.steps & 0xfff == 0 && self.started.elapsed() > self.limits.timeout)
        {
            return Err(Stop::Crash(CrashKind::Timeout, fr.func, fr.block, fr.idx));
        }
        Ok(())
    }

    fn call(&mut self, func: FuncId, args: Vec<V>, depth: usize) -> Result<V, Stop> {
        let f = &self.m.functions[func];
        let mut regs: Vec<V> = vec![V::Unit; f.value_names.len()];
        for (p, a) in f.params.iter().zip(args) {
            regs[p.0 as usize] = a;
        }
        let mut fr = Frame { func, block: f.entry, idx: 0 };
        loop {
            if func == self.main {
                self.main_block = fr.block;
            }
            let bb = &f.blocks[fr.block];
            for (i, ins) in bb.instrs.iter().enumerate() {
                fr.idx = i;
                self.tick(&fr)?;
                let v = self.exec(&ins.op, &regs, &fr, depth)?;
                if let Some(d) = ins.dst {
                    regs[d.0 as usize] = v;
                }
            }
            fr.idx = bb.instrs.len();
            self.tick(&fr)?;
            match &bb.term {
                Terminator::Br { cond, then_bb, else_bb } => {
                    let c = self.truth(&regs, cond, &fr)?;
                    let e = self.edges.edge(func, fr.block, c);
                    if !self.seen[e as usize] {
                        self.seen[e as usize] = true;
                        self.covered.push(e);
                    }
                    fr.block = if c { *then_bb } else { *else_bb };
                }
                Terminator::Jmp(t) => fr.block = *t,
                Terminator::Ret(v) => return Ok(v.map(|v| self.val(&regs, &v)).unwrap_or(V::Unit)),
                Terminator::Fail(msg) => return Err(Stop::Reject(msg.clone())),
            }
        }
    }

    fn val(&self, regs: &[V], o: &Operand) -> V {
        match o {
            Operand::Value(v) => regs[v.0 as usize].clone(),
            Operand::Int(i) => V::Int(*i),
            Operand::Bool(b) => V::Bool(*b),
            Operand::Float(x) => V::Float(*x),
        }
    }

    fn ill(fr: &Frame, msg: String) -> Stop {
        Stop::Error(fr.func, fr.block, fr.idx, msg)
    }

    fn int(&self, regs: &[V], o: &Operand, fr: &Frame) -> Result<i64, Stop> {
        match self.val(regs, o) {
            V::Int(i) => Ok(i),
            V::Bool(b) => Ok(b as i64),
            other => Err(Self::ill(fr, format!("expected int, found {}", other.kind()))),
        }
    }

    fn truth(&self, regs: &[V], o: &Operand, fr: &Frame) -> Result<bool, Stop> {
        match self.val(regs, o) {
            V::Bool(b) => Ok(b),
            V::Int(i) => Ok(i != 0),
            other => Err(Self::ill(fr, format!("expected bool, found {}", other.kind()))),
        }
    }

    /// Both operands as floats when either one is a float.
    fn floats(&self, regs: &[V], a: &Operand, b: &Operand, fr: &Frame) -> Result<Option<(f64, f64)>, Stop> {
        Ok(match (self.val(regs, a), self.val(regs, b)) {
            (V::Float(x), V::Float(y)) => Some((x, y)),
            (V::Float(x), _) => Some((x, self.int(regs, b, fr)? as f64)),
            (_, V::Float(y)) => Some((self.int(regs, a, fr)? as f64, y)),
            _ => None,
        })
    }

    fn segv(fr: &Frame) -> Stop {
        Stop::Crash(CrashKind::Segv, fr.func, fr.block, fr.idx)
    }

    fn exec(&mut self, op: &Op, regs: &[V], fr: &Frame, depth: usize) -> Result<V, Stop> {
        let v = |o: &Operand| self.val(regs, o);
        Ok(match op {
            Op::Const(l) => match l {
                Literal::Int(i) => V::Int(*i),
                Literal::Bool(b) => V::Bool(*b),
                Literal::Float(x) => V::Float(*x),
                Literal::Str(s) => V::Str(s.as_str().into()),
            },
            Op::GetInput(n) | Op::GetAttr(n) => {
                self.inputs.get(n).cloned().ok_or_else(|| Self::ill(fr, format!("no parameter {n:?}")))?
            }
            Op::Shape(a) => match v(a) {
                V::Tensor(t) => V::Shape(t.shape.as_slice().into()),
                V::Shape(s) => V::Shape(s),
                other => return Err(Self::ill(fr, format!("shape of {}", other.kind()))),
            },
            Op::Ndim(a) => match v(a) {
                V::Tensor(t) => V::Int(t.shape.len() as i64),
                V::Shape(s) => V::Int(s.len() as i64),
                other => return Err(Self::ill(fr, format!("ndim of {}", other.kind()))),
            },
            Op::Numel(a) => match v(a) {
                V::Tensor(t) => V::Int(t.numel()),
                V::Shape(s) => V::Int(s.iter().fold(1i64, |acc, d| acc.wrapping_mul(*d))),
                other => return Err(Self::ill(fr, format!("numel of {}", other.kind()))),
            },
            Op::Dtype(a) => match v(a) {
                V::Tensor(t) => V::Int(t.dtype),
                V::ListI(_) => V::Int(LIST_INT_CODE),
                V::ListF(_) => V::Int(LIST_FLOAT_CODE),
                other => return Err(Self::ill(fr, format!("dtype of {}", other.kind()))),
            },
            Op::Len(a) => match v(a) {
                V::ListI(l) => V::Int(l.len() as i64),
                V::ListF(l) => V::Int(l.len() as i64),
                V::Shape(s) => V::Int(s.len() as i64),
                V::Str(s) => V::Int(s.len() as i64),
                other => return Err(Self::ill(fr, format!("len of {}", other.kind()))),
            },
            Op::Dim(a, i) => {
                let i = self.int(regs, i, fr)?;
                let idx = usize::try_from(i).map_err(|_| Self::segv(fr))?;
                match v(a) {
                    V::Tensor(t) => V::Int(*t.shape.get(idx).ok_or_else(|| Self::segv(fr))?),
                    V::Shape(s) => V::Int(*s.get(idx).ok_or_else(|| Self::segv(fr))?),
                    other => return Err(Self::ill(fr, format!("dim of {}", other.kind()))),
                }
            }
            Op::Elem(a, i) => {
                let i = self.int(regs, i, fr)?;
                let idx = usize::try_from(i).map_err(|_| Self::segv(fr))?;
                match v(a) {
                    V::ListI(l) => V::Int(*l.get(idx).ok_or_else(|| Self::segv(fr))?),
                    V::ListF(l) => V::Float(*l.get(idx).ok_or_else(|| Self::segv(fr))?),
                    V::Shape(s) => V::Int(*s.get(idx).ok_or_else(|| Self::segv(fr))?),
                    other => return Err(Self::ill(fr, format!("elem of {}", other.kind()))),
                }
            }
            Op::Read(a, i) => {
                let i = self.int(regs, i, fr)?;
                match v(a) {
                    V::Tensor(t) => {
                        if i < 0 || i >= t.numel() {
                            return Err(Self::segv(fr));
                        }
                        V::Int(t.element(i))
                    }
                    other => return Err(Self::ill(fr, format!("read of {}", other.kind()))),
                }
            }
            Op::StrEq(a, lit) => match v(a) {
                V::Str(s) => V::Bool(&*s == lit.as_str()),
                other => return Err(Self::ill(fr, format!("str_eq on {}", other.kind()))),
            },
            Op::Bin(op, a, b) => {
                if let Some((x, y)) = self.floats(regs, a, b, fr)? {
                    V::Float(match op {
                        BinOp::Add => x + y,
                        BinOp::Sub => x - y,
                        BinOp::Mul => x * y,
                        BinOp::SDiv => x / y,
                        BinOp::SRem => x % y,
                    })
                } else {
                    let (x, y) = (self.int(regs, a, fr)?, self.int(regs, b, fr)?);
                    let fpe = || Stop::Crash(CrashKind::Fpe, fr.func, fr.block, fr.idx);
                    V::Int(match op {
                        BinOp::Add => x.wrapping_add(y),
                        BinOp::Sub => x.wrapping_sub(y),
                        BinOp::Mul => x.wrapping_mul(y),
                        // i64::MIN / -1 traps like a zero divisor
                        BinOp::SDiv => x.checked_div(y).ok_or_else(fpe)?,
                        BinOp::SRem => x.checked_rem(y).ok_or_else(fpe)?,
                    })
                }
            }
            Op::Icmp(p, a, b) => match self.floats(regs, a, b, fr)? {
                Some((x, y)) => V::Bool(p.eval(x, y)),
                None => V::Bool(p.eval(self.int(regs, a, fr)?, self.int(regs, b, fr)?)),
            },
            Op::Logic(op, a, b) => {
                let (x, y) = (self.truth(regs, a, fr)?, self.truth(regs, b, fr)?);
                V::Bool(match op {
                    LogicOp::And => x && y,
                    LogicOp::Or => x || y,
                })
            }
            Op::Not(a) => V::Bool(!self.truth(regs, a, fr)?),
            Op::Select(c, a, b) => {
                if self.truth(regs, c, fr)? {
                    v(a)
                } else {
                    v(b)
                }
            }
            Op::Alloca => {
                self.memory.push(V::Int(0));
                V::Ptr(self.memory.len() - 1)
            }
            Op::Store(p, x) => match v(p) {
                V::Ptr(i) => {
                    let x = v(x);
                    self.memory[i] = x;
                    V::Unit
                }
                other => return Err(Self::ill(fr, format!("store through {}", other.kind()))),
            },
            Op::Load(p) => match v(p) {
                V::Ptr(i) => self.memory[i].clone(),
                other => return Err(Self::ill(fr, format!("load through {}", other.kind()))),
            },
            Op::Call(name, args) => {
                if is_intrinsic(name) {
                    return Ok(match name.as_str() {
                        "runtime_threads" => V::Int(RUNTIME_THREADS),
                        _ => V::Unit,
                    });
                }
                let callee = *self.funcs.get(name.as_str()).ok_or_else(|| Self::ill(fr, format!("no function @{name}")))?;
                if depth >= MAX_CALL_DEPTH {
                    return Err(Self::segv(fr));
                }
                let args: Vec<V> = args.iter().map(|a| self.val(regs, a)).collect();
                self.call(callee, args, depth + 1)?
            }
            Op::AbortIf(c) => {
                if self.truth(regs, c, fr)? {
                    return Err(Stop::Crash(CrashKind::Abrt, fr.func, fr.block, fr.idx));
                }
                V::Unit
            }
            Op::Sink(_) => V::Unit,
        })
    }
}

/// Runs one case on a fresh worker.
pub fn run_case(module: &IRModule, tc: &TestCase, timeout: Duration) -> Result<Outcome, HarnessError> {
    Worker::new(module, RunLimits { timeout, ..RunLimits::default() }).run(tc)
}
