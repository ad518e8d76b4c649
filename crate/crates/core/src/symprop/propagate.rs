use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::RwLock;

use super::natural::{iter_range, numel_product};
use super::term::{b, Term};
use super::{
    natural_constraints, Constraint, ConstraintKind, ConstraintSet, Property, PropertyRef, SatStatus, SizeBounds,
    Sort, SymError,
};
use crate::ir::{
    build_cfg, BinOp, FuncId, IRModule, Instr, Literal, LogicOp, Op, Operand, Pred, Terminator,
    ValueId,
};
use crate::registry::ParamType;
use crate::solve::{check_constraints, SatResult, SolverConfig};
use crate::valpath::{Path, Step};

#[derive(Clone, Debug, PartialEq)]
pub struct PropagateOptions {
    /// Check satisfiability after every branch constraint and stop at the first unsat prefix.
    pub prune: bool,
    pub solver: SolverConfig,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        PropagateOptions { prune: true, solver: SolverConfig::default() }
    }
}

/// Step prefixes proven unsatisfiable. Shared by the paths of one operator.
#[derive(Debug, Default)]
pub struct UnsatCache {
    prefixes: RwLock<Vec<Vec<Step>>>,
}

impl UnsatCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, prefix: &[Step]) {
        let mut w = self.prefixes.write().expect("cache lock");
        if !w.iter().any(|p| p.as_slice() == prefix) {
            w.push(prefix.to_vec());
        }
    }

    /// Length of a cached prefix of `steps`, if any.
    pub fn lookup(&self, steps: &[Step]) -> Option<usize> {
        let r = self.prefixes.read().expect("cache lock");
        r.iter().filter(|p| steps.starts_with(p)).map(|p| p.len()).min()
    }

    pub fn len(&self) -> usize {
        self.prefixes.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-path starting state: the parameter roots the path reads and the
/// natural constraints of every declared parameter.
#[derive(Clone, Debug)]
pub struct SymState {
    pub op_name: String,
    pub bounds: SizeBounds,
    pub roots: BTreeMap<String, ParamType>,
    pub naturals: Vec<Constraint>,
}

fn check_path_shape(module: &IRModule, path: &Path) -> Result<(), SymError> {
    for s in &path.steps {
        let ok = module
            .functions
            .get(s.func)
            .and_then(|f| f.blocks.get(s.block))
            .is_some_and(|bb| s.start <= s.end && s.end as usize <= bb.instrs.len());
        if !ok {
            return Err(SymError::ForeignPath(path.id.clone()));
        }
    }
    Ok(())
}

pub fn seed_controllable(module: &IRModule, path: &Path, bounds: &SizeBounds) -> Result<SymState, SymError> {
    check_path_shape(module, path)?;
    let meta = &module.meta;
    let mut roots = BTreeMap::new();
    for s in path.executed_steps() {
        let bb = &module.functions[s.func].blocks[s.block];
        for instr in &bb.instrs[s.start as usize..s.end as usize] {
            if let Op::GetInput(name) | Op::GetAttr(name) = &instr.op {
                let ptype = meta.ptype_of(name).ok_or_else(|| SymError::UnknownParameter(name.clone()))?;
                roots.insert(name.clone(), ptype);
            }
        }
    }
    let naturals = meta
        .all_params()
        .flat_map(|(_, d)| natural_constraints(&d.name, d.ptype, bounds, module.literals.len()))
        .collect();
    Ok(SymState { op_name: meta.op_name.clone(), bounds: *bounds, roots, naturals })
}

#[derive(Clone, Debug, PartialEq)]
enum SymVal {
    Unctl,
    Int(i64),
    Bool(bool),
    Str(String),
    /// Controllable scalar with its term.
    Ctl(Term),
    /// A tensor, list or string parameter itself.
    Root(String),
    /// The shape of a tensor parameter.
    Shape(String),
    /// Pointer to a virtual memory cell.
    Cell(usize),
}

impl SymVal {
    fn term(&self) -> Option<Term> {
        match self {
            SymVal::Int(v) => Some(Term::Int(*v)),
            SymVal::Bool(v) => Some(Term::Bool(*v)),
            SymVal::Ctl(t) => Some(t.clone()),
            _ => None,
        }
    }

    fn constant(&self) -> Option<i64> {
        match self {
            SymVal::Int(v) => Some(*v),
            SymVal::Bool(v) => Some(*v as i64),
            _ => None,
        }
    }
}

fn as_int(t: Term) -> Term {
    match t.sort() {
        Sort::Int => t,
        Sort::Bool => Term::ite(t, Term::Int(1), Term::Int(0)),
    }
}

fn as_bool(t: Term) -> Term {
    match t {
        Term::Int(v) => Term::Bool(v != 0),
        t if t.sort() == Sort::Bool => t,
        t => Term::not(Term::eq(t, Term::Int(0))),
    }
}

struct Frame {
    func: FuncId,
    id: usize,
    vals: HashMap<ValueId, SymVal>,
    /// Caller value receiving the return value.
    ret_dst: Option<ValueId>,
}

struct Walker<'m> {
    module: &'m IRModule,
    bounds: SizeBounds,
    in_loop: Vec<Vec<bool>>,
    frames: Vec<Frame>,
    next_frame_id: usize,
    mem: Vec<SymVal>,
    out: Vec<Constraint>,
    versions: HashMap<String, u32>,
    lazy: BTreeSet<PropertyRef>,
    cur_block: usize,
}

impl<'m> Walker<'m> {
    fn frame(&mut self) -> &mut Frame {
        self.frames.last_mut().expect("frame stack never empty")
    }

    fn get(&self, o: &Operand) -> SymVal {
        match o {
            Operand::Int(v) => SymVal::Int(*v),
            Operand::Bool(v) => SymVal::Bool(*v),
            Operand::Float(_) => SymVal::Unctl,
            Operand::Value(v) => {
                self.frames.last().and_then(|f| f.vals.get(v)).cloned().unwrap_or(SymVal::Unctl)
            }
        }
    }

    fn set(&mut self, dst: Option<ValueId>, v: SymVal) {
        if let Some(d) = dst {
            self.frame().vals.insert(d, v);
        }
    }

    fn aux_name(&mut self, dst: ValueId) -> String {
        let f = self.frames.last().expect("frame stack never empty");
        let func = &self.module.functions[f.func];
        let base = if self.frames.len() == 1 {
            format!("${}", func.value_name(dst))
        } else {
            format!("${}.f{}.{}", func.name, f.id, func.value_name(dst))
        };
        let n = self.versions.entry(base.clone()).or_insert(0);
        *n += 1;
        if *n == 1 {
            base
        } else {
            format!("{base}~{}", *n - 1)
        }
    }

    /// Binds `dst` to a fresh aux symbol defined as `expr`.
    fn define(&mut self, dst: Option<ValueId>, expr: Term, origin: &str) {
        let Some(d) = dst else { return };
        let name = self.aux_name(d);
        let aux = Term::Aux(name.clone(), expr.sort());
        self.out.push(Constraint {
            kind: ConstraintKind::Propagation,
            expr: Term::eq(aux.clone(), expr),
            origin: origin.to_string(),
            defines: Some(name),
        });
        self.set(dst, SymVal::Ctl(aux));
    }

    fn side(&mut self, expr: Term, origin: &str) {
        self.out.push(Constraint { kind: ConstraintKind::Propagation, expr, origin: origin.to_string(), defines: None });
    }

    fn prop(&mut self, param: &str, prop: Property) -> Term {
        let r = PropertyRef::new(param, prop);
        if matches!(prop, Property::NumElement | Property::Iter) && self.lazy.insert(r.clone()) {
            let c = if prop == Property::NumElement {
                numel_product(param, &self.bounds)
            } else {
                iter_range(param, &self.bounds)
            };
            self.out.push(c);
        }
        Term::Prop(r)
    }

    fn tensor_of(&self, v: &SymVal) -> Option<String> {
        match v {
            SymVal::Root(p) | SymVal::Shape(p) if self.module.meta.ptype_of(p) == Some(ParamType::Tensor) => {
                Some(p.clone())
            }
            _ => None,
        }
    }

    fn list_of(&self, v: &SymVal) -> Option<(String, ParamType)> {
        match v {
            SymVal::Root(p) => match self.module.meta.ptype_of(p) {
                Some(t @ (ParamType::ListInt | ParamType::ListFloat)) => Some((p.clone(), t)),
                _ => None,
            },
            _ => None,
        }
    }

    /// `prop(0)` .. `prop(n-1)` selected by a symbolic index.
    fn indexed(&mut self, param: &str, idx: Term, n: u32, prop: fn(u32) -> Property) -> Term {
        if let Term::Int(k) = idx {
            if (0..n as i64).contains(&k) {
                return self.prop(param, prop(k as u32));
            }
        }
        let mut t = Term::Int(0);
        for j in (0..n).rev() {
            let pj = self.prop(param, prop(j));
            t = Term::ite(Term::eq(idx.clone(), Term::Int(j as i64)), pj, t);
        }
        t
    }

    fn exec(&mut self, instr: &Instr, origin: &str) {
        let dst = instr.dst;
        match &instr.op {
            Op::Const(l) => {
                let sv = match l {
                    Literal::Int(i) => SymVal::Int(*i),
                    Literal::Bool(x) => SymVal::Bool(*x),
                    Literal::Float(_) => SymVal::Unctl,
                    Literal::Str(s) => SymVal::Str(s.clone()),
                };
                self.set(dst, sv);
            }
            Op::GetInput(name) | Op::GetAttr(name) => {
                let sv = match self.module.meta.ptype_of(name) {
                    Some(ParamType::Tensor | ParamType::ListInt | ParamType::ListFloat | ParamType::Str) => {
                        SymVal::Root(name.clone())
                    }
                    Some(ParamType::Int) => SymVal::Ctl(Term::Prop(PropertyRef::new(name, Property::IntValue))),
                    Some(ParamType::Bool) => SymVal::Ctl(Term::Prop(PropertyRef::new(name, Property::BoolValue))),
                    Some(ParamType::Float) | None => SymVal::Unctl,
                };
                self.set(dst, sv);
            }
            Op::Shape(a) => {
                let sv = match self.tensor_of(&self.get(a)) {
                    Some(t) => SymVal::Shape(t),
                    None => SymVal::Unctl,
                };
                self.set(dst, sv);
            }
            Op::Ndim(a) => match self.tensor_of(&self.get(a)) {
                Some(t) => {
                    let p = self.prop(&t, Property::Ndim);
                    self.define(dst, p, origin);
                }
                None => self.set(dst, SymVal::Unctl),
            },
            Op::Numel(a) => match self.tensor_of(&self.get(a)) {
                Some(t) => {
                    let p = self.prop(&t, Property::NumElement);
                    self.define(dst, p, origin);
                }
                None => self.set(dst, SymVal::Unctl),
            },
            Op::Dtype(a) => {
                let a = self.get(a);
                if let Some(t) = self.tensor_of(&a).filter(|_| matches!(a, SymVal::Root(_))) {
                    let p = self.prop(&t, Property::Dtype);
                    self.define(dst, p, origin);
                } else if let Some((l, _)) = self.list_of(&a) {
                    let p = self.prop(&l, Property::ElementType);
                    self.define(dst, p, origin);
                } else {
                    self.set(dst, SymVal::Unctl);
                }
            }
            Op::Len(a) => {
                let a = self.get(a);
                if let Some((l, _)) = self.list_of(&a) {
                    let p = self.prop(&l, Property::Length);
                    self.define(dst, p, origin);
                } else if let SymVal::Shape(t) = &a {
                    // property to property: the length of a shape is the rank
                    let p = self.prop(t, Property::Ndim);
                    self.define(dst, p, origin);
                } else {
                    self.set(dst, SymVal::Unctl);
                }
            }
            Op::Dim(a, i) => {
                let (a, i) = (self.get(a), self.get(i));
                match (self.tensor_of(&a), i.term()) {
                    (Some(t), Some(idx)) => {
                        let idx = as_int(idx);
                        let ndim = self.prop(&t, Property::Ndim);
                        self.side(
                            Term::And(vec![Term::le(Term::Int(0), idx.clone()), Term::lt(idx.clone(), ndim)]),
                            origin,
                        );
                        let e = self.indexed(&t, idx, self.bounds.max_ndim, Property::Shape);
                        self.define(dst, e, origin);
                    }
                    _ => self.set(dst, SymVal::Unctl),
                }
            }
            Op::Elem(l, i) => {
                let (l, i) = (self.get(l), self.get(i));
                if self.tensor_of(&l).is_some() && matches!(l, SymVal::Shape(_)) {
                    // elem on a shape value is a dim read
                    let t = self.tensor_of(&l).expect("checked");
                    if let Some(idx) = i.term() {
                        let idx = as_int(idx);
                        let ndim = self.prop(&t, Property::Ndim);
                        self.side(
                            Term::And(vec![Term::le(Term::Int(0), idx.clone()), Term::lt(idx.clone(), ndim)]),
                            origin,
                        );
                        let e = self.indexed(&t, idx, self.bounds.max_ndim, Property::Shape);
                        self.define(dst, e, origin);
                    } else {
                        self.set(dst, SymVal::Unctl);
                    }
                    return;
                }
                let Some((name, ptype)) = self.list_of(&l) else {
                    self.set(dst, SymVal::Unctl);
                    return;
                };
                let f = self.frames.last().expect("frame");
                let looping = self.in_loop[f.func].get(self.cur_block).copied().unwrap_or(false);
                if looping {
                    if ptype == ParamType::ListInt {
                        let p = self.prop(&name, Property::Iter);
                        self.define(dst, p, origin);
                    } else {
                        self.set(dst, SymVal::Unctl);
                    }
                    return;
                }
                match i.term() {
                    Some(idx) => {
                        let idx = as_int(idx);
                        let len = self.prop(&name, Property::Length);
                        self.side(
                            Term::And(vec![Term::le(Term::Int(0), idx.clone()), Term::lt(idx.clone(), len)]),
                            origin,
                        );
                        if ptype == ParamType::ListInt {
                            let e = self.indexed(&name, idx, self.bounds.max_len, Property::Value);
                            self.define(dst, e, origin);
                        } else {
                            self.set(dst, SymVal::Unctl);
                        }
                    }
                    None => self.set(dst, SymVal::Unctl),
                }
            }
            Op::Read(..) => self.set(dst, SymVal::Unctl),
            Op::StrEq(s, lit) => match self.get(s) {
                SymVal::Root(p) if self.module.meta.ptype_of(&p) == Some(ParamType::Str) => {
                    let id = self.module.literal_id(lit).expect("parser interns str_eq literals") as i64;
                    let fid = self.prop(&p, Property::FormatId);
                    self.define(dst, Term::eq(fid, Term::Int(id)), origin);
                }
                SymVal::Str(c) => self.set(dst, SymVal::Bool(&c == lit)),
                _ => self.set(dst, SymVal::Unctl),
            },
            Op::Bin(op, x, y) => {
                let (x, y) = (self.get(x), self.get(y));
                if let (Some(a), Some(c)) = (x.constant(), y.constant()) {
                    let r = match op {
                        BinOp::Add => Some(a.wrapping_add(c)),
                        BinOp::Sub => Some(a.wrapping_sub(c)),
                        BinOp::Mul => Some(a.wrapping_mul(c)),
                        BinOp::SDiv => (c != 0).then(|| a.wrapping_div(c)),
                        BinOp::SRem => (c != 0).then(|| a.wrapping_rem(c)),
                    };
                    self.set(dst, r.map_or(SymVal::Unctl, SymVal::Int));
                    return;
                }
                match (x.term(), y.term()) {
                    (Some(a), Some(c)) => {
                        let (a, c) = (b(as_int(a)), b(as_int(c)));
                        let e = match op {
                            BinOp::Add => Term::Add(a, c),
                            BinOp::Sub => Term::Sub(a, c),
                            BinOp::Mul => Term::Mul(a, c),
                            BinOp::SDiv | BinOp::SRem => {
                                self.side(Term::not(Term::eq((*c).clone(), Term::Int(0))), origin);
                                if *op == BinOp::SDiv {
                                    Term::Div(a, c)
                                } else {
                                    Term::Rem(a, c)
                                }
                            }
                        };
                        self.define(dst, e, origin);
                    }
                    _ => self.set(dst, SymVal::Unctl),
                }
            }
            Op::Icmp(pred, x, y) => {
                let (x, y) = (self.get(x), self.get(y));
                if let (Some(a), Some(c)) = (x.constant(), y.constant()) {
                    self.set(dst, SymVal::Bool(pred.eval(a, c)));
                    return;
                }
                match (x.term(), y.term()) {
                    (Some(a), Some(c)) => {
                        let (a, c) = (as_int(a), as_int(c));
                        let e = match pred {
                            Pred::Eq => Term::eq(a, c),
                            Pred::Ne => Term::not(Term::eq(a, c)),
                            Pred::Slt => Term::lt(a, c),
                            Pred::Sle => Term::le(a, c),
                            Pred::Sgt => Term::lt(c, a),
                            Pred::Sge => Term::le(c, a),
                        };
                        self.define(dst, e, origin);
                    }
                    _ => self.set(dst, SymVal::Unctl),
                }
            }
            Op::Logic(op, x, y) => {
                let (x, y) = (self.get(x), self.get(y));
                if let (Some(a), Some(c)) = (x.constant(), y.constant()) {
                    let r = match op {
                        LogicOp::And => a != 0 && c != 0,
                        LogicOp::Or => a != 0 || c != 0,
                    };
                    self.set(dst, SymVal::Bool(r));
                    return;
                }
                match (x.term(), y.term()) {
                    (Some(a), Some(c)) => {
                        let parts = vec![as_bool(a), as_bool(c)];
                        let e = match op {
                            LogicOp::And => Term::And(parts),
                            LogicOp::Or => Term::Or(parts),
                        };
                        self.define(dst, e, origin);
                    }
                    _ => self.set(dst, SymVal::Unctl),
                }
            }
            Op::Not(x) => {
                let x = self.get(x);
                if let Some(a) = x.constant() {
                    self.set(dst, SymVal::Bool(a == 0));
                } else if let Some(t) = x.term() {
                    self.define(dst, Term::not(as_bool(t)), origin);
                } else {
                    self.set(dst, SymVal::Unctl);
                }
            }
            Op::Select(c, x, y) => {
                let (c, x, y) = (self.get(c), self.get(x), self.get(y));
                if let Some(k) = c.constant() {
                    self.set(dst, if k != 0 { x } else { y });
                    return;
                }
                match (c.term(), x.term(), y.term()) {
                    (Some(c), Some(x), Some(y)) => {
                        let (x, y) = if x.sort() == y.sort() { (x, y) } else { (as_int(x), as_int(y)) };
                        self.define(dst, Term::ite(as_bool(c), x, y), origin);
                    }
                    _ => self.set(dst, SymVal::Unctl),
                }
            }
            Op::Alloca => {
                self.mem.push(SymVal::Unctl);
                let cell = SymVal::Cell(self.mem.len() - 1);
                self.set(dst, cell);
            }
            Op::Store(p, x) => {
                if let SymVal::Cell(k) = self.get(p) {
                    self.mem[k] = self.get(x);
                }
            }
            Op::Load(p) => {
                let sv = match self.get(p) {
                    SymVal::Cell(k) => self.mem[k].clone(),
                    _ => SymVal::Unctl,
                };
                self.set(dst, sv);
            }
            // calls reaching here are opaque: intrinsics, or helpers beyond the inlining depth
            Op::Call(..) => self.set(dst, SymVal::Unctl),
            Op::AbortIf(_) | Op::Sink(_) => {}
        }
    }
}

fn origin(module: &IRModule, func: FuncId, block: usize, index: usize) -> String {
    let f = &module.functions[func];
    format!("@{}/{}#{}", f.name, f.blocks[block].label, index)
}

/// Walks the executed steps of `path`, building its constraint set.
pub fn propagate_path(
    module: &IRModule,
    path: &Path,
    state: &SymState,
    cache: &UnsatCache,
    opts: &PropagateOptions,
) -> ConstraintSet {
    let mut cs = ConstraintSet::empty(&state.op_name, &path.id);
    cs.constraints = state.naturals.clone();
    if let Some(prefix_len) = cache.lookup(&path.steps) {
        cs.status = SatStatus::Unsat { prefix_len };
        return cs;
    }
    let mut w = Walker {
        module,
        bounds: state.bounds,
        in_loop: module.functions.iter().map(|f| build_cfg(f).loop_blocks()).collect(),
        frames: vec![Frame { func: module.main_index(), id: 0, vals: HashMap::new(), ret_dst: None }],
        next_frame_id: 1,
        mem: Vec::new(),
        out: state.naturals.clone(),
        versions: HashMap::new(),
        lazy: BTreeSet::new(),
        cur_block: 0,
    };
    let steps = path.executed_steps();
    let mut checked_upto = 0usize;
    let mut last_branch = 0usize;
    let mut unknown = false;

    for (k, s) in steps.iter().enumerate() {
        let bb = &module.functions[s.func].blocks[s.block];
        w.cur_block = s.block;
        for idx in s.start as usize..s.end as usize {
            let o = origin(module, s.func, s.block, idx);
            w.exec(&bb.instrs[idx], &o);
        }
        if (s.end as usize) < bb.instrs.len() {
            // stopped at a call; the callee frame starts with the next step
            let entered = steps.get(k + 1).is_some_and(|n| n.depth == s.depth + 1);
            let instr = &bb.instrs[s.end as usize];
            if let (true, Op::Call(name, args)) = (entered, &instr.op) {
                let callee = module.func_index(name).expect("inlined callee exists");
                let vals: HashMap<ValueId, SymVal> = module.functions[callee]
                    .params
                    .iter()
                    .zip(args)
                    .map(|(p, a)| (*p, w.get(a)))
                    .collect();
                let id = w.next_frame_id;
                w.next_frame_id += 1;
                w.frames.push(Frame { func: callee, id, vals, ret_dst: instr.dst });
            }
            continue;
        }
        match &bb.term {
            Terminator::Br { cond, .. } => {
                let Some(dir) = s.dir else { continue };
                let c = w.get(cond);
                if let Some(k0) = c.constant() {
                    if (k0 != 0) != dir {
                        cache.insert(&path.steps[..=k]);
                        cs.constraints = w.out;
                        cs.status = SatStatus::Unsat { prefix_len: k + 1 };
                        return cs;
                    }
                    continue;
                }
                let Some(t) = c.term() else { continue };
                if s.via_back_edge {
                    // loop continuation after the single unrolled iteration
                    continue;
                }
                let t = as_bool(t);
                let expr = if dir { t } else { Term::not(t) };
                let o = origin(module, s.func, s.block, bb.instrs.len());
                w.out.push(Constraint { kind: ConstraintKind::Branch, expr, origin: o, defines: None });
                last_branch = k + 1;
                if opts.prune {
                    checked_upto = w.out.len();
                    match check_constraints(&w.out, &opts.solver) {
                        SatResult::Unsat => {
                            cache.insert(&path.steps[..=k]);
                            cs.constraints = w.out;
                            cs.status = SatStatus::Unsat { prefix_len: k + 1 };
                            return cs;
                        }
                        SatResult::Unknown => unknown = true,
                        SatResult::Sat(_) => unknown = false,
                    }
                }
            }
            Terminator::Ret(v) if w.frames.len() > 1 => {
                let rv = v.as_ref().map_or(SymVal::Unctl, |o| w.get(o));
                let f = w.frames.pop().expect("callee frame");
                w.set(f.ret_dst, rv);
            }
            Terminator::Ret(_) | Terminator::Jmp(_) | Terminator::Fail(_) => {}
        }
    }

    if checked_upto < w.out.len() || !opts.prune {
        unknown = false;
        match check_constraints(&w.out, &opts.solver) {
            SatResult::Sat(_) => {}
            SatResult::Unknown => unknown = true,
            SatResult::Unsat => {
                cs.constraints = w.out;
                cs.status = SatStatus::Unsat { prefix_len: last_branch.max(1).min(steps.len().max(1)) };
                return cs;
            }
        }
    }
    cs.constraints = w.out;
    cs.status = if unknown { SatStatus::Unknown } else { SatStatus::Sat };
    cs
}
