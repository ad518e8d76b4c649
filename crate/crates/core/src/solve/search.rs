//! Finite-domain search: interval narrowing over a compiled term DAG plus
//! backtracking on property variables. Auxiliary symbols are never branched on;
//! their values follow from their definitions.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::symprop::{Constraint, Property, PropertyRef, Sort, Term};

/// Magnitude cap for variables with no natural range.
const BIG: i64 = 1 << 40;
const MAX_ROUNDS: usize = 40;
/// Values tried per variable before a wide domain gives up as unknown.
const SCAN_CAP: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Iv {
    lo: i64,
    hi: i64,
}

impl Iv {
    fn point(v: i64) -> Iv {
        Iv { lo: v, hi: v }
    }
    fn is_point(self) -> bool {
        self.lo == self.hi
    }
    fn meet(self, o: Iv) -> Option<Iv> {
        let r = Iv { lo: self.lo.max(o.lo), hi: self.hi.min(o.hi) };
        (r.lo <= r.hi).then_some(r)
    }
    fn hull(self, o: Iv) -> Iv {
        Iv { lo: self.lo.min(o.lo), hi: self.hi.max(o.hi) }
    }
    fn width(self) -> u128 {
        (self.hi as i128 - self.lo as i128) as u128 + 1
    }
    fn contains(self, v: i64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

const BOOL: Iv = Iv { lo: 0, hi: 1 };
const TRUE: Iv = Iv { lo: 1, hi: 1 };
const FALSE: Iv = Iv { lo: 0, hi: 0 };

fn clamp(v: i128) -> i64 {
    v.clamp(i64::MIN as i128 / 2, i64::MAX as i128 / 2) as i64
}

#[derive(Clone, Debug)]
enum Node {
    Const(i64),
    Var(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Rem(usize, usize),
    Eq(usize, usize),
    Lt(usize, usize),
    Le(usize, usize),
    Not(usize),
    And(Vec<usize>),
    Or(Vec<usize>),
    Ite(usize, usize, usize),
}

#[derive(Clone, Debug)]
enum VarSym {
    Prop(PropertyRef),
    Aux(String),
}

enum Outcome {
    Sat,
    Unsat,
    Unknown,
}

pub(crate) enum Verdict {
    Sat(BTreeMap<PropertyRef, i64>),
    Unsat,
    Unknown,
}

pub(crate) struct Budget {
    pub nodes: u64,
    pub deadline: Option<Instant>,
}

struct Problem {
    nodes: Vec<Node>,
    memo: HashMap<Term, usize>,
    vars: Vec<VarSym>,
    var_index: HashMap<String, usize>,
    roots: Vec<usize>,
}

impl Problem {
    fn compile(&mut self, t: &Term) -> usize {
        if let Some(&id) = self.memo.get(t) {
            return id;
        }
        let node = match t {
            Term::Int(v) => Node::Const(*v),
            Term::Bool(v) => Node::Const(*v as i64),
            Term::Prop(p) => Node::Var(self.var(VarSym::Prop(p.clone()))),
            Term::Aux(n, _) => Node::Var(self.var(VarSym::Aux(n.clone()))),
            Term::Add(a, c) => Node::Add(self.compile(a), self.compile(c)),
            Term::Sub(a, c) => Node::Sub(self.compile(a), self.compile(c)),
            Term::Mul(a, c) => Node::Mul(self.compile(a), self.compile(c)),
            Term::Div(a, c) => Node::Div(self.compile(a), self.compile(c)),
            Term::Rem(a, c) => Node::Rem(self.compile(a), self.compile(c)),
            Term::Eq(a, c) => Node::Eq(self.compile(a), self.compile(c)),
            Term::Lt(a, c) => Node::Lt(self.compile(a), self.compile(c)),
            Term::Le(a, c) => Node::Le(self.compile(a), self.compile(c)),
            Term::Not(a) => Node::Not(self.compile(a)),
            Term::And(v) => Node::And(v.iter().map(|x| self.compile(x)).collect()),
            Term::Or(v) => Node::Or(v.iter().map(|x| self.compile(x)).collect()),
            Term::Ite(c, x, y) => Node::Ite(self.compile(c), self.compile(x), self.compile(y)),
        };
        self.nodes.push(node);
        let id = self.nodes.len() - 1;
        self.memo.insert(t.clone(), id);
        id
    }

    fn var(&mut self, sym: VarSym) -> usize {
        let key = match &sym {
            VarSym::Prop(p) => format!("p:{p}"),
            VarSym::Aux(n) => format!("a:{n}"),
        };
        if let Some(&i) = self.var_index.get(&key) {
            return i;
        }
        self.vars.push(sym);
        self.var_index.insert(key, self.vars.len() - 1);
        self.vars.len() - 1
    }
}

struct Engine {
    p: Problem,
    dom: Vec<Iv>,
    rank: Vec<u8>,
    rng: ChaCha8Rng,
    budget: Budget,
    spent: u64,
}

fn layer(p: &PropertyRef) -> u8 {
    match p.prop {
        Property::Shape(_) | Property::Value(_) => 1,
        Property::Iter => 2,
        Property::NumElement => 3,
        _ => 0,
    }
}

impl Engine {
    fn fwd(&self, n: usize) -> Iv {
        match &self.p.nodes[n] {
            Node::Const(v) => Iv::point(*v),
            Node::Var(i) => self.dom[*i],
            Node::Add(a, c) => {
                let (a, c) = (self.fwd(*a), self.fwd(*c));
                Iv { lo: clamp(a.lo as i128 + c.lo as i128), hi: clamp(a.hi as i128 + c.hi as i128) }
            }
            Node::Sub(a, c) => {
                let (a, c) = (self.fwd(*a), self.fwd(*c));
                Iv { lo: clamp(a.lo as i128 - c.hi as i128), hi: clamp(a.hi as i128 - c.lo as i128) }
            }
            Node::Mul(a, c) => {
                let (a, c) = (self.fwd(*a), self.fwd(*c));
                let ps = [
                    a.lo as i128 * c.lo as i128,
                    a.lo as i128 * c.hi as i128,
                    a.hi as i128 * c.lo as i128,
                    a.hi as i128 * c.hi as i128,
                ];
                Iv { lo: clamp(*ps.iter().min().unwrap()), hi: clamp(*ps.iter().max().unwrap()) }
            }
            Node::Div(a, c) => {
                let (a, c) = (self.fwd(*a), self.fwd(*c));
                div_iv(a, c)
            }
            Node::Rem(a, c) => {
                let (a, c) = (self.fwd(*a), self.fwd(*c));
                rem_iv(a, c)
            }
            Node::Eq(a, c) => {
                let (a, c) = (self.fwd(*a), self.fwd(*c));
                if a.is_point() && c.is_point() && a.lo == c.lo {
                    TRUE
                } else if a.meet(c).is_none() {
                    FALSE
                } else {
                    BOOL
                }
            }
            Node::Lt(a, c) => {
                let (a, c) = (self.fwd(*a), self.fwd(*c));
                if a.hi < c.lo {
                    TRUE
                } else if a.lo >= c.hi {
                    FALSE
                } else {
                    BOOL
                }
            }
            Node::Le(a, c) => {
                let (a, c) = (self.fwd(*a), self.fwd(*c));
                if a.hi <= c.lo {
                    TRUE
                } else if a.lo > c.hi {
                    FALSE
                } else {
                    BOOL
                }
            }
            Node::Not(a) => {
                let a = self.fwd(*a);
                Iv { lo: 1 - a.hi.min(1), hi: 1 - a.lo.max(0) }
            }
            Node::And(v) => {
                let mut all_true = true;
                for &c in v {
                    let x = self.fwd(c);
                    if x == FALSE {
                        return FALSE;
                    }
                    all_true &= x == TRUE;
                }
                if all_true {
                    TRUE
                } else {
                    BOOL
                }
            }
            Node::Or(v) => {
                let mut all_false = true;
                for &c in v {
                    let x = self.fwd(c);
                    if x == TRUE {
                        return TRUE;
                    }
                    all_false &= x == FALSE;
                }
                if all_false {
                    FALSE
                } else {
                    BOOL
                }
            }
            Node::Ite(c, x, y) => {
                let cv = self.fwd(*c);
                if cv == TRUE {
                    self.fwd(*x)
                } else if cv == FALSE {
                    self.fwd(*y)
                } else {
                    self.fwd(*x).hull(self.fwd(*y))
                }
            }
        }
    }

    /// Narrows the subtree of `n` so that its value lies in `req`. `Err` on conflict.
    fn proj(&mut self, n: usize, req: Iv, changed: &mut bool) -> Result<(), ()> {
        let cur = self.fwd(n);
        let req = cur.meet(req).ok_or(())?;
        let node = self.p.nodes[n].clone();
        match node {
            Node::Const(_) => Ok(()),
            Node::Var(i) => {
                let d = self.dom[i].meet(req).ok_or(())?;
                if d != self.dom[i] {
                    self.dom[i] = d;
                    *changed = true;
                }
                Ok(())
            }
            Node::Add(a, c) => {
                let (av, cv) = (self.fwd(a), self.fwd(c));
                self.proj(a, Iv { lo: clamp(req.lo as i128 - cv.hi as i128), hi: clamp(req.hi as i128 - cv.lo as i128) }, changed)?;
                let av2 = self.fwd(a);
                let _ = av;
                self.proj(c, Iv { lo: clamp(req.lo as i128 - av2.hi as i128), hi: clamp(req.hi as i128 - av2.lo as i128) }, changed)
            }
            Node::Sub(a, c) => {
                let cv = self.fwd(c);
                self.proj(a, Iv { lo: clamp(req.lo as i128 + cv.lo as i128), hi: clamp(req.hi as i128 + cv.hi as i128) }, changed)?;
                let av = self.fwd(a);
                self.proj(c, Iv { lo: clamp(av.lo as i128 - req.hi as i128), hi: clamp(av.hi as i128 - req.lo as i128) }, changed)
            }
            Node::Mul(a, c) => {
                let (av, cv) = (self.fwd(a), self.fwd(c));
                if let Some(r) = mul_inverse(req, cv) {
                    self.proj(a, r, changed)?;
                }
                if let Some(r) = mul_inverse(req, av) {
                    self.proj(c, r, changed)?;
                }
                Ok(())
            }
            Node::Div(_, c) | Node::Rem(_, c) => {
                let _ = c;
                Ok(())
            }
            Node::Eq(a, c) => {
                if req == TRUE {
                    let cv = self.fwd(c);
                    self.proj(a, cv, changed)?;
                    let av = self.fwd(a);
                    self.proj(c, av, changed)
                } else if req == FALSE {
                    let (av, cv) = (self.fwd(a), self.fwd(c));
                    if cv.is_point() {
                        self.proj(a, exclude(av, cv.lo).ok_or(())?, changed)?;
                    }
                    let av = self.fwd(a);
                    if av.is_point() {
                        self.proj(c, exclude(cv, av.lo).ok_or(())?, changed)?;
                    }
                    Ok(())
                } else {
                    Ok(())
                }
            }
            Node::Lt(a, c) | Node::Le(a, c) => {
                let strict = matches!(self.p.nodes[n], Node::Lt(..));
                // normalize to a <= c - k (k = 1 for <) or, when false, c <= a - k'
                let (x, y, k) = if req == TRUE {
                    (a, c, strict as i64)
                } else if req == FALSE {
                    (c, a, (!strict) as i64)
                } else {
                    return Ok(());
                };
                let yv = self.fwd(y);
                self.proj(x, Iv { lo: i64::MIN / 2, hi: clamp(yv.hi as i128 - k as i128) }, changed)?;
                let xv = self.fwd(x);
                self.proj(y, Iv { lo: clamp(xv.lo as i128 + k as i128), hi: i64::MAX / 2 }, changed)
            }
            Node::Not(a) => {
                if req.is_point() {
                    self.proj(a, Iv::point(1 - req.lo), changed)
                } else {
                    Ok(())
                }
            }
            Node::And(v) => {
                if req == TRUE {
                    for c in v {
                        self.proj(c, TRUE, changed)?;
                    }
                } else if req == FALSE {
                    self.unit(&v, TRUE, FALSE, changed)?;
                }
                Ok(())
            }
            Node::Or(v) => {
                if req == FALSE {
                    for c in v {
                        self.proj(c, FALSE, changed)?;
                    }
                } else if req == TRUE {
                    self.unit(&v, FALSE, TRUE, changed)?;
                }
                Ok(())
            }
            Node::Ite(c, x, y) => {
                let cv = self.fwd(c);
                if cv == TRUE {
                    self.proj(x, req, changed)
                } else if cv == FALSE {
                    self.proj(y, req, changed)
                } else {
                    let (xv, yv) = (self.fwd(x), self.fwd(y));
                    match (xv.meet(req).is_some(), yv.meet(req).is_some()) {
                        (false, false) => Err(()),
                        (false, true) => {
                            self.proj(c, FALSE, changed)?;
                            self.proj(y, req, changed)
                        }
                        (true, false) => {
                            self.proj(c, TRUE, changed)?;
                            self.proj(x, req, changed)
                        }
                        (true, true) => Ok(()),
                    }
                }
            }
        }
    }

    /// If all children but one are fixed at `settled`, forces the remaining one to `force`.
    fn unit(&mut self, kids: &[usize], settled: Iv, force: Iv, changed: &mut bool) -> Result<(), ()> {
        let mut open = None;
        for &k in kids {
            let v = self.fwd(k);
            if v == settled {
                continue;
            }
            if v == force {
                return Ok(());
            }
            if open.is_some() {
                return Ok(());
            }
            open = Some(k);
        }
        match open {
            Some(k) => self.proj(k, force, changed),
            None => Err(()),
        }
    }

    fn propagate(&mut self, roots: &[usize]) -> bool {
        for _ in 0..MAX_ROUNDS {
            let mut changed = false;
            for &root in roots {
                if self.proj(root, TRUE, &mut changed).is_err() {
                    return false;
                }
            }
            if !changed {
                break;
            }
        }
        true
    }

    fn eval_node(&self, n: usize) -> Option<i64> {
        let v = self.fwd(n);
        v.is_point().then_some(v.lo)
    }

    fn out_of_budget(&mut self) -> bool {
        if self.spent >= self.budget.nodes {
            return true;
        }
        if self.spent % 256 == 0 {
            if let Some(d) = self.budget.deadline {
                if Instant::now() >= d {
                    return true;
                }
            }
        }
        false
    }

    fn value_order(&mut self, d: Iv) -> Vec<i64> {
        let w = d.width();
        if w <= 64 {
            let mut vals: Vec<i64> = (d.lo..=d.hi).collect();
            vals.shuffle(&mut self.rng);
            vals
        } else {
            let take = w.min(SCAN_CAP as u128) as i64;
            let start = self.rng.gen_range(d.lo..=d.hi);
            (0..take)
                .map(|k| {
                    let off = (start as i128 - d.lo as i128 + k as i128) % w as i128;
                    (d.lo as i128 + off) as i64
                })
                .collect()
        }
    }

    /// Searches one component: `roots` and the property variables they mention.
    fn search(&mut self, roots: &[usize], vars: &[usize]) -> Outcome {
        self.spent += 1;
        if self.out_of_budget() {
            return Outcome::Unknown;
        }
        if !self.propagate(roots) {
            return Outcome::Unsat;
        }
        let pick = vars
            .iter()
            .copied()
            .filter(|&i| !self.dom[i].is_point())
            .min_by_key(|&i| (self.dom[i].width(), self.rank[i], i));
        let Some(var) = pick else {
            let ok = roots.iter().all(|&r| self.eval_node(r) == Some(1));
            return if ok { Outcome::Sat } else { Outcome::Unsat };
        };
        let d = self.dom[var];
        let complete = d.width() <= SCAN_CAP as u128;
        for v in self.value_order(d) {
            let saved = self.dom.clone();
            self.dom[var] = Iv::point(v);
            match self.search(roots, vars) {
                Outcome::Sat => return Outcome::Sat,
                Outcome::Unknown => return Outcome::Unknown,
                Outcome::Unsat => self.dom = saved,
            }
        }
        if complete {
            Outcome::Unsat
        } else {
            Outcome::Unknown
        }
    }
}

/// Decides `constraints ∧ extra` over finite domains. Independent groups of
/// variables are searched one after another.
pub(crate) fn solve(constraints: &[Constraint], extra: &[Term], seed: u64, budget: Budget) -> Verdict {
    let mut p = Problem {
        nodes: Vec::new(),
        memo: HashMap::new(),
        vars: Vec::new(),
        var_index: HashMap::new(),
        roots: Vec::new(),
    };
    for c in constraints {
        let r = p.compile(&c.expr);
        p.roots.push(r);
    }
    for t in extra {
        let r = p.compile(t);
        p.roots.push(r);
    }
    let mut dom = Vec::with_capacity(p.vars.len());
    let mut rank = Vec::new();
    for v in &p.vars {
        match v {
            VarSym::Prop(pr) => {
                dom.push(if pr.prop.sort() == Sort::Bool { BOOL } else { Iv { lo: -BIG, hi: BIG } });
                rank.push(layer(pr));
            }
            VarSym::Aux(_) => {
                dom.push(Iv { lo: -BIG, hi: BIG });
                rank.push(9);
            }
        }
    }
    for (name, s) in aux_sorts(constraints) {
        if s == Sort::Bool {
            if let Some(&i) = p.var_index.get(&format!("a:{name}")) {
                dom[i] = BOOL;
            }
        }
    }
    let groups = components(&p);
    let mut e = Engine { p, dom, rank, rng: ChaCha8Rng::seed_from_u64(seed), budget, spent: 0 };
    for (roots, vars) in groups {
        let primary: Vec<usize> =
            vars.into_iter().filter(|&v| matches!(e.p.vars[v], VarSym::Prop(_))).collect();
        match e.search(&roots, &primary) {
            Outcome::Sat => {}
            Outcome::Unsat => return Verdict::Unsat,
            Outcome::Unknown => return Verdict::Unknown,
        }
    }
    let assignment: BTreeMap<PropertyRef, i64> = e
        .p
        .vars
        .iter()
        .enumerate()
        .filter_map(|(i, v)| match v {
            VarSym::Prop(pr) => Some((pr.clone(), e.dom[i].lo)),
            VarSym::Aux(_) => None,
        })
        .collect();
    // interval reasoning is only trusted once the witness checks out concretely
    if satisfies(constraints, extra, &assignment) {
        Verdict::Sat(assignment)
    } else {
        Verdict::Unknown
    }
}

/// Groups roots that share variables, transitively.
fn components(p: &Problem) -> Vec<(Vec<usize>, Vec<usize>)> {
    let n = p.vars.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut c = x;
        while parent[c] != r {
            let next = parent[c];
            parent[c] = r;
            c = next;
        }
        r
    }
    let root_vars: Vec<Vec<usize>> = p.roots.iter().map(|&r| vars_of(p, r)).collect();
    for vs in &root_vars {
        for w in vs.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            parent[a] = b;
        }
    }
    let mut by_rep: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (ri, vs) in root_vars.iter().enumerate() {
        // variable-free roots are checked with the first group or alone
        let rep = match vs.first() {
            Some(&v) => find(&mut parent, v),
            None => usize::MAX,
        };
        by_rep.entry(rep).or_default().0.push(p.roots[ri]);
    }
    for v in 0..n {
        let rep = find(&mut parent, v);
        by_rep.entry(rep).or_default().1.push(v);
    }
    by_rep.into_values().collect()
}

fn vars_of(p: &Problem, root: usize) -> Vec<usize> {
    let mut seen = vec![false; p.nodes.len()];
    let mut out = Vec::new();
    let mut stack = vec![root];
    while let Some(n) = stack.pop() {
        if std::mem::replace(&mut seen[n], true) {
            continue;
        }
        match &p.nodes[n] {
            Node::Const(_) => {}
            Node::Var(i) => out.push(*i),
            Node::Add(a, c)
            | Node::Sub(a, c)
            | Node::Mul(a, c)
            | Node::Div(a, c)
            | Node::Rem(a, c)
            | Node::Eq(a, c)
            | Node::Lt(a, c)
            | Node::Le(a, c) => stack.extend([*a, *c]),
            Node::Not(a) => stack.push(*a),
            Node::And(v) | Node::Or(v) => stack.extend(v.iter().copied()),
            Node::Ite(c, x, y) => stack.extend([*c, *x, *y]),
        }
    }
    out.sort_unstable();
    out
}

/// Direct evaluation: aux symbols take the values their definitions give them,
/// then every constraint and extra term must evaluate to true.
pub(crate) fn satisfies(constraints: &[Constraint], extra: &[Term], a: &BTreeMap<PropertyRef, i64>) -> bool {
    let mut aux: HashMap<String, i64> = HashMap::new();
    for c in constraints {
        if let (Some(name), Term::Eq(_, rhs)) = (&c.defines, &c.expr) {
            let v = rhs.eval(&|t: &Term| match t {
                Term::Prop(p) => a.get(p).copied(),
                Term::Aux(n, _) => aux.get(n).copied(),
                _ => None,
            });
            match v {
                Some(v) => {
                    aux.insert(name.clone(), v);
                }
                None => return false,
            }
        }
    }
    let env = |t: &Term| match t {
        Term::Prop(p) => a.get(p).copied(),
        Term::Aux(n, _) => aux.get(n).copied(),
        _ => None,
    };
    constraints.iter().all(|c| c.expr.eval(&env) == Some(1)) && extra.iter().all(|t| t.eval(&env) == Some(1))
}

fn aux_sorts(constraints: &[Constraint]) -> Vec<(String, Sort)> {
    constraints
        .iter()
        .filter_map(|c| match (&c.defines, &c.expr) {
            (Some(n), Term::Eq(a, _)) => Some((n.clone(), a.sort())),
            _ => None,
        })
        .collect()
}

fn exclude(d: Iv, v: i64) -> Option<Iv> {
    if d.is_point() && d.lo == v {
        None
    } else if d.lo == v {
        Some(Iv { lo: v + 1, hi: d.hi })
    } else if d.hi == v {
        Some(Iv { lo: d.lo, hi: v - 1 })
    } else {
        Some(d)
    }
}

/// Values of `a` for which `a * c` can land in `req`, when `c` is a nonzero point.
fn mul_inverse(req: Iv, c: Iv) -> Option<Iv> {
    if !c.is_point() || c.lo == 0 {
        return None;
    }
    let k = c.lo as i128;
    let (lo, hi) = (req.lo as i128, req.hi as i128);
    let (a, b) = if k > 0 { (lo, hi) } else { (hi, lo) };
    let lo_q = ceil_div(a, k);
    let hi_q = floor_div(b, k);
    Some(Iv { lo: clamp(lo_q), hi: clamp(hi_q) })
}

fn floor_div(a: i128, b: i128) -> i128 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn ceil_div(a: i128, b: i128) -> i128 {
    -floor_div(-a, b)
}

fn div_iv(a: Iv, c: Iv) -> Iv {
    let mut out: Option<Iv> = None;
    let mut add = |v: i64| {
        let p = Iv::point(v);
        out = Some(out.map_or(p, |o| o.hull(p)));
    };
    if c.contains(0) {
        add(0);
    }
    let parts = [(c.lo, c.hi.min(-1)), (c.lo.max(1), c.hi)];
    for (lo, hi) in parts {
        if lo > hi {
            continue;
        }
        for x in [a.lo, a.hi] {
            for y in [lo, hi] {
                add(super::super::symprop::term::tdiv(x, y));
            }
        }
    }
    out.unwrap_or(Iv::point(0))
}

fn rem_iv(a: Iv, c: Iv) -> Iv {
    if a.is_point() && c.is_point() {
        return Iv::point(crate::symprop::term::trem(a.lo, c.lo));
    }
    let m = (c.lo as i128).abs().max((c.hi as i128).abs());
    let m = clamp(m - 1).max(0);
    let lo = if a.lo >= 0 { 0 } else { a.lo.max(-m) };
    let hi = if a.hi <= 0 { 0 } else { a.hi.min(m) };
    Iv { lo, hi }
}
