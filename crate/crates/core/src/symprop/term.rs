use std::collections::BTreeSet;
use std::fmt;

use serde::{Serialize, Serializer};

use super::PropertyRef;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sort {
    Int,
    Bool,
}

/// Constraint terms. Booleans evaluate to 0/1.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Int(i64),
    Bool(bool),
    Prop(PropertyRef),
    /// Auxiliary symbol for an intermediate SSA value, fixed by a defining constraint.
    Aux(String, Sort),
    Add(Box<Term>, Box<Term>),
    Sub(Box<Term>, Box<Term>),
    Mul(Box<Term>, Box<Term>),
    /// Truncated division.
    Div(Box<Term>, Box<Term>),
    /// Truncated remainder, sign follows the dividend.
    Rem(Box<Term>, Box<Term>),
    Eq(Box<Term>, Box<Term>),
    Lt(Box<Term>, Box<Term>),
    Le(Box<Term>, Box<Term>),
    Not(Box<Term>),
    And(Vec<Term>),
    Or(Vec<Term>),
    Ite(Box<Term>, Box<Term>, Box<Term>),
}

pub fn b(t: Term) -> Box<Term> {
    Box::new(t)
}

impl Term {
    pub fn prop(p: PropertyRef) -> Term {
        Term::Prop(p)
    }

    pub fn eq(a: Term, c: Term) -> Term {
        Term::Eq(b(a), b(c))
    }

    pub fn lt(a: Term, c: Term) -> Term {
        Term::Lt(b(a), b(c))
    }

    pub fn le(a: Term, c: Term) -> Term {
        Term::Le(b(a), b(c))
    }

    pub fn not(a: Term) -> Term {
        match a {
            Term::Bool(v) => Term::Bool(!v),
            Term::Not(inner) => *inner,
            other => Term::Not(b(other)),
        }
    }

    pub fn ite(c: Term, t: Term, e: Term) -> Term {
        Term::Ite(b(c), b(t), b(e))
    }

    /// `lo <= x <= hi`
    pub fn in_range(x: Term, lo: i64, hi: i64) -> Term {
        Term::And(vec![Term::le(Term::Int(lo), x.clone()), Term::le(x, Term::Int(hi))])
    }

    pub fn sort(&self) -> Sort {
        match self {
            Term::Int(_)
            | Term::Add(..)
            | Term::Sub(..)
            | Term::Mul(..)
            | Term::Div(..)
            | Term::Rem(..) => Sort::Int,
            Term::Bool(_)
            | Term::Eq(..)
            | Term::Lt(..)
            | Term::Le(..)
            | Term::Not(_)
            | Term::And(_)
            | Term::Or(_) => Sort::Bool,
            Term::Prop(p) => p.prop.sort(),
            Term::Aux(_, s) => *s,
            Term::Ite(_, t, _) => t.sort(),
        }
    }

    pub fn children(&self) -> Vec<&Term> {
        match self {
            Term::Int(_) | Term::Bool(_) | Term::Prop(_) | Term::Aux(..) => Vec::new(),
            Term::Add(a, c)
            | Term::Sub(a, c)
            | Term::Mul(a, c)
            | Term::Div(a, c)
            | Term::Rem(a, c)
            | Term::Eq(a, c)
            | Term::Lt(a, c)
            | Term::Le(a, c) => vec![a, c],
            Term::Not(a) => vec![a],
            Term::And(v) | Term::Or(v) => v.iter().collect(),
            Term::Ite(c, t, e) => vec![c, t, e],
        }
    }

    pub fn props(&self) -> BTreeSet<PropertyRef> {
        let mut out = BTreeSet::new();
        self.visit(&mut |t| {
            if let Term::Prop(p) = t {
                out.insert(p.clone());
            }
        });
        out
    }

    pub fn auxes(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |t| {
            if let Term::Aux(n, _) = t {
                out.insert(n.clone());
            }
        });
        out
    }

    pub fn visit(&self, f: &mut impl FnMut(&Term)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    /// Whether the term is sort-correct. Comparison operands must be integers,
    /// except `=` which accepts two booleans.
    pub fn well_sorted(&self) -> bool {
        let kids_ok = self.children().iter().all(|c| c.well_sorted());
        kids_ok
            && match self {
                Term::Add(a, c) | Term::Sub(a, c) | Term::Mul(a, c) | Term::Div(a, c) | Term::Rem(a, c)
                | Term::Lt(a, c) | Term::Le(a, c) => a.sort() == Sort::Int && c.sort() == Sort::Int,
                Term::Eq(a, c) => a.sort() == c.sort(),
                Term::Not(a) => a.sort() == Sort::Bool,
                Term::And(v) | Term::Or(v) => v.iter().all(|t| t.sort() == Sort::Bool),
                Term::Ite(c, t, e) => c.sort() == Sort::Bool && t.sort() == e.sort(),
                _ => true,
            }
    }

    /// Evaluates the term. `env` supplies symbol values; `None` if any symbol is missing.
    /// Division and remainder by zero evaluate to 0; guards elsewhere exclude them.
    pub fn eval(&self, env: &impl Fn(&Term) -> Option<i64>) -> Option<i64> {
        Some(match self {
            Term::Int(v) => *v,
            Term::Bool(v) => *v as i64,
            Term::Prop(_) | Term::Aux(..) => env(self)?,
            Term::Add(a, c) => a.eval(env)?.wrapping_add(c.eval(env)?),
            Term::Sub(a, c) => a.eval(env)?.wrapping_sub(c.eval(env)?),
            Term::Mul(a, c) => a.eval(env)?.wrapping_mul(c.eval(env)?),
            Term::Div(a, c) => tdiv(a.eval(env)?, c.eval(env)?),
            Term::Rem(a, c) => trem(a.eval(env)?, c.eval(env)?),
            Term::Eq(a, c) => (a.eval(env)? == c.eval(env)?) as i64,
            Term::Lt(a, c) => (a.eval(env)? < c.eval(env)?) as i64,
            Term::Le(a, c) => (a.eval(env)? <= c.eval(env)?) as i64,
            Term::Not(a) => (a.eval(env)? == 0) as i64,
            Term::And(v) => {
                let mut r = 1;
                for t in v {
                    if t.eval(env)? == 0 {
                        r = 0;
                    }
                }
                r
            }
            Term::Or(v) => {
                let mut r = 0;
                for t in v {
                    if t.eval(env)? != 0 {
                        r = 1;
                    }
                }
                r
            }
            Term::Ite(c, t, e) => {
                if c.eval(env)? != 0 {
                    t.eval(env)?
                } else {
                    e.eval(env)?
                }
            }
        })
    }

    /// SMT-LIB2 rendering. Truncated division is expanded over Euclidean `div`.
    pub fn to_smt(&self) -> String {
        let mut s = String::new();
        self.write_smt(&mut s);
        s
    }

    fn write_smt(&self, out: &mut String) {
        let bin = |out: &mut String, op: &str, a: &Term, c: &Term| {
            out.push('(');
            out.push_str(op);
            out.push(' ');
            a.write_smt(out);
            out.push(' ');
            c.write_smt(out);
            out.push(')');
        };
        match self {
            Term::Int(v) if *v < 0 => out.push_str(&format!("(- {})", v.unsigned_abs())),
            Term::Int(v) => out.push_str(&v.to_string()),
            Term::Bool(v) => out.push_str(if *v { "true" } else { "false" }),
            Term::Prop(p) => out.push_str(&smt_symbol(&p.to_string())),
            Term::Aux(n, _) => out.push_str(&smt_symbol(n)),
            Term::Add(a, c) => bin(out, "+", a, c),
            Term::Sub(a, c) => bin(out, "-", a, c),
            Term::Mul(a, c) => bin(out, "*", a, c),
            Term::Div(a, c) => {
                let (a, c) = (a.to_smt(), c.to_smt());
                out.push_str(&format!("(ite (>= {a} 0) (div {a} {c}) (- (div (- {a}) {c})))"));
            }
            Term::Rem(a, c) => {
                let (a, c) = (a.to_smt(), c.to_smt());
                out.push_str(&format!(
                    "(- {a} (* {c} (ite (>= {a} 0) (div {a} {c}) (- (div (- {a}) {c})))))"
                ));
            }
            Term::Eq(a, c) => bin(out, "=", a, c),
            Term::Lt(a, c) => bin(out, "<", a, c),
            Term::Le(a, c) => bin(out, "<=", a, c),
            Term::Not(a) => {
                out.push_str("(not ");
                a.write_smt(out);
                out.push(')');
            }
            Term::And(v) | Term::Or(v) => {
                let (op, unit) = if matches!(self, Term::And(_)) { ("and", "true") } else { ("or", "false") };
                match v.len() {
                    0 => out.push_str(unit),
                    1 => v[0].write_smt(out),
                    _ => {
                        out.push('(');
                        out.push_str(op);
                        for t in v {
                            out.push(' ');
                            t.write_smt(out);
                        }
                        out.push(')');
                    }
                }
            }
            Term::Ite(c, t, e) => {
                out.push_str("(ite ");
                c.write_smt(out);
                out.push(' ');
                t.write_smt(out);
                out.push(' ');
                e.write_smt(out);
                out.push(')');
            }
        }
    }
}

pub fn tdiv(a: i64, c: i64) -> i64 {
    if c == 0 {
        0
    } else {
        a.wrapping_div(c)
    }
}

pub fn trem(a: i64, c: i64) -> i64 {
    if c == 0 {
        0
    } else {
        a.wrapping_rem(c)
    }
}

/// Quotes a symbol with `|...|` when it is not a legal simple symbol.
pub fn smt_symbol(name: &str) -> String {
    const EXTRA: &str = "~!@$%^&*_-+=<>.?/";
    let simple = !name.is_empty()
        && !name.starts_with(|c: char| c.is_ascii_digit())
        && name.chars().all(|c| c.is_ascii_alphanumeric() || EXTRA.contains(c));
    if simple {
        name.to_string()
    } else {
        format!("|{}|", name.replace(['|', '\\'], "_"))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_smt())
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_smt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_semantics() {
        assert_eq!(tdiv(-7, 2), -3);
        assert_eq!(trem(-7, 2), -1);
        assert_eq!(tdiv(7, -2), -3);
        assert_eq!(trem(7, -2), 1);
    }

    #[test]
    fn smt_rendering() {
        let t = Term::eq(Term::Aux("$cd".into(), Sort::Int), Term::Add(b(Term::Int(-1)), b(Term::Int(3))));
        assert_eq!(t.to_smt(), "(= $cd (+ (- 1) 3))");
        assert_eq!(smt_symbol("x.shape.1"), "x.shape.1");
        assert_eq!(smt_symbol("9a"), "|9a|");
        assert_eq!(smt_symbol("a#b"), "|a#b|");
    }

    #[test]
    fn eval_logic() {
        let env = |_: &Term| Some(3);
        let t = Term::Or(vec![Term::lt(Term::Aux("a".into(), Sort::Int), Term::Int(2)), Term::Bool(true)]);
        assert_eq!(t.eval(&env), Some(1));
        assert_eq!(Term::And(vec![]).eval(&env), Some(1));
    }
}
