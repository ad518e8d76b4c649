use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};

use crate::symprop::term::smt_symbol;
use crate::symprop::{ConstraintSet, Sort, Term};

/// SMT-LIB2 script for `cs`: sorted declarations, one assert per constraint in
/// path order, then `(check-sat)` and `(get-model)`.
pub fn emit_smtlib(cs: &ConstraintSet) -> String {
    let mut decls: BTreeMap<String, Sort> = BTreeMap::new();
    for c in &cs.constraints {
        c.expr.visit(&mut |t| match t {
            Term::Prop(p) => {
                decls.insert(smt_symbol(&p.to_string()), p.prop.sort());
            }
            Term::Aux(n, s) => {
                decls.insert(smt_symbol(n), *s);
            }
            _ => {}
        });
    }
    let mut out = String::new();
    for (name, sort) in &decls {
        let s = match sort {
            Sort::Int => "Int",
            Sort::Bool => "Bool",
        };
        out.push_str(&format!("(declare-const {name} {s})\n"));
    }
    for c in &cs.constraints {
        out.push_str(&format!("(assert {})\n", c.expr.to_smt()));
    }
    out.push_str("(check-sat)\n(get-model)\n");
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExternalVerdict {
    /// Model values by symbol name, booleans as 0/1.
    Sat(BTreeMap<String, i64>),
    Unsat,
    Unknown(String),
}

#[derive(Debug, PartialEq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn tokenize(s: &str) -> Vec<String> {
    let mut toks = Vec::new();
    let mut chars = s.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            '(' | ')' => {
                toks.push(c.to_string());
                chars.next();
            }
            '|' => {
                chars.next();
                let mut t = String::new();
                for d in chars.by_ref() {
                    if d == '|' {
                        break;
                    }
                    t.push(d);
                }
                toks.push(t);
            }
            ';' => {
                for d in chars.by_ref() {
                    if d == '\n' {
                        break;
                    }
                }
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            _ => {
                let mut t = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_whitespace() || d == '(' || d == ')' {
                        break;
                    }
                    t.push(d);
                    chars.next();
                }
                toks.push(t);
            }
        }
    }
    toks
}

fn parse_sexps(toks: &[String]) -> Vec<Sexp> {
    fn one(toks: &[String], i: &mut usize) -> Option<Sexp> {
        let t = toks.get(*i)?;
        *i += 1;
        if t == "(" {
            let mut items = Vec::new();
            while toks.get(*i).is_some_and(|t| t != ")") {
                items.push(one(toks, i)?);
            }
            *i += 1;
            Some(Sexp::List(items))
        } else {
            Some(Sexp::Atom(t.clone()))
        }
    }
    let mut out = Vec::new();
    let mut i = 0;
    while let Some(s) = one(toks, &mut i) {
        out.push(s);
    }
    out
}

fn value_of(s: &Sexp) -> Option<i64> {
    match s {
        Sexp::Atom(a) if a == "true" => Some(1),
        Sexp::Atom(a) if a == "false" => Some(0),
        Sexp::Atom(a) => a.parse().ok(),
        Sexp::List(v) => match v.as_slice() {
            [Sexp::Atom(m), x] if m == "-" => value_of(x).map(|x| -x),
            _ => None,
        },
    }
}

/// Reads `define-fun` entries of a `(get-model)` response.
pub fn parse_model(text: &str) -> BTreeMap<String, i64> {
    let mut out = BTreeMap::new();
    let mut stack: Vec<&Sexp> = Vec::new();
    let sexps = parse_sexps(&tokenize(text));
    stack.extend(sexps.iter());
    while let Some(s) = stack.pop() {
        if let Sexp::List(items) = s {
            match items.as_slice() {
                [Sexp::Atom(d), Sexp::Atom(name), Sexp::List(args), _sort, val] if d == "define-fun" && args.is_empty() => {
                    if let Some(v) = value_of(val) {
                        out.insert(name.clone(), v);
                    }
                }
                _ => stack.extend(items.iter()),
            }
        }
    }
    out
}

/// Runs an external SMT solver on `script` through stdin (`-in`).
pub fn run_external(solver: &Path, script: &str) -> std::io::Result<ExternalVerdict> {
    let mut child = Command::new(solver)
        .arg("-in")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()?;
    child.stdin.take().expect("piped stdin").write_all(script.as_bytes())?;
    let out = child.wait_with_output()?;
    let text = String::from_utf8_lossy(&out.stdout);
    let first = text.lines().next().unwrap_or("").trim();
    Ok(match first {
        "sat" => ExternalVerdict::Sat(parse_model(&text[text.find('\n').unwrap_or(text.len())..])),
        "unsat" => ExternalVerdict::Unsat,
        other => ExternalVerdict::Unknown(other.to_string()),
    })
}

/// Symbols declared by a script, for mapping a model back.
pub fn declared_symbols(script: &str) -> BTreeSet<String> {
    script
        .lines()
        .filter_map(|l| l.strip_prefix("(declare-const "))
        .filter_map(|l| l.rsplit_once(' ').map(|(n, _)| n.trim_matches('|').to_string()))
        .collect()
}
