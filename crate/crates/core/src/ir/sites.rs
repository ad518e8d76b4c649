use serde::Serialize;
use thiserror::Error;

use super::{BlockId, FuncId, IRModule, Op, Terminator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteKind {
    DirectFail,
    PatternCall,
}

/// An error-handling instruction. `index == instrs.len()` refers to the terminator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ErrorSite {
    pub func: FuncId,
    pub block: BlockId,
    pub index: usize,
    pub kind: SiteKind,
}

#[derive(Debug, Error)]
#[error("invalid error-handler pattern {pattern:?}: {reason}")]
pub struct PatternError {
    pub pattern: String,
    pub reason: String,
}

/// Glob patterns naming error-handling helpers, e.g. `check_*`.
#[derive(Clone, Debug, Default)]
pub struct ErrorPatterns {
    patterns: Vec<glob::Pattern>,
}

impl ErrorPatterns {
    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self, PatternError> {
        let patterns = patterns
            .iter()
            .map(|p| {
                glob::Pattern::new(p.as_ref()).map_err(|e| PatternError {
                    pattern: p.as_ref().to_string(),
                    reason: e.msg.to_string(),
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(ErrorPatterns { patterns })
    }

    pub fn matches(&self, callee: &str) -> bool {
        self.patterns.iter().any(|p| p.matches(callee))
    }

    pub fn as_strings(&self) -> Vec<String> {
        self.patterns.iter().map(|p| p.as_str().to_string()).collect()
    }
}

/// All `fail` terminators and pattern-matching call sites, in (function, block, index) order.
pub fn find_error_sites(module: &IRModule, patterns: &ErrorPatterns) -> Vec<ErrorSite> {
    let mut out = Vec::new();
    for (fi, f) in module.functions.iter().enumerate() {
        for (bi, b) in f.blocks.iter().enumerate() {
            for (ii, instr) in b.instrs.iter().enumerate() {
                if let Op::Call(name, _) = &instr.op {
                    if patterns.matches(name) {
                        out.push(ErrorSite { func: fi, block: bi, index: ii, kind: SiteKind::PatternCall });
                    }
                }
            }
            if matches!(b.term, Terminator::Fail(_)) {
                out.push(ErrorSite {
                    func: fi,
                    block: bi,
                    index: b.instrs.len(),
                    kind: SiteKind::DirectFail,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_module;

    const FIXTURE: &str = r#"
op "S" api "t.S" {
  param x: tensor
  fn @main {
  entry:
    %x = get_input "x"
    call @check_shape(%x)
    %n = ndim %x
    %ok = icmp eq %n, 2
    br %ok, good, bad
  bad:
    fail "bad ndim"
  good:
    call @check_shape(%x)
    call @checkpoint()
    ret
  }
  fn @check_shape(%t) {
  e:
    ret
  }
  fn @checkpoint {
  e:
    ret
  }
}
"#;

    #[test]
    fn counts_fail_and_pattern_calls() {
        let m = parse_module(FIXTURE).unwrap();
        let sites = find_error_sites(&m, &ErrorPatterns::new(&["check_*"]).unwrap());
        assert_eq!(sites.len(), 3);
        assert_eq!(sites.iter().filter(|s| s.kind == SiteKind::DirectFail).count(), 1);
        let mut sorted = sites.clone();
        sorted.sort();
        assert_eq!(sites, sorted);
    }

    #[test]
    fn empty_patterns_no_fail() {
        let m = parse_module(r#"op "T" api "t.T" { fn @main { e: call @check_x() ret } fn @check_x { e: ret } }"#)
            .unwrap();
        let none: [&str; 0] = [];
        assert!(find_error_sites(&m, &ErrorPatterns::new(&none).unwrap()).is_empty());
    }

    #[test]
    fn checkpoint_footgun() {
        // `check_*` requires the underscore; dropping it widens the match to `checkpoint`.
        let strict = ErrorPatterns::new(&["check_*"]).unwrap();
        let loose = ErrorPatterns::new(&["check*"]).unwrap();
        assert!(!strict.matches("checkpoint"));
        assert!(loose.matches("checkpoint"));
        assert!(strict.matches("check_shape") && loose.matches("check_shape"));
    }

    #[test]
    fn bad_pattern_rejected() {
        assert!(ErrorPatterns::new(&["[oops"]).is_err());
    }
}
