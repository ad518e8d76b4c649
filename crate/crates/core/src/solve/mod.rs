//! Satisfiability checking and solution sampling over path constraint sets.

mod search;
mod smtlib;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use smtlib::{declared_symbols, emit_smtlib, parse_model, run_external, ExternalVerdict};

use crate::symprop::{constrained_props, Constraint, ConstraintSet, PropertyRef, Term};
use search::{Budget, Verdict};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_samples: usize,
    /// Search nodes per solver call.
    pub node_budget: u64,
    /// Wall-clock budget per path, in milliseconds; 0 disables it.
    pub time_budget_ms: u64,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_samples: 16,
            node_budget: 200_000,
            time_budget_ms: 10_000,
            seed: 0,
        }
    }
}

impl SolverConfig {
    fn budget(&self, start: Instant) -> Budget {
        Budget {
            nodes: self.node_budget,
            deadline: (self.time_budget_ms > 0).then(|| start + Duration::from_millis(self.time_budget_ms)),
        }
    }
}

pub type Assignment = BTreeMap<PropertyRef, i64>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SatResult {
    Sat(Assignment),
    Unsat,
    Unknown,
}

impl SatResult {
    pub fn is_unsat(&self) -> bool {
        matches!(self, SatResult::Unsat)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Solution {
    pub path_id: String,
    pub solution_id: usize,
    pub assignment: Assignment,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Samples {
    pub solutions: Vec<Solution>,
    /// The set has no further solutions distinct on its constrained properties.
    pub exhausted: bool,
    /// Sampling stopped on the budget.
    pub unknown: bool,
}

fn verdict(v: Verdict) -> SatResult {
    match v {
        Verdict::Sat(a) => SatResult::Sat(a),
        Verdict::Unsat => SatResult::Unsat,
        Verdict::Unknown => SatResult::Unknown,
    }
}

pub fn check_constraints(constraints: &[Constraint], cfg: &SolverConfig) -> SatResult {
    verdict(search::solve(constraints, &[], cfg.seed, cfg.budget(Instant::now())))
}

pub fn check_sat(cs: &ConstraintSet, cfg: &SolverConfig) -> SatResult {
    check_constraints(&cs.constraints, cfg)
}

/// Evaluates every constraint under `assignment`, deriving aux values from their definitions.
pub fn evaluate(constraints: &[Constraint], assignment: &Assignment) -> bool {
    search::satisfies(constraints, &[], assignment)
}

/// Clause excluding `a` restricted to `props`.
fn blocking_clause(props: &BTreeSet<PropertyRef>, a: &Assignment) -> Term {
    Term::Or(
        props
            .iter()
            .map(|p| Term::not(Term::eq(Term::Prop(p.clone()), Term::Int(a.get(p).copied().unwrap_or(0)))))
            .collect(),
    )
}

/// Up to `k` solutions, pairwise distinct on the set's constrained properties.
pub fn sample_solutions(cs: &ConstraintSet, k: usize, cfg: &SolverConfig) -> Samples {
    let props = constrained_props(cs);
    let start = Instant::now();
    let mut blocks: Vec<Term> = Vec::new();
    let mut out = Samples::default();
    for i in 0..k {
        let seed = cfg.seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        match search::solve(&cs.constraints, &blocks, seed, cfg.budget(start)) {
            Verdict::Sat(a) => {
                blocks.push(blocking_clause(&props, &a));
                out.solutions.push(Solution { path_id: cs.path_id.clone(), solution_id: i, assignment: a });
            }
            Verdict::Unsat => {
                out.exhausted = true;
                break;
            }
            Verdict::Unknown => {
                out.unknown = true;
                break;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symprop::{ConstraintKind, Property};

    fn v() -> Term {
        Term::Prop(PropertyRef::new("v", Property::IntValue))
    }

    fn set(exprs: Vec<Term>) -> ConstraintSet {
        let mut cs = ConstraintSet::empty("T", "p");
        for e in exprs {
            cs.constraints.push(Constraint { kind: ConstraintKind::Branch, expr: e, origin: "t".into(), defines: None });
        }
        cs
    }

    #[test]
    fn contradictory_equalities_unsat() {
        let cs = set(vec![Term::eq(v(), Term::Int(1)), Term::eq(v(), Term::Int(2))]);
        assert_eq!(check_sat(&cs, &SolverConfig::default()), SatResult::Unsat);
    }

    #[test]
    fn empty_set_sat() {
        assert!(matches!(check_sat(&set(vec![]), &SolverConfig::default()), SatResult::Sat(_)));
    }

    #[test]
    fn enumerate_small_domain() {
        let cs = set(vec![Term::in_range(v(), 0, 2)]);
        let s = sample_solutions(&cs, 3, &SolverConfig::default());
        let got: BTreeSet<i64> = s.solutions.iter().map(|s| s.assignment[&PropertyRef::new("v", Property::IntValue)]).collect();
        assert_eq!(got, BTreeSet::from([0, 1, 2]));
        let s = sample_solutions(&cs, 5, &SolverConfig::default());
        assert_eq!(s.solutions.len(), 3);
        assert!(s.exhausted);
    }

    #[test]
    fn nonlinear_product() {
        let a = Term::Prop(PropertyRef::new("x", Property::Shape(0)));
        let b2 = Term::Prop(PropertyRef::new("x", Property::Shape(1)));
        let cs = set(vec![
            Term::in_range(a.clone(), 0, 16),
            Term::in_range(b2.clone(), 0, 16),
            Term::eq(Term::Mul(Box::new(a), Box::new(b2)), Term::Int(91)),
        ]);
        match check_sat(&cs, &SolverConfig::default()) {
            SatResult::Sat(w) => assert!(evaluate(&cs.constraints, &w)),
            other => panic!("{other:?}"),
        }
    }
}
