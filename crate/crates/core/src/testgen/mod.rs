//! Test case realization from solutions, extreme-value mutation and the
//! unconstrained random baseline.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::{OperatorMeta, ParamType};
use crate::solve::{Assignment, Solution};
use crate::symprop::{Property, PropertyRef, SizeBounds};

pub const SCHEMA_VERSION: u32 = 1;

/// Default pool for extreme-value mutation.
pub const EXTREME_POOL: [i64; 4] = [(1 << 31) - 1, 1 << 31, i64::MAX, -1];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConcreteValue {
    Tensor {
        dtype: i64,
        shape: Vec<i64>,
        fill_seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        explicit_elements: Option<Vec<i64>>,
    },
    ListInt {
        values: Vec<i64>,
    },
    ListFloat {
        values: Vec<f64>,
    },
    Str {
        value: String,
    },
    Int {
        value: i64,
    },
    Float {
        value: f64,
    },
    Bool {
        value: bool,
    },
}

impl ConcreteValue {
    pub fn ptype(&self) -> ParamType {
        match self {
            ConcreteValue::Tensor { .. } => ParamType::Tensor,
            ConcreteValue::ListInt { .. } => ParamType::ListInt,
            ConcreteValue::ListFloat { .. } => ParamType::ListFloat,
            ConcreteValue::Str { .. } => ParamType::Str,
            ConcreteValue::Int { .. } => ParamType::Int,
            ConcreteValue::Float { .. } => ParamType::Float,
            ConcreteValue::Bool { .. } => ParamType::Bool,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub path_id: Option<String>,
    pub solution_id: Option<usize>,
    pub mutated: bool,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub schema: u32,
    pub op_name: String,
    pub values: BTreeMap<String, ConcreteValue>,
    pub provenance: Provenance,
}

impl TestCase {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("test cases serialize")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub p_extreme: f64,
    pub extreme_pool: Vec<i64>,
    #[serde(skip)]
    pub bounds: SizeBounds,
    pub element_cap: usize,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            p_extreme: 0.05,
            extreme_pool: EXTREME_POOL.to_vec(),
            bounds: SizeBounds::default(),
            element_cap: 4096,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.p_extreme) {
            return Err("gen.p_extreme must lie in [0, 1]".into());
        }
        if self.element_cap == 0 {
            return Err("gen.element_cap must be at least 1".into());
        }
        if self.extreme_pool.is_empty() {
            return Err("gen.extreme_pool must not be empty".into());
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> GenConfig {
        GenConfig { seed, ..self.clone() }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenError {
    #[error("solution value {value} for {prop} is outside its domain")]
    OutOfDomain { prop: String, value: i64 },
    #[error("solution mentions unknown parameter {0:?}")]
    UnknownParameter(String),
}

const SHORT_ALPHABET: &[u8] = b"ABCDHNWacdhnwxyz";

fn random_string(rng: &mut ChaCha8Rng, literals: &[String]) -> String {
    loop {
        let n = rng.gen_range(0..=5);
        let s: String = (0..n).map(|_| *SHORT_ALPHABET.choose(rng).expect("alphabet") as char).collect();
        if !literals.contains(&s) {
            return s;
        }
    }
}

fn random_float(rng: &mut ChaCha8Rng, b: &SizeBounds) -> f64 {
    rng.gen_range(b.min_int as f64..=b.max_int as f64)
}

/// Draws parameters in layer order, taking fixed property values from `fixed`.
struct Filler<'a> {
    rng: ChaCha8Rng,
    bounds: SizeBounds,
    fixed: &'a Assignment,
    constrained: &'a BTreeSet<PropertyRef>,
}

impl Filler<'_> {
    fn pick(&mut self, param: &str, prop: Property, lo: i64, hi: i64) -> Result<i64, GenError> {
        let r = PropertyRef::new(param, prop);
        if self.constrained.contains(&r) {
            if let Some(&v) = self.fixed.get(&r) {
                if v < lo || v > hi {
                    return Err(GenError::OutOfDomain { prop: r.to_string(), value: v });
                }
                return Ok(v);
            }
        }
        Ok(self.rng.gen_range(lo..=hi))
    }

    fn param(&mut self, name: &str, ptype: ParamType, literals: &[String]) -> Result<ConcreteValue, GenError> {
        let b = self.bounds;
        Ok(match ptype {
            ParamType::Tensor => {
                let dtype = self.pick(name, Property::Dtype, 0, 4)?;
                let ndim = self.pick(name, Property::Ndim, 0, b.max_ndim as i64)?;
                let mut shape = Vec::with_capacity(ndim as usize);
                for i in 0..ndim as u32 {
                    shape.push(self.pick(name, Property::Shape(i), 0, b.max_dim)?);
                }
                ConcreteValue::Tensor { dtype, shape, fill_seed: self.rng.gen(), explicit_elements: None }
            }
            ParamType::ListInt => {
                let len = self.pick(name, Property::Length, 0, b.max_len as i64)?;
                let iter = PropertyRef::new(name, Property::Iter);
                let iter = if self.constrained.contains(&iter) { self.fixed.get(&iter).copied() } else { None };
                let mut values = Vec::with_capacity(len as usize);
                for i in 0..len as u32 {
                    let r = PropertyRef::new(name, Property::Value(i));
                    let v = match iter {
                        // every element stands for the iterated value unless pinned individually
                        Some(it) if !self.constrained.contains(&r) => it,
                        _ => self.pick(name, Property::Value(i), b.min_int, b.max_int)?,
                    };
                    values.push(v);
                }
                ConcreteValue::ListInt { values }
            }
            ParamType::ListFloat => {
                let len = self.pick(name, Property::Length, 0, b.max_len as i64)?;
                ConcreteValue::ListFloat { values: (0..len).map(|_| random_float(&mut self.rng, &b)).collect() }
            }
            ParamType::Str => {
                let id = self.pick(name, Property::FormatId, 0, literals.len() as i64)?;
                let value = match literals.get(id as usize) {
                    Some(l) => l.clone(),
                    None => random_string(&mut self.rng, literals),
                };
                ConcreteValue::Str { value }
            }
            ParamType::Int => ConcreteValue::Int { value: self.pick(name, Property::IntValue, b.min_int, b.max_int)? },
            ParamType::Bool => ConcreteValue::Bool { value: self.pick(name, Property::BoolValue, 0, 1)? == 1 },
            ParamType::Float => ConcreteValue::Float { value: random_float(&mut self.rng, &b) },
        })
    }
}

/// Turns a solution into a test case: constrained properties come from the
/// solution, the rest are drawn uniformly in layer order.
pub fn realize(
    sol: &Solution,
    constrained: &BTreeSet<PropertyRef>,
    meta: &OperatorMeta,
    literals: &[String],
    cfg: &GenConfig,
) -> Result<TestCase, GenError> {
    if let Some(p) = sol.assignment.keys().find(|p| meta.lookup(&p.param).is_none()) {
        return Err(GenError::UnknownParameter(p.param.clone()));
    }
    let mut f = Filler {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        bounds: cfg.bounds,
        fixed: &sol.assignment,
        constrained,
    };
    let mut values = BTreeMap::new();
    for (_, d) in meta.all_params() {
        values.insert(d.name.clone(), f.param(&d.name, d.ptype, literals)?);
    }
    Ok(TestCase {
        schema: SCHEMA_VERSION,
        op_name: meta.op_name.clone(),
        values,
        provenance: Provenance {
            path_id: Some(sol.path_id.clone()),
            solution_id: Some(sol.solution_id),
            mutated: false,
            seed: cfg.seed,
        },
    })
}

/// Test case drawn without any constraint input. String parameters pick one of
/// the operator's compared literals half of the time.
pub fn random_baseline(meta: &OperatorMeta, literals: &[String], cfg: &GenConfig) -> TestCase {
    let empty = Assignment::new();
    let none = BTreeSet::new();
    let mut f = Filler { rng: ChaCha8Rng::seed_from_u64(cfg.seed), bounds: cfg.bounds, fixed: &empty, constrained: &none };
    let mut values = BTreeMap::new();
    for (_, d) in meta.all_params() {
        let v = if d.ptype == ParamType::Str {
            let value = if !literals.is_empty() && f.rng.gen_bool(0.5) {
                literals.choose(&mut f.rng).expect("non-empty").clone()
            } else {
                random_string(&mut f.rng, literals)
            };
            ConcreteValue::Str { value }
        } else {
            f.param(&d.name, d.ptype, literals).expect("unconstrained draws stay in domain")
        };
        values.insert(d.name.clone(), v);
    }
    TestCase {
        schema: SCHEMA_VERSION,
        op_name: meta.op_name.clone(),
        values,
        provenance: Provenance { path_id: None, solution_id: None, mutated: false, seed: cfg.seed },
    }
}

/// Replaces each dimension size, int scalar and float scalar with a pool value
/// with probability `p_extreme`. Explicit element lists longer than
/// `element_cap` are dropped in favour of the fill seed.
pub fn mutate_extremes(tc: &TestCase, cfg: &GenConfig) -> TestCase {
    let mut out = tc.clone();
    for v in out.values.values_mut() {
        if let ConcreteValue::Tensor { explicit_elements, .. } = v {
            if explicit_elements.as_ref().is_some_and(|e| e.len() > cfg.element_cap) {
                *explicit_elements = None;
            }
        }
    }
    if cfg.p_extreme <= 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6d75_7461_7465);
    let mut mutated = false;
    let mut draw = |rng: &mut ChaCha8Rng| -> Option<i64> {
        if rng.gen_bool(cfg.p_extreme) {
            mutated = true;
            Some(*cfg.extreme_pool.choose(rng).expect("pool validated non-empty"))
        } else {
            None
        }
    };
    for v in out.values.values_mut() {
        match v {
            ConcreteValue::Tensor { shape, explicit_elements, .. } => {
                let mut changed = false;
                for d in shape.iter_mut() {
                    if let Some(x) = draw(&mut rng) {
                        *d = x;
                        changed = true;
                    }
                }
                if changed {
                    *explicit_elements = None;
                }
            }
            ConcreteValue::Int { value } => {
                if let Some(x) = draw(&mut rng) {
                    *value = x;
                }
            }
            ConcreteValue::Float { value } => {
                if let Some(x) = draw(&mut rng) {
                    *value = x as f64;
                }
            }
            _ => {}
        }
    }
    out.provenance.mutated = tc.provenance.mutated || mutated;
    out
}

/// Constraint-model view of a test case. Lists stand in for `iter` with their
/// first element (0 when empty).
pub fn project(tc: &TestCase, literals: &[String], bounds: &SizeBounds) -> Assignment {
    let mut a = Assignment::new();
    for (name, v) in &tc.values {
        let mut put = |p: Property, x: i64| {
            a.insert(PropertyRef::new(name.clone(), p), x);
        };
        match v {
            ConcreteValue::Tensor { dtype, shape, .. } => {
                put(Property::Dtype, *dtype);
                put(Property::Ndim, shape.len() as i64);
                for i in 0..bounds.max_ndim.max(shape.len() as u32) {
                    put(Property::Shape(i), shape.get(i as usize).copied().unwrap_or(0));
                }
                put(Property::NumElement, shape.iter().fold(1i64, |acc, d| acc.wrapping_mul(*d)));
            }
            ConcreteValue::ListInt { values } => {
                put(Property::ElementType, crate::symprop::LIST_INT_CODE);
                put(Property::Length, values.len() as i64);
                for i in 0..bounds.max_len.max(values.len() as u32) {
                    put(Property::Value(i), values.get(i as usize).copied().unwrap_or(0));
                }
                put(Property::Iter, values.first().copied().unwrap_or(0));
            }
            ConcreteValue::ListFloat { values } => {
                put(Property::ElementType, crate::symprop::LIST_FLOAT_CODE);
                put(Property::Length, values.len() as i64);
            }
            ConcreteValue::Str { value } => {
                let id = literals.iter().position(|l| l == value).unwrap_or(literals.len());
                put(Property::FormatId, id as i64);
            }
            ConcreteValue::Int { value } => put(Property::IntValue, *value),
            ConcreteValue::Bool { value } => put(Property::BoolValue, *value as i64),
            ConcreteValue::Float { .. } => {}
        }
    }
    a
}

/// Every value of the `iter` properties in `a` to try: the cartesian product
/// of the element lists of `lists`.
pub fn iter_variants(tc: &TestCase, base: &Assignment, lists: &BTreeSet<String>) -> Vec<Assignment> {
    let mut out = vec![base.clone()];
    for l in lists {
        let Some(ConcreteValue::ListInt { values }) = tc.values.get(l) else { continue };
        if values.is_empty() {
            continue;
        }
        let key = PropertyRef::new(l.clone(), Property::Iter);
        out = out
            .into_iter()
            .flat_map(|a| {
                let key = &key;
                values.iter().map(move |v| {
                    let mut b = a.clone();
                    b.insert(key.clone(), *v);
                    b
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::meta_of;

    fn meta() -> OperatorMeta {
        meta_of(r#"op "T" api "t.T" { param x: tensor attr n: int attr b: bool attr s: string attr l: list<int> fn @main { e: ret } }"#)
            .unwrap()
    }

    fn sol(pairs: &[(PropertyRef, i64)]) -> (Solution, BTreeSet<PropertyRef>) {
        let assignment: Assignment = pairs.iter().cloned().collect();
        let constrained = assignment.keys().cloned().collect();
        (Solution { path_id: "p".into(), solution_id: 0, assignment }, constrained)
    }

    #[test]
    fn realize_respects_fixed_values() {
        let (s, c) = sol(&[
            (PropertyRef::new("x", Property::Ndim), 4),
            (PropertyRef::new("x", Property::Shape(1)), 3),
            (PropertyRef::new("n", Property::IntValue), 7),
        ]);
        let cfg = GenConfig { bounds: SizeBounds { max_dim: 8, ..SizeBounds::default() }, ..GenConfig::default() };
        let tc = realize(&s, &c, &meta(), &[], &cfg).unwrap();
        match &tc.values["x"] {
            ConcreteValue::Tensor { shape, .. } => {
                assert_eq!(shape.len(), 4);
                assert_eq!(shape[1], 3);
                assert!(shape.iter().all(|d| (0..=8).contains(d)));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(tc.values["n"], ConcreteValue::Int { value: 7 });
    }

    #[test]
    fn out_of_domain_rejected() {
        let (s, c) = sol(&[(PropertyRef::new("x", Property::Ndim), 9)]);
        assert!(matches!(realize(&s, &c, &meta(), &[], &GenConfig::default()), Err(GenError::OutOfDomain { .. })));
    }

    #[test]
    fn zero_probability_is_identity() {
        let tc = random_baseline(&meta(), &[], &GenConfig::default());
        let cfg = GenConfig { p_extreme: 0.0, ..GenConfig::default() };
        assert_eq!(mutate_extremes(&tc, &cfg), tc);
    }

    #[test]
    fn forced_replacement() {
        let mut tc = random_baseline(&meta(), &[], &GenConfig::default());
        tc.values.insert(
            "x".into(),
            ConcreteValue::Tensor { dtype: 0, shape: vec![2, 3], fill_seed: 1, explicit_elements: None },
        );
        let cfg = GenConfig { p_extreme: 1.0, extreme_pool: vec![2147483647], ..GenConfig::default() };
        let m = mutate_extremes(&tc, &cfg);
        assert!(m.provenance.mutated);
        match &m.values["x"] {
            ConcreteValue::Tensor { shape, .. } => assert_eq!(shape, &vec![2147483647, 2147483647]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn baseline_literal_bias() {
        let lits = vec!["NHWC".to_string()];
        let hits = (0..400)
            .filter(|&s| {
                let tc = random_baseline(&meta(), &lits, &GenConfig::default().with_seed(s));
                tc.values["s"] == ConcreteValue::Str { value: "NHWC".into() }
            })
            .count();
        assert!((160..=240).contains(&hits), "{hits}");
    }

    #[test]
    fn empty_meta_empty_values() {
        let m = meta_of(r#"op "E" api "t.E" { fn @main { e: ret } }"#).unwrap();
        assert!(random_baseline(&m, &[], &GenConfig::default()).values.is_empty());
    }

    #[test]
    fn json_line_stable() {
        let tc = random_baseline(&meta(), &[], &GenConfig::default().with_seed(3));
        assert_eq!(tc.to_json_line(), random_baseline(&meta(), &[], &GenConfig::default().with_seed(3)).to_json_line());
        let back: TestCase = serde_json::from_str(&tc.to_json_line()).unwrap();
        assert_eq!(back, tc);
    }
}
