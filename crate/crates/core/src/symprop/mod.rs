//! Controllability propagation and constraint construction along validation paths.

mod cnp;
mod natural;
mod propagate;
pub mod term;

use std::fmt;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

pub use cnp::{constrained_props, tabulate_cnp, CnpRow, CnpTable};
pub use natural::{natural_constraints, DTYPE_CODES, LIST_FLOAT_CODE, LIST_INT_CODE};
pub use propagate::{
    propagate_path, seed_controllable, PropagateOptions, SymState, UnsatCache,
};
pub use term::{Sort, Term};

use crate::registry::{OperatorMeta, ParamType};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Property {
    Dtype,
    Ndim,
    NumElement,
    Shape(u32),
    ElementType,
    Length,
    Iter,
    Value(u32),
    StringValue,
    FormatId,
    IntValue,
    BoolValue,
    FloatValue,
}

impl Property {
    pub fn sort(self) -> Sort {
        match self {
            Property::BoolValue => Sort::Bool,
            _ => Sort::Int,
        }
    }

    /// Whether the property exists for parameters of type `ptype`.
    pub fn legal_for(self, ptype: ParamType) -> bool {
        use Property::*;
        match ptype {
            ParamType::Tensor => matches!(self, Dtype | Ndim | NumElement | Shape(_)),
            ParamType::ListInt | ParamType::ListFloat => {
                matches!(self, ElementType | Length | Iter | Value(_))
            }
            ParamType::Str => matches!(self, StringValue | FormatId),
            ParamType::Int => self == IntValue,
            ParamType::Bool => self == BoolValue,
            ParamType::Float => self == FloatValue,
        }
    }

    fn suffix(self) -> String {
        match self {
            Property::Dtype => "dtype".into(),
            Property::Ndim => "ndim".into(),
            Property::NumElement => "num_element".into(),
            Property::Shape(i) => format!("shape.{i}"),
            Property::ElementType => "element_type".into(),
            Property::Length => "length".into(),
            Property::Iter => "iter".into(),
            Property::Value(i) => format!("value.{i}"),
            Property::FormatId => "format_id".into(),
            Property::StringValue | Property::IntValue | Property::BoolValue | Property::FloatValue => {
                "value".into()
            }
        }
    }

    fn parse_suffix(s: &str, ptype: ParamType) -> Option<Property> {
        let p = match s {
            "dtype" => Property::Dtype,
            "ndim" => Property::Ndim,
            "num_element" => Property::NumElement,
            "element_type" => Property::ElementType,
            "length" => Property::Length,
            "iter" => Property::Iter,
            "format_id" => Property::FormatId,
            "value" => match ptype {
                ParamType::Str => Property::StringValue,
                ParamType::Int => Property::IntValue,
                ParamType::Bool => Property::BoolValue,
                ParamType::Float => Property::FloatValue,
                _ => return None,
            },
            _ => {
                let (head, idx) = s.rsplit_once('.')?;
                let idx: u32 = idx.parse().ok()?;
                match head {
                    "shape" => Property::Shape(idx),
                    "value" => Property::Value(idx),
                    _ => return None,
                }
            }
        };
        p.legal_for(ptype).then_some(p)
    }
}

/// A constraint-model property of one operator parameter, e.g. `x.shape.1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PropertyRef {
    pub param: String,
    pub prop: Property,
}

impl PropertyRef {
    pub fn new(param: impl Into<String>, prop: Property) -> Self {
        PropertyRef { param: param.into(), prop }
    }

    /// Parses the display form back, resolving `.value` through the parameter's type.
    pub fn parse(s: &str, meta: &OperatorMeta) -> Option<PropertyRef> {
        for (_, decl) in meta.all_params() {
            if let Some(rest) = s.strip_prefix(decl.name.as_str()).and_then(|r| r.strip_prefix('.')) {
                if let Some(prop) = Property::parse_suffix(rest, decl.ptype) {
                    return Some(PropertyRef::new(decl.name.clone(), prop));
                }
            }
        }
        None
    }
}

impl fmt::Display for PropertyRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.param, self.prop.suffix())
    }
}

impl Serialize for PropertyRef {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Size limits applied through natural constraints and random generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SizeBounds {
    pub max_ndim: u32,
    pub max_dim: i64,
    pub max_len: u32,
    pub min_int: i64,
    pub max_int: i64,
}

impl Default for SizeBounds {
    fn default() -> Self {
        SizeBounds { max_ndim: 4, max_dim: 16, max_len: 4, min_int: -16, max_int: 16 }
    }
}

impl SizeBounds {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_dim < 0 {
            return Err("bounds.max_dim must be non-negative".into());
        }
        if self.min_int > self.max_int {
            return Err("bounds.min_int must not exceed bounds.max_int".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Natural,
    Propagation,
    Branch,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Constraint {
    pub kind: ConstraintKind,
    pub expr: Term,
    /// `natural:<rule>` or `@func/block#index` of the instruction that produced it.
    pub origin: String,
    /// Auxiliary symbol this constraint defines, if it is a definition `(= aux expr)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub defines: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum SatStatus {
    Sat,
    /// Became unsatisfiable after the first `prefix_len` steps of the path.
    Unsat { prefix_len: usize },
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConstraintSet {
    pub op_name: String,
    pub path_id: String,
    pub constraints: Vec<Constraint>,
    pub status: SatStatus,
}

impl ConstraintSet {
    pub fn empty(op_name: &str, path_id: &str) -> Self {
        ConstraintSet {
            op_name: op_name.into(),
            path_id: path_id.into(),
            constraints: Vec::new(),
            status: SatStatus::Sat,
        }
    }

    pub fn count_kind(&self, kind: ConstraintKind) -> usize {
        self.constraints.iter().filter(|c| c.kind == kind).count()
    }

    /// Aux symbols with their sorts, in definition order.
    pub fn aux_symbols(&self) -> Vec<(String, Sort)> {
        self.constraints
            .iter()
            .filter_map(|c| {
                let name = c.defines.as_ref()?;
                match &c.expr {
                    Term::Eq(a, _) => Some((name.clone(), a.sort())),
                    _ => None,
                }
            })
            .collect()
    }

    /// Every symbol is a property or an aux defined earlier in the set.
    pub fn well_formed(&self) -> bool {
        let mut defined = std::collections::BTreeSet::new();
        for c in &self.constraints {
            if !c.expr.well_sorted() || c.expr.sort() != Sort::Bool {
                return false;
            }
            if let Some(d) = &c.defines {
                defined.insert(d.clone());
            }
            if !c.expr.auxes().iter().all(|a| defined.contains(a)) {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SymError {
    #[error("unknown parameter {0:?}")]
    UnknownParameter(String),
    #[error("path does not belong to this module: {0}")]
    ForeignPath(String),
}

/// Joins per-entry constraint sets of a main split across entry points: one
/// joined set per combination, naturals kept once.
pub fn cross_join(groups: &[Vec<ConstraintSet>]) -> Vec<ConstraintSet> {
    let mut acc: Vec<ConstraintSet> = match groups.first() {
        None => return Vec::new(),
        Some(g) => g.clone(),
    };
    for group in &groups[1..] {
        let mut next = Vec::new();
        for left in &acc {
            for right in group {
                let mut joined = left.clone();
                joined.path_id = format!("{}+{}", left.path_id, right.path_id);
                for c in &right.constraints {
                    if c.kind == ConstraintKind::Natural && joined.constraints.contains(c) {
                        continue;
                    }
                    joined.constraints.push(c.clone());
                }
                joined.status = match (left.status, right.status) {
                    (SatStatus::Sat, SatStatus::Sat) => SatStatus::Sat,
                    (SatStatus::Unsat { prefix_len }, _) | (_, SatStatus::Unsat { prefix_len }) => {
                        SatStatus::Unsat { prefix_len }
                    }
                    _ => SatStatus::Unknown,
                };
                next.push(joined);
            }
        }
        acc = next;
    }
    acc
}
