use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{ConstraintKind, ConstraintSet, Property, PropertyRef, Term};
use crate::registry::{CorpusIndex, ParamType};

/// Properties reached by a branch or side constraint, following aux symbols
/// back through their definitions.
fn cone(cs: &ConstraintSet) -> BTreeSet<PropertyRef> {
    let defs: BTreeMap<&str, &Term> = cs
        .constraints
        .iter()
        .filter_map(|c| match (&c.defines, &c.expr) {
            (Some(n), Term::Eq(_, rhs)) => Some((n.as_str(), &**rhs)),
            _ => None,
        })
        .collect();
    let mut props = BTreeSet::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut pending: Vec<String> = Vec::new();
    for c in &cs.constraints {
        let seed = match c.kind {
            ConstraintKind::Branch => true,
            ConstraintKind::Propagation => c.defines.is_none(),
            ConstraintKind::Natural => false,
        };
        if seed {
            props.extend(c.expr.props());
            pending.extend(c.expr.auxes());
        }
    }
    while let Some(a) = pending.pop() {
        if !seen.insert(a.clone()) {
            continue;
        }
        if let Some(rhs) = defs.get(a.as_str()) {
            props.extend(rhs.props());
            pending.extend(rhs.auxes());
        }
    }
    props
}

/// Properties a solution must pin down: the constraint cone, closed under
/// `num_element` (needs ndim and every shape entry), `shape.i` (needs ndim) and
/// `value.i`/`iter` (need length).
pub fn constrained_props(cs: &ConstraintSet) -> BTreeSet<PropertyRef> {
    let mut out = cone(cs);
    let all: BTreeSet<PropertyRef> = cs.constraints.iter().flat_map(|c| c.expr.props()).collect();
    let mut extra = Vec::new();
    for p in &out {
        let need = |prop| PropertyRef::new(p.param.clone(), prop);
        match p.prop {
            Property::NumElement => {
                extra.push(need(Property::Ndim));
                extra.extend(
                    all.iter().filter(|q| q.param == p.param && matches!(q.prop, Property::Shape(_))).cloned(),
                );
            }
            Property::Shape(_) => extra.push(need(Property::Ndim)),
            Property::Value(_) | Property::Iter => extra.push(need(Property::Length)),
            _ => {}
        }
    }
    out.extend(extra.into_iter().filter(|p| all.contains(p)));
    out
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CnpRow {
    pub op_name: String,
    pub base_value: usize,
    pub list_dtype: usize,
    pub list_length: usize,
    pub list_value: usize,
    pub tensor_dtype: usize,
    pub tensor_dim: usize,
    pub tensor_shape: usize,
}

impl CnpRow {
    fn add(&mut self, o: &CnpRow) {
        self.base_value += o.base_value;
        self.list_dtype += o.list_dtype;
        self.list_length += o.list_length;
        self.list_value += o.list_value;
        self.tensor_dtype += o.tensor_dtype;
        self.tensor_dim += o.tensor_dim;
        self.tensor_shape += o.tensor_shape;
    }

    pub fn sum(&self) -> usize {
        self.base_value
            + self.list_dtype
            + self.list_length
            + self.list_value
            + self.tensor_dtype
            + self.tensor_dim
            + self.tensor_shape
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CnpTable {
    pub rows: Vec<CnpRow>,
    pub total: CnpRow,
}

/// Number of constrained parameter properties per operator. A parameter's
/// property counts once if any of the operator's sets constrains it.
pub fn tabulate_cnp(sets: &[ConstraintSet], index: &CorpusIndex) -> CnpTable {
    let mut per_op: BTreeMap<&str, BTreeSet<PropertyRef>> = BTreeMap::new();
    for cs in sets {
        per_op.entry(cs.op_name.as_str()).or_default().extend(cone(cs));
    }
    let mut table = CnpTable { total: CnpRow { op_name: "total".into(), ..CnpRow::default() }, ..CnpTable::default() };
    for (op, props) in per_op {
        let Some(meta) = index.get(op) else { continue };
        let mut row = CnpRow { op_name: op.to_string(), ..CnpRow::default() };
        for (_, decl) in meta.all_params() {
            let has = |f: &dyn Fn(Property) -> bool| props.iter().any(|p| p.param == decl.name && f(p.prop));
            match decl.ptype {
                ParamType::Tensor => {
                    row.tensor_dtype += has(&|p| p == Property::Dtype) as usize;
                    row.tensor_dim += has(&|p| p == Property::Ndim) as usize;
                    row.tensor_shape +=
                        has(&|p| matches!(p, Property::Shape(_) | Property::NumElement)) as usize;
                }
                ParamType::ListInt | ParamType::ListFloat => {
                    row.list_dtype += has(&|p| p == Property::ElementType) as usize;
                    row.list_length += has(&|p| p == Property::Length) as usize;
                    row.list_value += has(&|p| matches!(p, Property::Value(_) | Property::Iter)) as usize;
                }
                _ => row.base_value += has(&|_| true) as usize,
            }
        }
        table.total.add(&row);
        table.rows.push(row);
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::{meta_of, CorpusIndex};
    use crate::symprop::Constraint;

    fn index() -> CorpusIndex {
        let meta = meta_of(r#"op "T" api "t.T" { param x: tensor fn @main { e: ret } }"#).unwrap();
        CorpusIndex { operators: vec![meta], corpus_root: ".".into() }
    }

    fn branch(expr: Term) -> Constraint {
        Constraint { kind: ConstraintKind::Branch, expr, origin: "t".into(), defines: None }
    }

    fn prop(p: Property) -> Term {
        Term::Prop(PropertyRef::new("x", p))
    }

    #[test]
    fn single_ndim_constraint() {
        let mut cs = ConstraintSet::empty("T", "p");
        cs.constraints.push(branch(Term::eq(prop(Property::Ndim), Term::Int(4))));
        let t = tabulate_cnp(&[cs], &index());
        assert_eq!(t.rows[0].tensor_dim, 1);
        assert_eq!(t.rows[0].sum(), 1);
    }

    #[test]
    fn ndim_and_shape_counted_separately() {
        let mut cs = ConstraintSet::empty("T", "p");
        cs.constraints.push(branch(Term::eq(prop(Property::Ndim), Term::Int(4))));
        cs.constraints.push(branch(Term::eq(prop(Property::Shape(0)), Term::Int(2))));
        let t = tabulate_cnp(&[cs], &index());
        assert_eq!((t.rows[0].tensor_dim, t.rows[0].tensor_shape), (1, 1));
    }

    #[test]
    fn empty_table() {
        let t = tabulate_cnp(&[], &index());
        assert!(t.rows.is_empty());
        assert_eq!(t.total.sum(), 0);
    }

    #[test]
    fn aux_definitions_followed() {
        let mut cs = ConstraintSet::empty("T", "p");
        let aux = Term::Aux("$n".into(), crate::symprop::Sort::Int);
        cs.constraints.push(Constraint {
            kind: ConstraintKind::Propagation,
            expr: Term::eq(aux.clone(), prop(Property::Ndim)),
            origin: "t".into(),
            defines: Some("$n".into()),
        });
        assert!(constrained_props(&cs).is_empty());
        cs.constraints.push(branch(Term::lt(aux, Term::Int(3))));
        assert_eq!(constrained_props(&cs), BTreeSet::from([PropertyRef::new("x", Property::Ndim)]));
    }
}
