use super::term::{b, Term};
use super::{Constraint, ConstraintKind, Property, PropertyRef, SizeBounds};
use crate::registry::ParamType;

/// Dtype codes: f32, f64, i32, i64, bool.
pub const DTYPE_CODES: [(&str, i64); 5] = [("f32", 0), ("f64", 1), ("i32", 2), ("i64", 3), ("bool", 4)];

pub const LIST_INT_CODE: i64 = 3;
pub const LIST_FLOAT_CODE: i64 = 0;

fn natural(rule: &str, expr: Term) -> Constraint {
    Constraint {
        kind: ConstraintKind::Natural,
        expr,
        origin: format!("natural:{rule}"),
        defines: None,
    }
}

fn p(param: &str, prop: Property) -> Term {
    Term::Prop(PropertyRef::new(param, prop))
}

/// Structural constraints of one parameter. `n_literals` is the number of string
/// literals the operator compares against; format id `n_literals` means "none of them".
///
/// The product constraint for `num_element` and the range of `iter` are not
/// included; see [`numel_product`] and [`iter_range`].
pub fn natural_constraints(
    param: &str,
    ptype: ParamType,
    bounds: &SizeBounds,
    n_literals: usize,
) -> Vec<Constraint> {
    let mut out = Vec::new();
    match ptype {
        ParamType::Tensor => {
            out.push(natural("dtype", Term::in_range(p(param, Property::Dtype), 0, 4)));
            let ndim = p(param, Property::Ndim);
            out.push(natural("ndim", Term::in_range(ndim.clone(), 0, bounds.max_ndim as i64)));
            for i in 0..bounds.max_ndim {
                let s = p(param, Property::Shape(i));
                out.push(natural("shape_range", Term::in_range(s.clone(), 0, bounds.max_dim)));
                // entries past ndim are padding fixed at zero: length(shape) = ndim
                out.push(natural(
                    "shape_length",
                    Term::Or(vec![Term::lt(Term::Int(i as i64), ndim.clone()), Term::eq(s, Term::Int(0))]),
                ));
            }
        }
        ParamType::ListInt | ParamType::ListFloat => {
            let code = if ptype == ParamType::ListInt { LIST_INT_CODE } else { LIST_FLOAT_CODE };
            out.push(natural("element_type", Term::eq(p(param, Property::ElementType), Term::Int(code))));
            let len = p(param, Property::Length);
            out.push(natural("length", Term::in_range(len.clone(), 0, bounds.max_len as i64)));
            if ptype == ParamType::ListInt {
                for i in 0..bounds.max_len {
                    let v = p(param, Property::Value(i));
                    out.push(natural("value_range", Term::in_range(v.clone(), bounds.min_int, bounds.max_int)));
                    out.push(natural(
                        "value_length",
                        Term::Or(vec![Term::lt(Term::Int(i as i64), len.clone()), Term::eq(v, Term::Int(0))]),
                    ));
                }
            }
        }
        ParamType::Str => {
            out.push(natural("format_id", Term::in_range(p(param, Property::FormatId), 0, n_literals as i64)));
        }
        ParamType::Int => {
            out.push(natural("value", Term::in_range(p(param, Property::IntValue), bounds.min_int, bounds.max_int)));
        }
        ParamType::Bool => {
            let v = p(param, Property::BoolValue);
            out.push(natural("value", Term::Or(vec![v.clone(), Term::not(v)])));
        }
        ParamType::Float => {}
    }
    out
}

/// `t.num_element = prod_{i < t.ndim} t.shape[i]`, with the empty product equal to 1.
pub(crate) fn numel_product(param: &str, bounds: &SizeBounds) -> Constraint {
    let ndim = p(param, Property::Ndim);
    let mut prod = Term::Int(1);
    for i in 0..bounds.max_ndim {
        let factor = Term::ite(
            Term::lt(Term::Int(i as i64), ndim.clone()),
            p(param, Property::Shape(i)),
            Term::Int(1),
        );
        prod = if i == 0 { factor } else { Term::Mul(b(prod), b(factor)) };
    }
    natural("num_element", Term::eq(p(param, Property::NumElement), prod))
}

pub(crate) fn iter_range(param: &str, bounds: &SizeBounds) -> Constraint {
    natural("iter", Term::in_range(p(param, Property::Iter), bounds.min_int, bounds.max_int))
}
