use std::fmt::{self, Write};

use super::{IRFunction, IRModule, Literal, LogicOp, Op, Operand, Terminator};

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

struct Printer<'a> {
    func: &'a IRFunction,
}

impl Printer<'_> {
    fn operand(&self, o: &Operand) -> String {
        match o {
            Operand::Value(v) => format!("%{}", self.func.value_name(*v)),
            Operand::Int(i) => i.to_string(),
            Operand::Bool(b) => b.to_string(),
            Operand::Float(f) => format!("{f:?}"),
        }
    }

    fn op(&self, op: &Op) -> String {
        let o = |x: &Operand| self.operand(x);
        match op {
            Op::Const(l) => match l {
                Literal::Int(i) => format!("const {i}"),
                Literal::Bool(b) => format!("const {b}"),
                Literal::Float(f) => format!("const {f:?}"),
                Literal::Str(s) => format!("const {}", quote(s)),
            },
            Op::GetInput(p) => format!("get_input {}", quote(p)),
            Op::GetAttr(p) => format!("get_attr {}", quote(p)),
            Op::Shape(a) => format!("shape {}", o(a)),
            Op::Ndim(a) => format!("ndim {}", o(a)),
            Op::Numel(a) => format!("numel {}", o(a)),
            Op::Dtype(a) => format!("dtype {}", o(a)),
            Op::Len(a) => format!("len {}", o(a)),
            Op::Dim(a, b) => format!("dim {}, {}", o(a), o(b)),
            Op::Elem(a, b) => format!("elem {}, {}", o(a), o(b)),
            Op::Read(a, b) => format!("read {}, {}", o(a), o(b)),
            Op::StrEq(a, s) => format!("str_eq {}, {}", o(a), quote(s)),
            Op::Bin(b, x, y) => format!("{} {}, {}", b.mnemonic(), o(x), o(y)),
            Op::Icmp(p, x, y) => format!("icmp {} {}, {}", p.mnemonic(), o(x), o(y)),
            Op::Logic(LogicOp::And, x, y) => format!("and {}, {}", o(x), o(y)),
            Op::Logic(LogicOp::Or, x, y) => format!("or {}, {}", o(x), o(y)),
            Op::Not(a) => format!("not {}", o(a)),
            Op::Select(c, x, y) => format!("select {}, {}, {}", o(c), o(x), o(y)),
            Op::Alloca => "alloca".into(),
            Op::Store(c, v) => format!("store {}, {}", o(c), o(v)),
            Op::Load(c) => format!("load {}", o(c)),
            Op::Call(name, args) => {
                let args: Vec<String> = args.iter().map(o).collect();
                format!("call @{name}({})", args.join(", "))
            }
            Op::AbortIf(c) => format!("abort_if {}", o(c)),
            Op::Sink(v) => format!("sink {}", o(v)),
        }
    }

    fn write(&self, out: &mut String) -> fmt::Result {
        let f = self.func;
        write!(out, "  fn @{}", f.name)?;
        if !f.params.is_empty() {
            let ps: Vec<String> = f.params.iter().map(|p| format!("%{}", f.value_name(*p))).collect();
            write!(out, "({})", ps.join(", "))?;
        }
        out.push_str(" {\n");
        for b in &f.blocks {
            writeln!(out, "  {}:", b.label)?;
            for i in &b.instrs {
                out.push_str("    ");
                if let Some(d) = i.dst {
                    write!(out, "%{} = ", f.value_name(d))?;
                }
                out.push_str(&self.op(&i.op));
                out.push('\n');
            }
            let term = match &b.term {
                Terminator::Br { cond, then_bb, else_bb } => format!(
                    "br {}, {}, {}",
                    self.operand(cond),
                    f.blocks[*then_bb].label,
                    f.blocks[*else_bb].label
                ),
                Terminator::Jmp(t) => format!("jmp {}", f.blocks[*t].label),
                Terminator::Ret(None) => "ret".into(),
                Terminator::Ret(Some(v)) => format!("ret {}", self.operand(v)),
                Terminator::Fail(m) => format!("fail {}", quote(m)),
            };
            writeln!(out, "    {term}")?;
        }
        out.push_str("  }\n");
        Ok(())
    }
}

impl fmt::Display for IRModule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        writeln!(
            out,
            "op {} api {} {{",
            quote(&self.meta.op_name),
            quote(&self.meta.api_name)
        )?;
        for p in &self.meta.params {
            writeln!(out, "  param {}: {}", p.name, p.ptype)?;
        }
        for p in &self.meta.attrs {
            writeln!(out, "  attr {}: {}", p.name, p.ptype)?;
        }
        for func in &self.functions {
            Printer { func }.write(&mut out)?;
        }
        out.push_str("}\n");
        f.write_str(&out)
    }
}

#[cfg(test)]
mod tests {
    use crate::ir::parse_module;

    #[test]
    fn reprint_is_fixpoint() {
        let src = r#"
op "P" api "t.P" {
  param x: tensor
  attr s: string
  attr l: list<float>
  fn @main {
  entry:
    %x = get_input "x"
    %s = get_attr "s"
    %f = const 1.5e-3
    %q = const "a\"b"
    %e = str_eq %s, "NHWC"
    %n = ndim %x
    %m = add %n, -1
    %k = call @h(%m, 2)
    br %e, yes, no
  yes:
    ret %k
  no:
    fail "bad \\ thing"
  }
  fn @h(%a, %b) {
  e:
    %r = srem %a, %b
    ret %r
  }
}
"#;
        let m1 = parse_module(src).unwrap();
        let printed = m1.to_string();
        let m2 = parse_module(&printed).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(printed, m2.to_string());
    }
}
