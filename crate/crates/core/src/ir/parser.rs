use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use super::lexer::{tokenize, Tok, Token};
use super::{
    build_cfg, is_intrinsic, BasicBlock, BinOp, IRFunction, IRModule, Instr, Literal, LogicOp, Op,
    Operand, Pred, Terminator, ValueId,
};
use crate::registry::{OperatorMeta, ParamDecl, ParamType};

/// Stable parser diagnostic codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum DiagCode {
    Syntax,
    UnknownOpcode,
    DuplicateLabel,
    UndefinedLabel,
    UseBeforeDef,
    Redefinition,
    UnreachableCode,
    MissingTerminator,
    UnknownCallee,
    MissingMain,
    DuplicateFunction,
    MissingApi,
    UnknownPtype,
    DuplicateParam,
    ArityMismatch,
}

impl DiagCode {
    pub fn code(self) -> &'static str {
        match self {
            DiagCode::Syntax => "E001",
            DiagCode::UnknownOpcode => "E002",
            DiagCode::DuplicateLabel => "E003",
            DiagCode::UndefinedLabel => "E004",
            DiagCode::UseBeforeDef => "E005",
            DiagCode::Redefinition => "E006",
            DiagCode::UnreachableCode => "E007",
            DiagCode::MissingTerminator => "E008",
            DiagCode::UnknownCallee => "E009",
            DiagCode::MissingMain => "E010",
            DiagCode::DuplicateFunction => "E011",
            DiagCode::MissingApi => "E012",
            DiagCode::UnknownPtype => "E013",
            DiagCode::DuplicateParam => "E014",
            DiagCode::ArityMismatch => "E015",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub code: DiagCode,
    pub message: String,
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {} {}", self.line, self.col, self.code.code(), self.message)
    }
}

impl std::error::Error for Diagnostic {}

/// Parses only the `op ... { param ...  attr ... }` header of an OVIR source.
pub fn parse_header(src: &str) -> Result<OperatorMeta, Diagnostic> {
    let tokens = tokenize(src)?;
    let mut p = Parser { toks: tokens, pos: 0 };
    p.header()
}

/// Parses a complete OVIR module.
pub fn parse_module(src: &str) -> Result<IRModule, Diagnostic> {
    let tokens = tokenize(src)?;
    let mut p = Parser { toks: tokens, pos: 0 };
    let meta = p.header()?;
    let mut functions: Vec<IRFunction> = Vec::new();
    let mut fn_pos: Vec<(u32, u32)> = Vec::new();
    let mut calls: Vec<(String, usize, u32, u32)> = Vec::new();
    loop {
        let t = p.peek().clone();
        match &t.tok {
            Tok::Ident(kw) if kw == "fn" => {
                let (func, fcalls) = p.function()?;
                if functions.iter().any(|f| f.name == func.name) {
                    return Err(diag(
                        DiagCode::DuplicateFunction,
                        format!("function @{} defined twice", func.name),
                        &t,
                    ));
                }
                calls.extend(fcalls);
                fn_pos.push((t.line, t.col));
                functions.push(func);
            }
            Tok::RBrace => {
                p.bump();
                break;
            }
            _ => return Err(p.unexpected("`fn` or `}`")),
        }
    }
    let t = p.peek().clone();
    if t.tok != Tok::Eof {
        return Err(diag(DiagCode::Syntax, format!("unexpected {} after module", t.tok.describe()), &t));
    }
    if !functions.iter().any(|f| f.name == "main") {
        return Err(Diagnostic {
            code: DiagCode::MissingMain,
            message: "module does not define @main".into(),
            line: t.line,
            col: t.col,
        });
    }
    for (callee, argc, line, col) in calls {
        if is_intrinsic(&callee) {
            continue;
        }
        match functions.iter().find(|f| f.name == callee) {
            None => {
                return Err(Diagnostic {
                    code: DiagCode::UnknownCallee,
                    message: format!("call to undefined function @{callee}"),
                    line,
                    col,
                })
            }
            Some(f) if f.params.len() != argc => {
                return Err(Diagnostic {
                    code: DiagCode::ArityMismatch,
                    message: format!(
                        "@{callee} takes {} arguments but {argc} were given",
                        f.params.len()
                    ),
                    line,
                    col,
                })
            }
            Some(_) => {}
        }
    }
    let mut literals: Vec<String> = Vec::new();
    for f in &functions {
        for b in &f.blocks {
            for i in &b.instrs {
                if let Op::StrEq(_, lit) = &i.op {
                    if !literals.contains(lit) {
                        literals.push(lit.clone());
                    }
                }
            }
        }
    }
    Ok(IRModule { meta, functions, literals })
}

fn diag(code: DiagCode, message: String, t: &Token) -> Diagnostic {
    Diagnostic { code, message, line: t.line, col: t.col }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

enum RawTerm {
    Br(Operand, (String, u32, u32), (String, u32, u32)),
    Jmp((String, u32, u32)),
    Ret(Option<Operand>),
    Fail(String),
}

struct RawBlock {
    label: String,
    instrs: Vec<Instr>,
    lines: Vec<u32>,
    term: Option<(RawTerm, u32)>,
}

struct FnCtx {
    names: Vec<String>,
    ids: HashMap<String, ValueId>,
    /// value -> (block, index) of its definition; params use index `usize::MAX` in block 0.
    defs: HashMap<ValueId, (usize, usize)>,
    uses: Vec<(ValueId, usize, usize, u32, u32)>,
}

impl FnCtx {
    fn intern(&mut self, name: &str) -> ValueId {
        if let Some(id) = self.ids.get(name) {
            return *id;
        }
        let id = ValueId(self.names.len() as u32);
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        id
    }
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &str) -> Diagnostic {
        let t = self.peek();
        diag(
            DiagCode::Syntax,
            format!("expected {expected}, found {}", t.tok.describe()),
            t,
        )
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Token, Diagnostic> {
        if self.peek().tok == tok {
            Ok(self.bump())
        } else {
            Err(self.unexpected(what))
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<Token, Diagnostic> {
        match &self.peek().tok {
            Tok::Ident(s) if s == kw => Ok(self.bump()),
            _ => Err(self.unexpected(&format!("`{kw}`"))),
        }
    }

    fn string(&mut self, what: &str) -> Result<String, Diagnostic> {
        match &self.peek().tok {
            Tok::Str(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Token), Diagnostic> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                let t = self.bump();
                Ok((s, t))
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn header(&mut self) -> Result<OperatorMeta, Diagnostic> {
        self.keyword("op")?;
        let op_name = self.string("operator name string")?;
        let api_name = match &self.peek().tok {
            Tok::Ident(s) if s == "api" => {
                self.bump();
                self.string("api name string")?
            }
            _ => {
                let t = self.peek();
                return Err(diag(DiagCode::MissingApi, "missing api name".into(), t));
            }
        };
        self.expect(Tok::LBrace, "`{`")?;
        let mut params = Vec::new();
        let mut attrs = Vec::new();
        loop {
            let is_param = match &self.peek().tok {
                Tok::Ident(s) if s == "param" => true,
                Tok::Ident(s) if s == "attr" => false,
                _ => break,
            };
            self.bump();
            let (name, name_tok) = self.ident("parameter name")?;
            self.expect(Tok::Colon, "`:`")?;
            let ptype = self.ptype()?;
            let dup = params
                .iter()
                .chain(attrs.iter())
                .any(|p: &ParamDecl| p.name == name);
            if dup {
                return Err(diag(
                    DiagCode::DuplicateParam,
                    format!("duplicate parameter name {name}"),
                    &name_tok,
                ));
            }
            let decl = ParamDecl { name, ptype };
            if is_param {
                params.push(decl);
            } else {
                attrs.push(decl);
            }
        }
        Ok(OperatorMeta {
            op_name,
            api_name,
            params,
            attrs,
            source_path: String::new(),
        })
    }

    fn ptype(&mut self) -> Result<ParamType, Diagnostic> {
        let (word, tok) = self.ident("parameter type")?;
        let text = if word == "list" && self.peek().tok == Tok::Lt {
            self.bump();
            let (inner, _) = self.ident("list element type")?;
            self.expect(Tok::Gt, "`>`")?;
            format!("list<{inner}>")
        } else {
            word
        };
        text.parse::<ParamType>().map_err(|bad| {
            diag(DiagCode::UnknownPtype, format!("unknown ptype: {bad}"), &tok)
        })
    }

    fn function(&mut self) -> Result<(IRFunction, Vec<(String, usize, u32, u32)>), Diagnostic> {
        self.keyword("fn")?;
        let name = match &self.peek().tok {
            Tok::Global(n) => {
                let n = n.clone();
                self.bump();
                n
            }
            _ => return Err(self.unexpected("function name `@name`")),
        };
        let mut ctx = FnCtx {
            names: Vec::new(),
            ids: HashMap::new(),
            defs: HashMap::new(),
            uses: Vec::new(),
        };
        let mut params = Vec::new();
        if self.peek().tok == Tok::LParen {
            self.bump();
            if self.peek().tok != Tok::RParen {
                loop {
                    let t = self.peek().clone();
                    match &t.tok {
                        Tok::Value(v) => {
                            let v = v.clone();
                            self.bump();
                            let id = ctx.intern(&v);
                            if ctx.defs.insert(id, (0, usize::MAX)).is_some() {
                                return Err(diag(
                                    DiagCode::Redefinition,
                                    format!("%{v} defined more than once"),
                                    &t,
                                ));
                            }
                            params.push(id);
                        }
                        _ => return Err(self.unexpected("parameter `%name`")),
                    }
                    if self.peek().tok == Tok::Comma {
                        self.bump();
                    } else {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen, "`)`")?;
        }
        self.expect(Tok::LBrace, "`{`")?;

        let mut blocks: Vec<RawBlock> = Vec::new();
        let mut label_pos: HashMap<String, usize> = HashMap::new();
        let mut calls = Vec::new();
        loop {
            let t = self.peek().clone();
            match &t.tok {
                Tok::RBrace => {
                    if let Some(b) = blocks.last() {
                        if b.term.is_none() {
                            return Err(diag(
                                DiagCode::MissingTerminator,
                                format!("block {} has no terminator", b.label),
                                &t,
                            ));
                        }
                    } else {
                        return Err(diag(DiagCode::Syntax, format!("function @{name} has no blocks"), &t));
                    }
                    self.bump();
                    break;
                }
                Tok::Ident(label) if *self.peek_at(1) == Tok::Colon => {
                    if let Some(b) = blocks.last() {
                        if b.term.is_none() {
                            return Err(diag(
                                DiagCode::MissingTerminator,
                                format!("block {} has no terminator", b.label),
                                &t,
                            ));
                        }
                    }
                    if label_pos.contains_key(label) {
                        return Err(diag(
                            DiagCode::DuplicateLabel,
                            format!("duplicate label {label}"),
                            &t,
                        ));
                    }
                    label_pos.insert(label.clone(), blocks.len());
                    blocks.push(RawBlock {
                        label: label.clone(),
                        instrs: Vec::new(),
                        lines: Vec::new(),
                        term: None,
                    });
                    self.bump();
                    self.bump();
                }
                Tok::Eof => return Err(self.unexpected("`}`")),
                _ => {
                    let Some(cur) = blocks.len().checked_sub(1) else {
                        return Err(diag(
                            DiagCode::Syntax,
                            "instruction outside of a block; expected a label".into(),
                            &t,
                        ));
                    };
                    if blocks[cur].term.is_some() {
                        return Err(diag(
                            DiagCode::UnreachableCode,
                            "unreachable code after terminator".into(),
                            &t,
                        ));
                    }
                    let index = blocks[cur].instrs.len();
                    match self.instruction(&mut ctx, cur, index, &mut calls)? {
                        Parsed::Instr(i) => {
                            blocks[cur].instrs.push(i);
                            blocks[cur].lines.push(t.line);
                        }
                        Parsed::Term(term) => blocks[cur].term = Some((term, t.line)),
                    }
                }
            }
        }

        let mut resolved = Vec::with_capacity(blocks.len());
        let resolve = |(l, line, col): &(String, u32, u32)| -> Result<usize, Diagnostic> {
            label_pos.get(l).copied().ok_or_else(|| Diagnostic {
                code: DiagCode::UndefinedLabel,
                message: format!("undefined label {l}"),
                line: *line,
                col: *col,
            })
        };
        for b in blocks {
            let (raw, tline) = b.term.expect("checked above");
            let term = match raw {
                RawTerm::Br(cond, t, f) => Terminator::Br {
                    cond,
                    then_bb: resolve(&t)?,
                    else_bb: resolve(&f)?,
                },
                RawTerm::Jmp(t) => Terminator::Jmp(resolve(&t)?),
                RawTerm::Ret(v) => Terminator::Ret(v),
                RawTerm::Fail(m) => Terminator::Fail(m),
            };
            let mut lines = b.lines;
            lines.push(tline);
            resolved.push(BasicBlock {
                label: b.label,
                instrs: b.instrs,
                term,
                lines,
            });
        }
        let func = IRFunction {
            name,
            params,
            blocks: resolved,
            entry: 0,
            value_names: ctx.names.clone(),
        };
        check_defs(&func, &ctx)?;
        Ok((func, calls))
    }

    fn operand(&mut self, ctx: &mut FnCtx, block: usize, index: usize) -> Result<Operand, Diagnostic> {
        let t = self.peek().clone();
        let op = match &t.tok {
            Tok::Value(v) => {
                let id = ctx.intern(v);
                ctx.uses.push((id, block, index, t.line, t.col));
                Operand::Value(id)
            }
            Tok::Int(i) => Operand::Int(*i),
            Tok::Float(f) => Operand::Float(*f),
            Tok::Ident(s) if s == "true" => Operand::Bool(true),
            Tok::Ident(s) if s == "false" => Operand::Bool(false),
            _ => return Err(self.unexpected("an operand")),
        };
        self.bump();
        Ok(op)
    }

    fn comma(&mut self) -> Result<(), Diagnostic> {
        self.expect(Tok::Comma, "`,`").map(|_| ())
    }

    fn label_ref(&mut self) -> Result<(String, u32, u32), Diagnostic> {
        let (l, t) = self.ident("block label")?;
        Ok((l, t.line, t.col))
    }

    fn starts_operand(&self) -> bool {
        match &self.peek().tok {
            Tok::Value(_) | Tok::Int(_) | Tok::Float(_) => true,
            Tok::Ident(s) => (s == "true" || s == "false") && *self.peek_at(1) != Tok::Colon,
            _ => false,
        }
    }

    fn instruction(
        &mut self,
        ctx: &mut FnCtx,
        block: usize,
        index: usize,
        calls: &mut Vec<(String, usize, u32, u32)>,
    ) -> Result<Parsed, Diagnostic> {
        let start = self.peek().clone();
        let mut dst_name = None;
        if let Tok::Value(v) = &start.tok {
            if *self.peek_at(1) == Tok::Equals {
                dst_name = Some(v.clone());
                self.bump();
                self.bump();
            } else {
                return Err(diag(DiagCode::Syntax, format!("expected `=` after %{v}"), &start));
            }
        }
        let (opname, optok) = match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                (s, self.bump())
            }
            _ => return Err(self.unexpected("an opcode")),
        };

        let term = match opname.as_str() {
            "br" => {
                let c = self.operand(ctx, block, index)?;
                self.comma()?;
                let t = self.label_ref()?;
                self.comma()?;
                let f = self.label_ref()?;
                Some(RawTerm::Br(c, t, f))
            }
            "jmp" => Some(RawTerm::Jmp(self.label_ref()?)),
            "ret" => {
                let v = if self.starts_operand() {
                    Some(self.operand(ctx, block, index)?)
                } else {
                    None
                };
                Some(RawTerm::Ret(v))
            }
            "fail" => Some(RawTerm::Fail(self.string("failure message string")?)),
            _ => None,
        };
        if let Some(term) = term {
            if dst_name.is_some() {
                return Err(diag(DiagCode::Syntax, format!("`{opname}` does not produce a value"), &optok));
            }
            return Ok(Parsed::Term(term));
        }

        let op = match opname.as_str() {
            "const" => {
                let t = self.peek().clone();
                let lit = match &t.tok {
                    Tok::Int(i) => Literal::Int(*i),
                    Tok::Float(f) => Literal::Float(*f),
                    Tok::Str(s) => Literal::Str(s.clone()),
                    Tok::Ident(s) if s == "true" => Literal::Bool(true),
                    Tok::Ident(s) if s == "false" => Literal::Bool(false),
                    _ => return Err(self.unexpected("a literal")),
                };
                self.bump();
                Op::Const(lit)
            }
            "get_input" => Op::GetInput(self.string("parameter name string")?),
            "get_attr" => Op::GetAttr(self.string("attribute name string")?),
            "shape" => Op::Shape(self.operand(ctx, block, index)?),
            "ndim" => Op::Ndim(self.operand(ctx, block, index)?),
            "numel" => Op::Numel(self.operand(ctx, block, index)?),
            "dtype" => Op::Dtype(self.operand(ctx, block, index)?),
            "len" => Op::Len(self.operand(ctx, block, index)?),
            "dim" | "elem" | "read" => {
                let a = self.operand(ctx, block, index)?;
                self.comma()?;
                let b = self.operand(ctx, block, index)?;
                match opname.as_str() {
                    "dim" => Op::Dim(a, b),
                    "elem" => Op::Elem(a, b),
                    _ => Op::Read(a, b),
                }
            }
            "str_eq" => {
                let a = self.operand(ctx, block, index)?;
                self.comma()?;
                Op::StrEq(a, self.string("string literal")?)
            }
            "add" | "sub" | "mul" | "sdiv" | "srem" => {
                let bop = match opname.as_str() {
                    "add" => BinOp::Add,
                    "sub" => BinOp::Sub,
                    "mul" => BinOp::Mul,
                    "sdiv" => BinOp::SDiv,
                    _ => BinOp::SRem,
                };
                let a = self.operand(ctx, block, index)?;
                self.comma()?;
                let b = self.operand(ctx, block, index)?;
                Op::Bin(bop, a, b)
            }
            "icmp" => {
                let (p, ptok) = self.ident("comparison predicate")?;
                let pred = match p.as_str() {
                    "eq" => Pred::Eq,
                    "ne" => Pred::Ne,
                    "slt" => Pred::Slt,
                    "sle" => Pred::Sle,
                    "sgt" => Pred::Sgt,
                    "sge" => Pred::Sge,
                    other => {
                        return Err(diag(DiagCode::Syntax, format!("unknown icmp predicate {other}"), &ptok))
                    }
                };
                let a = self.operand(ctx, block, index)?;
                self.comma()?;
                let b = self.operand(ctx, block, index)?;
                Op::Icmp(pred, a, b)
            }
            "and" | "or" => {
                let a = self.operand(ctx, block, index)?;
                self.comma()?;
                let b = self.operand(ctx, block, index)?;
                let lop = if opname == "and" { LogicOp::And } else { LogicOp::Or };
                Op::Logic(lop, a, b)
            }
            "not" => Op::Not(self.operand(ctx, block, index)?),
            "select" => {
                let c = self.operand(ctx, block, index)?;
                self.comma()?;
                let a = self.operand(ctx, block, index)?;
                self.comma()?;
                let b = self.operand(ctx, block, index)?;
                Op::Select(c, a, b)
            }
            "alloca" => Op::Alloca,
            "store" => {
                let c = self.operand(ctx, block, index)?;
                self.comma()?;
                let v = self.operand(ctx, block, index)?;
                Op::Store(c, v)
            }
            "load" => Op::Load(self.operand(ctx, block, index)?),
            "call" => {
                let t = self.peek().clone();
                let callee = match &t.tok {
                    Tok::Global(g) => g.clone(),
                    _ => return Err(self.unexpected("callee `@name`")),
                };
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                let mut args = Vec::new();
                if self.peek().tok != Tok::RParen {
                    loop {
                        args.push(self.operand(ctx, block, index)?);
                        if self.peek().tok == Tok::Comma {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Tok::RParen, "`)`")?;
                calls.push((callee.clone(), args.len(), t.line, t.col));
                Op::Call(callee, args)
            }
            "abort_if" => Op::AbortIf(self.operand(ctx, block, index)?),
            "sink" => Op::Sink(self.operand(ctx, block, index)?),
            other => {
                return Err(diag(DiagCode::UnknownOpcode, format!("unknown opcode {other}"), &optok))
            }
        };

        let dst = match (op.produces_value(), dst_name) {
            (Some(true), None) => {
                return Err(diag(DiagCode::Syntax, format!("`{opname}` requires a result value"), &optok))
            }
            (Some(false), Some(_)) => {
                return Err(diag(DiagCode::Syntax, format!("`{opname}` does not produce a value"), &optok))
            }
            (_, Some(name)) => {
                let id = ctx.intern(&name);
                if ctx.defs.insert(id, (block, index)).is_some() {
                    return Err(diag(
                        DiagCode::Redefinition,
                        format!("%{name} defined more than once"),
                        &start,
                    ));
                }
                Some(id)
            }
            (_, None) => None,
        };
        Ok(Parsed::Instr(Instr { dst, op }))
    }
}

enum Parsed {
    Instr(Instr),
    Term(RawTerm),
}

/// Every use must be dominated by its definition.
fn check_defs(func: &IRFunction, ctx: &FnCtx) -> Result<(), Diagnostic> {
    let cfg = build_cfg(func);
    for &(id, ublock, uindex, line, col) in &ctx.uses {
        let name = &ctx.names[id.0 as usize];
        let err = || Diagnostic {
            code: DiagCode::UseBeforeDef,
            message: format!("use of %{name} before its definition"),
            line,
            col,
        };
        let Some(&(dblock, dindex)) = ctx.defs.get(&id) else {
            return Err(err());
        };
        if dindex == usize::MAX {
            continue;
        }
        let ok = if dblock == ublock {
            dindex < uindex
        } else if cfg.is_reachable(ublock) {
            cfg.dominates(dblock, ublock)
        } else {
            true
        };
        if !ok {
            return Err(err());
        }
    }
    Ok(())
}
