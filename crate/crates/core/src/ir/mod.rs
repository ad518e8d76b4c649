//! OVIR: the operator-validation IR.
//!
//! A module is one operator: a header carrying its meta information and a set
//! of functions in SSA form. `main` is the operator entry point; every other
//! function is a helper that may be called from `main` or from other helpers.

mod cfg;
mod lexer;
mod parser;
mod printer;
mod sites;

pub use cfg::{build_cfg, Cfg, Edge, EdgeKind};
pub use parser::{parse_header, parse_module, DiagCode, Diagnostic};
pub use sites::{find_error_sites, ErrorPatterns, ErrorSite, PatternError, SiteKind};

use crate::registry::OperatorMeta;

pub type BlockId = usize;
pub type FuncId = usize;

/// Calls to these names are resolved by the runtime rather than by a helper body.
pub const INTRINSICS: &[&str] = &["runtime_threads", "log"];

pub fn is_intrinsic(name: &str) -> bool {
    INTRINSICS.contains(&name)
}

/// Index of an SSA value within one function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ValueId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Operand {
    Value(ValueId),
    Int(i64),
    Bool(bool),
    Float(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Literal {
    Int(i64),
    Bool(bool),
    Float(f64),
    Str(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    SDiv,
    SRem,
}

impl BinOp {
    pub fn mnemonic(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::SDiv => "sdiv",
            BinOp::SRem => "srem",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pred {
    Eq,
    Ne,
    Slt,
    Sle,
    Sgt,
    Sge,
}

impl Pred {
    pub fn mnemonic(self) -> &'static str {
        match self {
            Pred::Eq => "eq",
            Pred::Ne => "ne",
            Pred::Slt => "slt",
            Pred::Sle => "sle",
            Pred::Sgt => "sgt",
            Pred::Sge => "sge",
        }
    }

    pub fn eval<T: PartialOrd>(self, a: T, b: T) -> bool {
        match self {
            Pred::Eq => a == b,
            Pred::Ne => a != b,
            Pred::Slt => a < b,
            Pred::Sle => a <= b,
            Pred::Sgt => a > b,
            Pred::Sge => a >= b,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LogicOp {
    And,
    Or,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Const(Literal),
    GetInput(String),
    GetAttr(String),
    Shape(Operand),
    Ndim(Operand),
    Numel(Operand),
    Dtype(Operand),
    Len(Operand),
    /// Shape entry of a tensor or shape value.
    Dim(Operand, Operand),
    /// Element of a list.
    Elem(Operand, Operand),
    /// Element of a tensor's data.
    Read(Operand, Operand),
    StrEq(Operand, String),
    Bin(BinOp, Operand, Operand),
    Icmp(Pred, Operand, Operand),
    Logic(LogicOp, Operand, Operand),
    Not(Operand),
    Select(Operand, Operand, Operand),
    Alloca,
    Store(Operand, Operand),
    Load(Operand),
    Call(String, Vec<Operand>),
    AbortIf(Operand),
    Sink(Operand),
}

impl Op {
    pub fn operands(&self) -> Vec<Operand> {
        match self {
            Op::Const(_) | Op::GetInput(_) | Op::GetAttr(_) | Op::Alloca => Vec::new(),
            Op::Shape(a)
            | Op::Ndim(a)
            | Op::Numel(a)
            | Op::Dtype(a)
            | Op::Len(a)
            | Op::StrEq(a, _)
            | Op::Not(a)
            | Op::Load(a)
            | Op::AbortIf(a)
            | Op::Sink(a) => vec![*a],
            Op::Dim(a, b)
            | Op::Elem(a, b)
            | Op::Read(a, b)
            | Op::Bin(_, a, b)
            | Op::Icmp(_, a, b)
            | Op::Logic(_, a, b)
            | Op::Store(a, b) => vec![*a, *b],
            Op::Select(a, b, c) => vec![*a, *b, *c],
            Op::Call(_, args) => args.clone(),
        }
    }

    /// Whether this op defines a result value.
    pub fn produces_value(&self) -> Option<bool> {
        match self {
            Op::Store(..) | Op::AbortIf(_) | Op::Sink(_) => Some(false),
            Op::Call(..) => None,
            _ => Some(true),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instr {
    pub dst: Option<ValueId>,
    pub op: Op,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Terminator {
    Br {
        cond: Operand,
        then_bb: BlockId,
        else_bb: BlockId,
    },
    Jmp(BlockId),
    Ret(Option<Operand>),
    Fail(String),
}

#[derive(Clone, Debug)]
pub struct BasicBlock {
    pub label: String,
    pub instrs: Vec<Instr>,
    pub term: Terminator,
    /// Source line of each instruction followed by the terminator's line.
    pub lines: Vec<u32>,
}

impl PartialEq for BasicBlock {
    fn eq(&self, other: &Self) -> bool {
        self.label == other.label && self.instrs == other.instrs && self.term == other.term
    }
}

impl BasicBlock {
    /// Source line of the instruction at `index` (`instrs.len()` is the terminator).
    pub fn line_of(&self, index: usize) -> u32 {
        self.lines.get(index).copied().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IRFunction {
    pub name: String,
    pub params: Vec<ValueId>,
    pub blocks: Vec<BasicBlock>,
    pub entry: BlockId,
    pub value_names: Vec<String>,
}

impl IRFunction {
    pub fn value_name(&self, v: ValueId) -> &str {
        &self.value_names[v.0 as usize]
    }

    pub fn block_index(&self, label: &str) -> Option<BlockId> {
        self.blocks.iter().position(|b| b.label == label)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IRModule {
    pub meta: OperatorMeta,
    pub functions: Vec<IRFunction>,
    /// Interned string literals compared by `str_eq`, in first-use order.
    pub literals: Vec<String>,
}

impl IRModule {
    pub fn func_index(&self, name: &str) -> Option<FuncId> {
        self.functions.iter().position(|f| f.name == name)
    }

    pub fn main_index(&self) -> FuncId {
        self.func_index("main").expect("parsed modules always define main")
    }

    pub fn main(&self) -> &IRFunction {
        &self.functions[self.main_index()]
    }

    pub fn literal_id(&self, lit: &str) -> Option<usize> {
        self.literals.iter().position(|l| l == lit)
    }

    /// Total number of conditional branch edges, two per `br`.
    pub fn branch_edge_count(&self) -> usize {
        self.functions
            .iter()
            .flat_map(|f| f.blocks.iter())
            .filter(|b| matches!(b.term, Terminator::Br { .. }))
            .count()
            * 2
    }
}
