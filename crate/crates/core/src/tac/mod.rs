//! Three-address code: program representation and text format.
//!
//! ```text
//! const log2e = 0x1.71547652b82fep0
//! const three33 = {0, 0x42180000}     # binary64 word pair {lo, hi}
//!
//! func round_kernel(x) -> r
//!   t = fadd x, 0x1.8p52
//!   r = fsub t, 0x1.8p52
//!   ret r
//! ```
//!
//! One instruction per line, `#` starts a comment. Every instruction gets the
//! next static id in source order. Registers are mutable and typed: float
//! registers hold binary64 values, integer registers hold 64-bit two's
//! complement values. `a = b + c` (also `-`, `*`, `/`) is sugar for the float
//! opcodes and `a = b` for a move.

pub(crate) mod parse;
mod print;
mod validate;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{parse_annotated, parse_program, parse_unchecked};
pub use print::pretty_print;
pub use validate::{validate, Diagnostic, DiagnosticKind};

/// Static instruction id.
pub type InstrId = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TacError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid program: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pred {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Pred {
    pub fn name(self) -> &'static str {
        match self {
            Pred::Eq => "eq",
            Pred::Ne => "ne",
            Pred::Lt => "lt",
            Pred::Le => "le",
            Pred::Gt => "gt",
            Pred::Ge => "ge",
        }
    }

    fn parse(s: &str) -> Option<Pred> {
        [Pred::Eq, Pred::Ne, Pred::Lt, Pred::Le, Pred::Gt, Pred::Ge]
            .into_iter()
            .find(|p| p.name() == s)
    }

    /// Applies the predicate to an ordering; `None` (unordered) is false
    /// except for `ne`.
    pub fn holds(self, ord: Option<std::cmp::Ordering>) -> bool {
        use std::cmp::Ordering::*;
        match (self, ord) {
            (Pred::Ne, None) => true,
            (_, None) => false,
            (Pred::Eq, Some(o)) => o == Equal,
            (Pred::Ne, Some(o)) => o != Equal,
            (Pred::Lt, Some(o)) => o == Less,
            (Pred::Le, Some(o)) => o != Greater,
            (Pred::Gt, Some(o)) => o == Greater,
            (Pred::Ge, Some(o)) => o != Less,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Opcode {
    FConst,
    FMov,
    FAdd,
    FSub,
    FMul,
    FDiv,
    FSqrt,
    FNeg,
    FAbs,
    FFloor,
    GetHi,
    GetLo,
    /// `make_f hi, lo`
    MakeF,
    SetHi,
    SetLo,
    IConst,
    IMov,
    IAdd,
    ISub,
    IAnd,
    IOr,
    IXor,
    IShl,
    IShr,
    ICmp(Pred),
    /// `br cond, label`: jumps when `cond != 0`.
    Br,
    Jmp,
    Ret,
}

/// Register kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Kind {
    Float,
    Int,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Float => "float",
            Kind::Int => "int",
        })
    }
}

impl Opcode {
    const NAMED: [(&'static str, Opcode); 27] = [
        ("fconst", Opcode::FConst),
        ("fmov", Opcode::FMov),
        ("fadd", Opcode::FAdd),
        ("fsub", Opcode::FSub),
        ("fmul", Opcode::FMul),
        ("fdiv", Opcode::FDiv),
        ("fsqrt", Opcode::FSqrt),
        ("fneg", Opcode::FNeg),
        ("fabs", Opcode::FAbs),
        ("ffloor", Opcode::FFloor),
        ("get_hi", Opcode::GetHi),
        ("get_lo", Opcode::GetLo),
        ("make_f", Opcode::MakeF),
        ("set_hi", Opcode::SetHi),
        ("set_lo", Opcode::SetLo),
        ("iconst", Opcode::IConst),
        ("imov", Opcode::IMov),
        ("iadd", Opcode::IAdd),
        ("isub", Opcode::ISub),
        ("iand", Opcode::IAnd),
        ("ior", Opcode::IOr),
        ("ixor", Opcode::IXor),
        ("ishl", Opcode::IShl),
        ("ishr", Opcode::IShr),
        ("br", Opcode::Br),
        ("jmp", Opcode::Jmp),
        ("ret", Opcode::Ret),
    ];

    pub fn mnemonic(self) -> String {
        match self {
            Opcode::ICmp(p) => format!("icmp {}", p.name()),
            op => Self::NAMED
                .iter()
                .find(|(_, o)| *o == op)
                .map(|(n, _)| n.to_string())
                .expect("every opcode is named"),
        }
    }

    fn from_mnemonic(name: &str) -> Option<Opcode> {
        Self::NAMED.iter().find(|(n, _)| *n == name).map(|(_, o)| *o)
    }

    /// Operand kinds, or `None` for `icmp` (two operands of one kind) and
    /// `ret` (zero or one float).
    pub fn operand_kinds(self) -> Option<&'static [Kind]> {
        use Kind::*;
        Some(match self {
            Opcode::FConst | Opcode::FMov => &[Float],
            Opcode::FAdd | Opcode::FSub | Opcode::FMul | Opcode::FDiv => &[Float, Float],
            Opcode::FSqrt | Opcode::FNeg | Opcode::FAbs | Opcode::FFloor => &[Float],
            Opcode::GetHi | Opcode::GetLo => &[Float],
            Opcode::MakeF => &[Int, Int],
            Opcode::SetHi | Opcode::SetLo => &[Float, Int],
            Opcode::IConst | Opcode::IMov => &[Int],
            Opcode::IAdd | Opcode::ISub | Opcode::IAnd | Opcode::IOr | Opcode::IXor | Opcode::IShl | Opcode::IShr => {
                &[Int, Int]
            }
            Opcode::Br => &[Int],
            Opcode::Jmp => &[],
            Opcode::ICmp(_) | Opcode::Ret => return None,
        })
    }

    /// Kind of the destination register, if the opcode writes one.
    pub fn result_kind(self) -> Option<Kind> {
        match self {
            Opcode::FConst
            | Opcode::FMov
            | Opcode::FAdd
            | Opcode::FSub
            | Opcode::FMul
            | Opcode::FDiv
            | Opcode::FSqrt
            | Opcode::FNeg
            | Opcode::FAbs
            | Opcode::FFloor
            | Opcode::MakeF
            | Opcode::SetHi
            | Opcode::SetLo => Some(Kind::Float),
            Opcode::GetHi
            | Opcode::GetLo
            | Opcode::IConst
            | Opcode::IMov
            | Opcode::IAdd
            | Opcode::ISub
            | Opcode::IAnd
            | Opcode::IOr
            | Opcode::IXor
            | Opcode::IShl
            | Opcode::IShr
            | Opcode::ICmp(_) => Some(Kind::Int),
            Opcode::Br | Opcode::Jmp | Opcode::Ret => None,
        }
    }

    pub fn takes_label(self) -> bool {
        matches!(self, Opcode::Br | Opcode::Jmp)
    }

    /// Float arithmetic that the shadow lane evaluates at its own precision.
    pub fn is_float_arith(self) -> bool {
        matches!(
            self,
            Opcode::FAdd
                | Opcode::FSub
                | Opcode::FMul
                | Opcode::FDiv
                | Opcode::FSqrt
                | Opcode::FNeg
                | Opcode::FAbs
                | Opcode::FFloor
        )
    }

    /// Infix symbol used by the `a = b + c` sugar.
    pub fn infix(self) -> Option<char> {
        match self {
            Opcode::FAdd => Some('+'),
            Opcode::FSub => Some('-'),
            Opcode::FMul => Some('*'),
            Opcode::FDiv => Some('/'),
            _ => None,
        }
    }
}

/// Instruction operand. Literals keep their source text; the engine rounds
/// them to its native precision when a program is loaded.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Operand {
    Var(String),
    Lit(String),
}

impl Operand {
    pub fn var(&self) -> Option<&str> {
        match self {
            Operand::Var(v) => Some(v),
            Operand::Lit(_) => None,
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Var(v) | Operand::Lit(v) => f.write_str(v),
        }
    }
}

#[derive(Clone, Debug, Eq)]
pub struct TacInstr {
    pub id: InstrId,
    pub op: Opcode,
    pub dst: Option<String>,
    pub srcs: Vec<Operand>,
    pub label: Option<String>,
    /// `function:line`, for reports only; ignored by equality.
    pub srcloc: String,
}

impl PartialEq for TacInstr {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.op == other.op
            && self.dst == other.dst
            && self.srcs == other.srcs
            && self.label == other.label
    }
}

/// Value of a named constant.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ConstValue {
    Literal(String),
    /// Binary64 encoding as `{lo, hi}` 32-bit words.
    Words {
        lo: u32,
        hi: u32,
    },
}

impl ConstValue {
    /// The constant rounded once to `fmt`; `None` for a malformed literal.
    pub fn value(&self, fmt: psop_mpfloat::Format) -> Option<psop_mpfloat::MpFloat> {
        match self {
            ConstValue::Literal(text) => parse::parse_float_literal(text, fmt),
            ConstValue::Words { lo, hi } => Some(psop_mpfloat::MpFloat::from_binary64_words(*lo, *hi).round_to(fmt)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstDecl {
    pub name: String,
    pub value: ConstValue,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TacProgram {
    pub name: String,
    pub params: Vec<String>,
    pub consts: Vec<ConstDecl>,
    pub instrs: Vec<TacInstr>,
    pub return_var: String,
    /// Label name to the index of the instruction it precedes; a label at the
    /// end of the body maps to `instrs.len()`.
    pub labels: BTreeMap<String, usize>,
}

impl TacProgram {
    pub fn instr(&self, id: InstrId) -> Option<&TacInstr> {
        self.instrs.get(id)
    }

    /// Ids of instructions that write a float register.
    pub fn float_assignments(&self) -> impl Iterator<Item = InstrId> + '_ {
        self.instrs
            .iter()
            .filter(|i| i.op.result_kind() == Some(Kind::Float))
            .map(|i| i.id)
    }

    pub fn srcloc(&self, id: InstrId) -> &str {
        self.instrs.get(id).map(|i| i.srcloc.as_str()).unwrap_or("")
    }
}

/// Instructions whose shadow computation runs at native precision.
///
/// Membership is a hash lookup; iteration is in ascending id order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BarrierSet {
    ids: HashSet<InstrId>,
}

impl BarrierSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: InstrId) -> bool {
        self.ids.insert(id)
    }

    pub fn contains(&self, id: InstrId) -> bool {
        self.ids.contains(&id)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn sorted(&self) -> Vec<InstrId> {
        let mut v: Vec<_> = self.ids.iter().copied().collect();
        v.sort_unstable();
        v
    }

    /// Every float-writing instruction of `prog`.
    pub fn all_float(prog: &TacProgram) -> Self {
        prog.float_assignments().collect()
    }
}

impl FromIterator<InstrId> for BarrierSet {
    fn from_iter<T: IntoIterator<Item = InstrId>>(iter: T) -> Self {
        BarrierSet {
            ids: iter.into_iter().collect(),
        }
    }
}

impl Serialize for BarrierSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.sorted().serialize(s)
    }
}

impl<'de> Deserialize<'de> for BarrierSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Vec::<InstrId>::deserialize(d)?.into_iter().collect())
    }
}
