use std::collections::HashMap;
use std::fmt;

use psop_mpfloat::Format;

use super::parse::{parse_float_literal, parse_int_literal};
use super::{InstrId, Kind, Opcode, Operand, TacProgram};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DiagnosticKind {
    UseBeforeAssign,
    UnassignedReturn,
    UndefinedLabel,
    TypeMismatch,
    ArityMismatch,
    BadLiteral,
    DuplicateName,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub instr: Option<InstrId>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.instr {
            Some(id) => write!(f, "{:?} at instruction {id}: {}", self.kind, self.message),
            None => write!(f, "{:?}: {}", self.kind, self.message),
        }
    }
}

struct Checker<'a> {
    prog: &'a TacProgram,
    diags: Vec<Diagnostic>,
}

impl Checker<'_> {
    fn report(&mut self, kind: DiagnosticKind, instr: Option<InstrId>, message: String) {
        self.diags.push(Diagnostic { kind, instr, message });
    }
}

/// Checks operand counts, register kinds, labels and definite assignment.
/// Returns an empty list for a well-formed program.
pub fn validate(prog: &TacProgram) -> Vec<Diagnostic> {
    let mut c = Checker {
        prog,
        diags: Vec::new(),
    };
    let kinds = c.kinds();
    c.arity_and_types(&kinds);
    c.labels();
    c.assignment();
    c.diags
}

impl<'a> Checker<'a> {
    /// Register kinds from parameters, constants and destinations. A register
    /// written with both kinds is a type mismatch.
    fn kinds(&mut self) -> HashMap<&'a str, Kind> {
        let prog = self.prog;
        let mut kinds: HashMap<&'a str, Kind> = HashMap::new();
        for p in &prog.params {
            kinds.insert(p, Kind::Float);
        }
        for cdecl in &prog.consts {
            if prog.params.contains(&cdecl.name) {
                self.report(
                    DiagnosticKind::DuplicateName,
                    None,
                    format!("constant `{}` shadows a parameter", cdecl.name),
                );
            }
            kinds.insert(&cdecl.name, Kind::Float);
        }
        for ins in &prog.instrs {
            let (Some(dst), Some(kind)) = (&ins.dst, ins.op.result_kind()) else {
                continue;
            };
            if prog.consts.iter().any(|c| &c.name == dst) {
                self.report(
                    DiagnosticKind::DuplicateName,
                    Some(ins.id),
                    format!("assignment to constant `{dst}`"),
                );
            }
            match kinds.get(dst.as_str()) {
                Some(&k) if k != kind => self.report(
                    DiagnosticKind::TypeMismatch,
                    Some(ins.id),
                    format!("`{dst}` is {k} but is assigned a {kind} value"),
                ),
                Some(_) => {}
                None => {
                    kinds.insert(dst, kind);
                }
            }
        }
        kinds
    }

    fn operand_kind(
        &mut self,
        id: InstrId,
        src: &Operand,
        kinds: &HashMap<&str, Kind>,
        want: Option<Kind>,
    ) -> Option<Kind> {
        match src {
            Operand::Var(v) => kinds.get(v.as_str()).copied(),
            Operand::Lit(text) => {
                let as_int = parse_int_literal(text).is_some();
                let as_float = parse_float_literal(text, Format::BINARY64).is_some();
                match want {
                    Some(Kind::Int) if as_int => Some(Kind::Int),
                    Some(Kind::Float) if as_float => Some(Kind::Float),
                    None if as_int => Some(Kind::Int),
                    None if as_float => Some(Kind::Float),
                    _ if as_int || as_float => Some(if as_int { Kind::Int } else { Kind::Float }),
                    _ => {
                        self.report(DiagnosticKind::BadLiteral, Some(id), format!("bad literal `{text}`"));
                        None
                    }
                }
            }
        }
    }

    fn arity_and_types(&mut self, kinds: &HashMap<&str, Kind>) {
        for ins in &self.prog.instrs {
            let id = ins.id;
            if ins.op.result_kind().is_some() != ins.dst.is_some() {
                self.report(DiagnosticKind::ArityMismatch, Some(id), "destination mismatch".into());
            }
            if ins.op.takes_label() != ins.label.is_some() {
                self.report(DiagnosticKind::ArityMismatch, Some(id), "label operand mismatch".into());
            }
            match ins.op.operand_kinds() {
                Some(expected) => {
                    if expected.len() != ins.srcs.len() {
                        self.report(
                            DiagnosticKind::ArityMismatch,
                            Some(id),
                            format!(
                                "{} takes {} operand(s), got {}",
                                ins.op.mnemonic(),
                                expected.len(),
                                ins.srcs.len()
                            ),
                        );
                        continue;
                    }
                    for (src, &want) in ins.srcs.iter().zip(expected) {
                        if matches!(ins.op, Opcode::FConst | Opcode::IConst) && !matches!(src, Operand::Lit(_)) {
                            self.report(
                                DiagnosticKind::TypeMismatch,
                                Some(id),
                                format!("{} needs a literal", ins.op.mnemonic()),
                            );
                        }
                        if let Some(got) = self.operand_kind(id, src, kinds, Some(want)) {
                            if got != want {
                                self.report(
                                    DiagnosticKind::TypeMismatch,
                                    Some(id),
                                    format!("`{src}` is {got}, expected {want}"),
                                );
                            }
                        }
                    }
                }
                None if matches!(ins.op, Opcode::ICmp(_)) => {
                    if ins.srcs.len() != 2 {
                        self.report(
                            DiagnosticKind::ArityMismatch,
                            Some(id),
                            format!("icmp takes 2 operands, got {}", ins.srcs.len()),
                        );
                        continue;
                    }
                    let a = self.operand_kind(id, &ins.srcs[0], kinds, None);
                    let want = match &ins.srcs[0] {
                        Operand::Lit(_) => None,
                        Operand::Var(_) => a,
                    };
                    let b = self.operand_kind(id, &ins.srcs[1], kinds, want);
                    // A literal adopts the other operand's kind.
                    let a = match (&ins.srcs[0], b) {
                        (Operand::Lit(_), Some(k)) => self.operand_kind(id, &ins.srcs[0], kinds, Some(k)),
                        _ => a,
                    };
                    if let (Some(a), Some(b)) = (a, b) {
                        if a != b {
                            self.report(
                                DiagnosticKind::TypeMismatch,
                                Some(id),
                                format!("icmp compares {a} with {b}"),
                            );
                        }
                    }
                }
                None => {
                    // ret [float]
                    if ins.srcs.len() > 1 {
                        self.report(
                            DiagnosticKind::ArityMismatch,
                            Some(id),
                            format!("ret takes at most 1 operand, got {}", ins.srcs.len()),
                        );
                        continue;
                    }
                    if let Some(src) = ins.srcs.first() {
                        if let Some(k) = self.operand_kind(id, src, kinds, Some(Kind::Float)) {
                            if k != Kind::Float {
                                self.report(DiagnosticKind::TypeMismatch, Some(id), format!("ret of {k} `{src}`"));
                            }
                        }
                    }
                }
            }
        }
        if kinds.get(self.prog.return_var.as_str()) == Some(&Kind::Int) {
            self.report(
                DiagnosticKind::TypeMismatch,
                None,
                format!("return variable `{}` is int", self.prog.return_var),
            );
        }
    }

    fn labels(&mut self) {
        let n = self.prog.instrs.len();
        for (name, &at) in &self.prog.labels {
            if at > n {
                self.report(
                    DiagnosticKind::UndefinedLabel,
                    None,
                    format!("label `{name}` is out of range"),
                );
            }
        }
        for ins in &self.prog.instrs {
            if let Some(label) = &ins.label {
                if !self.prog.labels.contains_key(label) {
                    self.report(
                        DiagnosticKind::UndefinedLabel,
                        Some(ins.id),
                        format!("undefined label `{label}`"),
                    );
                }
            }
        }
    }

    /// Successor instruction indices; `instrs.len()` is the implicit exit.
    fn successors(&self, i: usize) -> Vec<usize> {
        let ins = &self.prog.instrs[i];
        let target = ins.label.as_ref().and_then(|l| self.prog.labels.get(l)).copied();
        match ins.op {
            Opcode::Ret => Vec::new(),
            Opcode::Jmp => target.into_iter().collect(),
            Opcode::Br => std::iter::once(i + 1).chain(target).collect(),
            _ => vec![i + 1],
        }
    }

    /// Must-assigned dataflow: every use and every exit sees an assigned
    /// register on all paths from entry.
    fn assignment(&mut self) {
        let prog = self.prog;
        let n = prog.instrs.len();
        let mut index: HashMap<&str, usize> = HashMap::new();
        let names = prog
            .params
            .iter()
            .chain(prog.consts.iter().map(|c| &c.name))
            .chain(prog.instrs.iter().flat_map(|ins| {
                ins.dst.iter().chain(ins.srcs.iter().filter_map(|s| match s {
                    Operand::Var(v) => Some(v),
                    Operand::Lit(_) => None,
                }))
            }))
            .chain(std::iter::once(&prog.return_var));
        for name in names {
            let next = index.len();
            index.entry(name.as_str()).or_insert(next);
        }
        let vars = index.len();
        let mut entry = vec![false; vars];
        for p in &prog.params {
            entry[index[p.as_str()]] = true;
        }
        for c in &prog.consts {
            entry[index[c.name.as_str()]] = true;
        }
        // IN sets for nodes 0..=n (n is the exit); None = not yet reached.
        let mut ins_state: Vec<Option<Vec<bool>>> = vec![None; n + 1];
        ins_state[0] = Some(entry);
        let mut changed = true;
        while changed {
            changed = false;
            for i in 0..n {
                let Some(state) = ins_state[i].clone() else { continue };
                let mut out = state;
                if let Some(d) = &prog.instrs[i].dst {
                    out[index[d.as_str()]] = true;
                }
                for s in self.successors(i) {
                    if s > n {
                        continue;
                    }
                    let merged = match &ins_state[s] {
                        None => out.clone(),
                        Some(cur) => cur.iter().zip(&out).map(|(a, b)| *a && *b).collect(),
                    };
                    if ins_state[s].as_ref() != Some(&merged) {
                        ins_state[s] = Some(merged);
                        changed = true;
                    }
                }
            }
        }
        let ret_index = index[prog.return_var.as_str()];
        for (i, ins) in prog.instrs.iter().enumerate() {
            let Some(state) = &ins_state[i] else { continue };
            for s in &ins.srcs {
                if let Operand::Var(v) = s {
                    if !state[index[v.as_str()]] {
                        self.report(
                            DiagnosticKind::UseBeforeAssign,
                            Some(ins.id),
                            format!("`{v}` may be used before assignment"),
                        );
                    }
                }
            }
            if ins.op == Opcode::Ret && ins.srcs.is_empty() && !state[ret_index] {
                self.report(
                    DiagnosticKind::UnassignedReturn,
                    Some(ins.id),
                    format!("`{}` may be unassigned at return", prog.return_var),
                );
            }
        }
        if let Some(state) = &ins_state[n] {
            if !state[ret_index] {
                self.report(
                    DiagnosticKind::UnassignedReturn,
                    None,
                    format!("`{}` may be unassigned at the end of the body", prog.return_var),
                );
            }
        }
    }
}
