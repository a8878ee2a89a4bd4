use std::collections::{BTreeMap, HashMap};

use psop_mpfloat::MpFloat;

use super::{validate, BarrierSet, ConstDecl, ConstValue, Kind, Opcode, Operand, Pred, TacError, TacInstr, TacProgram};

/// Parses and validates a program.
pub fn parse_program(text: &str) -> Result<TacProgram, TacError> {
    parse_annotated(text).map(|(p, _)| p)
}

/// Parses and validates a program, also returning the barrier set encoded by
/// `reducePrec` / `resumePrec` / `computeErr` annotations.
pub fn parse_annotated(text: &str) -> Result<(TacProgram, BarrierSet), TacError> {
    let (prog, barriers) = parse_unchecked(text)?;
    let diags = validate(&prog);
    if diags.is_empty() {
        Ok((prog, barriers))
    } else {
        Err(TacError::Invalid(diags))
    }
}

/// Parses without semantic validation. Only syntax errors are reported.
pub fn parse_unchecked(text: &str) -> Result<(TacProgram, BarrierSet), TacError> {
    Parser::default().run(text)
}

#[derive(Default)]
struct Parser {
    name: Option<String>,
    params: Vec<String>,
    return_var: String,
    consts: Vec<ConstDecl>,
    instrs: Vec<TacInstr>,
    labels: BTreeMap<String, usize>,
    /// Instructions written as `a = b`, whose move kind follows `b`.
    sugar_moves: Vec<usize>,
    barriers: BarrierSet,
    pending_barrier: Option<(usize, usize)>,
}

fn syntax(line: usize, message: impl Into<String>) -> TacError {
    TacError::Syntax {
        line,
        message: message.into(),
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !matches!(s, "inf" | "nan")
}

/// Integer literal: optional sign, decimal or `0x` hex digits.
pub(crate) fn parse_int_literal(s: &str) -> Option<i64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let magnitude = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).ok()?
    } else {
        if body.is_empty() || !body.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        body.parse::<u64>().ok()?
    };
    if neg {
        0i64.checked_sub_unsigned(magnitude)
    } else {
        Some(magnitude as i64)
    }
}

/// Float literal at the given format: hex float, decimal, `inf`, `nan`, or
/// an integer literal converted exactly before rounding.
pub(crate) fn parse_float_literal(s: &str, fmt: psop_mpfloat::Format) -> Option<MpFloat> {
    if let Some(v) = parse_int_literal(s) {
        return Some(MpFloat::from_i64(v, fmt));
    }
    MpFloat::parse_literal(s, fmt).ok()
}

fn is_literal(s: &str) -> bool {
    parse_int_literal(s).is_some() || parse_float_literal(s, psop_mpfloat::Format::BINARY64).is_some()
}

fn operand(line: usize, s: &str) -> Result<Operand, TacError> {
    let s = s.trim();
    if is_ident(s) {
        Ok(Operand::Var(s.to_string()))
    } else if is_literal(s) {
        Ok(Operand::Lit(s.to_string()))
    } else {
        Err(syntax(line, format!("bad operand `{s}`")))
    }
}

fn operands(line: usize, s: &str) -> Result<Vec<Operand>, TacError> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|part| operand(line, part)).collect()
}

fn parse_word(line: usize, s: &str) -> Result<u32, TacError> {
    let v = parse_int_literal(s.trim()).ok_or_else(|| syntax(line, format!("bad word `{s}`")))?;
    u32::try_from(v).map_err(|_| syntax(line, format!("word `{s}` exceeds 32 bits")))
}

/// Parses `(&x, 12)` style annotation arguments and returns the trailing id.
fn annotation_id(line: usize, args: &str) -> Result<usize, TacError> {
    let inner = args
        .trim()
        .strip_prefix('(')
        .and_then(|a| a.strip_suffix(')'))
        .ok_or_else(|| syntax(line, "malformed annotation"))?;
    let last = inner.rsplit(',').next().unwrap_or("").trim();
    last.parse()
        .map_err(|_| syntax(line, format!("bad annotation id `{last}`")))
}

impl Parser {
    fn run(mut self, text: &str) -> Result<(TacProgram, BarrierSet), TacError> {
        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            let content = content.strip_suffix(';').unwrap_or(content).trim();
            if content.is_empty() {
                continue;
            }
            self.line(line, content)?;
        }
        if let Some((_, line)) = self.pending_barrier {
            return Err(syntax(line, "reducePrec without a following instruction"));
        }
        let name = self
            .name
            .ok_or_else(|| syntax(text.lines().count().max(1), "missing `func` header"))?;
        let mut prog = TacProgram {
            name,
            params: self.params,
            consts: self.consts,
            instrs: self.instrs,
            return_var: self.return_var,
            labels: self.labels,
        };
        resolve_moves(&mut prog, &self.sugar_moves);
        Ok((prog, self.barriers))
    }

    fn line(&mut self, line: usize, content: &str) -> Result<(), TacError> {
        if let Some(rest) = content.strip_prefix("const ") {
            return self.constant(line, rest);
        }
        if let Some(rest) = content.strip_prefix("func ") {
            return self.header(line, rest);
        }
        if self.name.is_none() {
            return Err(syntax(line, "instruction before `func` header"));
        }
        if let Some(args) = content.strip_prefix("reducePrec") {
            let id = annotation_id(line, args)?;
            if id != self.instrs.len() {
                return Err(syntax(
                    line,
                    format!("reducePrec id {id} does not match instruction {}", self.instrs.len()),
                ));
            }
            self.pending_barrier = Some((id, line));
            return Ok(());
        }
        for call in ["resumePrec", "computeErr"] {
            if let Some(args) = content.strip_prefix(call) {
                let id = annotation_id(line, args)?;
                if self.instrs.len().checked_sub(1) != Some(id) {
                    return Err(syntax(line, format!("{call} id {id} does not follow its instruction")));
                }
                return Ok(());
            }
        }
        if let Some(label) = content.strip_suffix(':') {
            let label = label.trim();
            if !is_ident(label) {
                return Err(syntax(line, format!("bad label `{label}`")));
            }
            if self.labels.insert(label.to_string(), self.instrs.len()).is_some() {
                return Err(syntax(line, format!("duplicate label `{label}`")));
            }
            return Ok(());
        }
        self.instruction(line, content)
    }

    fn constant(&mut self, line: usize, rest: &str) -> Result<(), TacError> {
        let (name, value) = rest
            .split_once('=')
            .ok_or_else(|| syntax(line, "expected `const name = value`"))?;
        let name = name.trim();
        if !is_ident(name) {
            return Err(syntax(line, format!("bad constant name `{name}`")));
        }
        if self.consts.iter().any(|c| c.name == name) {
            return Err(syntax(line, format!("duplicate constant `{name}`")));
        }
        let value = value.trim();
        let value = if value.starts_with('{') {
            let inner = value.trim_start_matches('{').trim_end_matches('}');
            let (lo, hi) = inner
                .split_once(',')
                .ok_or_else(|| syntax(line, "word pair needs `{lo, hi}`"))?;
            ConstValue::Words {
                lo: parse_word(line, lo)?,
                hi: parse_word(line, hi)?,
            }
        } else {
            if parse_float_literal(value, psop_mpfloat::Format::BINARY64).is_none() {
                return Err(syntax(line, format!("bad float literal `{value}`")));
            }
            ConstValue::Literal(value.to_string())
        };
        self.consts.push(ConstDecl {
            name: name.to_string(),
            value,
        });
        Ok(())
    }

    fn header(&mut self, line: usize, rest: &str) -> Result<(), TacError> {
        if self.name.is_some() {
            return Err(syntax(line, "only one function per program"));
        }
        let (sig, ret) = rest
            .split_once("->")
            .ok_or_else(|| syntax(line, "expected `func name(params) -> var`"))?;
        let (name, params) = sig
            .trim()
            .strip_suffix(')')
            .and_then(|s| s.split_once('('))
            .ok_or_else(|| syntax(line, "expected `name(params)`"))?;
        let name = name.trim();
        let ret = ret.trim();
        if !is_ident(name) || !is_ident(ret) {
            return Err(syntax(line, "bad function or return name"));
        }
        for p in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if !is_ident(p) {
                return Err(syntax(line, format!("bad parameter `{p}`")));
            }
            if self.params.iter().any(|q| q == p) {
                return Err(syntax(line, format!("duplicate parameter `{p}`")));
            }
            self.params.push(p.to_string());
        }
        self.name = Some(name.to_string());
        self.return_var = ret.to_string();
        Ok(())
    }

    fn push(&mut self, line: usize, op: Opcode, dst: Option<String>, srcs: Vec<Operand>, label: Option<String>) {
        let id = self.instrs.len();
        if let Some((pending, _)) = self.pending_barrier.take() {
            debug_assert_eq!(pending, id);
            self.barriers.insert(id);
        }
        self.instrs.push(TacInstr {
            id,
            op,
            dst,
            srcs,
            label,
            srcloc: format!("{}:{}", self.name.as_deref().unwrap_or(""), line),
        });
    }

    fn instruction(&mut self, line: usize, content: &str) -> Result<(), TacError> {
        let (head, rest) = split_word(content);
        match head {
            "ret" => {
                let srcs = operands(line, rest)?;
                self.push(line, Opcode::Ret, None, srcs, None);
                return Ok(());
            }
            "jmp" => {
                let label = rest.trim();
                if !is_ident(label) {
                    return Err(syntax(line, "jmp needs a label"));
                }
                self.push(line, Opcode::Jmp, None, Vec::new(), Some(label.to_string()));
                return Ok(());
            }
            "br" => {
                let (cond, label) = rest
                    .rsplit_once(',')
                    .ok_or_else(|| syntax(line, "expected `br cond, label`"))?;
                let label = label.trim();
                if !is_ident(label) {
                    return Err(syntax(line, "br needs a label"));
                }
                let srcs = operands(line, cond)?;
                self.push(line, Opcode::Br, None, srcs, Some(label.to_string()));
                return Ok(());
            }
            _ => {}
        }
        let (dst, rhs) = content
            .split_once('=')
            .ok_or_else(|| syntax(line, format!("unrecognized statement `{content}`")))?;
        let dst = dst.trim();
        if !is_ident(dst) {
            return Err(syntax(line, format!("bad destination `{dst}`")));
        }
        let rhs = rhs.trim();
        let (word, rest) = split_word(rhs);
        if word == "icmp" {
            let (pred, args) = split_word(rest);
            let pred = Pred::parse(pred).ok_or_else(|| syntax(line, format!("bad predicate `{pred}`")))?;
            let srcs = operands(line, args)?;
            self.push(line, Opcode::ICmp(pred), Some(dst.to_string()), srcs, None);
            return Ok(());
        }
        if let Some(op) = Opcode::from_mnemonic(word) {
            if op.result_kind().is_none() {
                return Err(syntax(line, format!("`{word}` does not produce a value")));
            }
            let srcs = operands(line, rest)?;
            self.push(line, op, Some(dst.to_string()), srcs, None);
            return Ok(());
        }
        let tokens: Vec<&str> = rhs.split_whitespace().collect();
        match tokens.as_slice() {
            [a, sym, b] if sym.len() == 1 => {
                let op = match *sym {
                    "+" => Opcode::FAdd,
                    "-" => Opcode::FSub,
                    "*" => Opcode::FMul,
                    "/" => Opcode::FDiv,
                    _ => return Err(syntax(line, format!("unknown operator `{sym}`"))),
                };
                let srcs = vec![operand(line, a)?, operand(line, b)?];
                self.push(line, op, Some(dst.to_string()), srcs, None);
            }
            [a] => {
                let src = operand(line, a)?;
                let op = match &src {
                    Operand::Lit(text) if parse_int_literal(text).is_some() => Opcode::IConst,
                    Operand::Lit(_) => Opcode::FConst,
                    Operand::Var(_) => {
                        self.sugar_moves.push(self.instrs.len());
                        Opcode::FMov
                    }
                };
                self.push(line, op, Some(dst.to_string()), vec![src], None);
            }
            _ => return Err(syntax(line, format!("unrecognized expression `{rhs}`"))),
        }
        Ok(())
    }
}

fn split_word(s: &str) -> (&str, &str) {
    let s = s.trim();
    match s.find(char::is_whitespace) {
        Some(i) => (&s[..i], s[i..].trim()),
        None => (s, ""),
    }
}

/// Gives each `a = b` move the kind of `b`, iterating until stable.
fn resolve_moves(prog: &mut TacProgram, moves: &[usize]) {
    if moves.is_empty() {
        return;
    }
    let mut kinds: HashMap<String, Kind> = HashMap::new();
    for p in &prog.params {
        kinds.insert(p.clone(), Kind::Float);
    }
    for c in &prog.consts {
        kinds.insert(c.name.clone(), Kind::Float);
    }
    for ins in &prog.instrs {
        if moves.contains(&ins.id) {
            continue;
        }
        if let (Some(dst), Some(kind)) = (&ins.dst, ins.op.result_kind()) {
            kinds.entry(dst.clone()).or_insert(kind);
        }
    }
    loop {
        let mut changed = false;
        for &i in moves {
            let ins = &mut prog.instrs[i];
            let Some(src) = ins.srcs[0].var() else { continue };
            let Some(&kind) = kinds.get(src) else { continue };
            let op = if kind == Kind::Int { Opcode::IMov } else { Opcode::FMov };
            if ins.op != op {
                ins.op = op;
                changed = true;
            }
            let dst = ins.dst.clone().expect("move has a destination");
            if kinds.insert(dst, kind) != Some(kind) {
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}
