//! Dual-precision interpreter for [`TacProgram`]s.
//!
//! Each float register holds a [`DualValue`]: the original lane at the
//! native precision (binary64 exponent range) and a shadow lane at a higher
//! precision with an unbounded exponent. Control flow follows the original
//! lane only, so both lanes always take the same path.
//!
//! After every float assignment the engine reports the relative error of the
//! original lane against the shadow lane to a [`SampleSink`].

use std::fmt::Write as _;
use std::sync::Arc;

use psop_mpfloat::{relative_error, ExponentRange, Format, MpFloat};
use rayon::prelude::*;
use thiserror::Error;

use crate::tac::{
    parse::{parse_float_literal, parse_int_literal},
    BarrierSet, InstrId, Kind, Opcode, Operand, TacProgram,
};

pub const DEFAULT_ORIGINAL_PRECISION: u32 = 53;
pub const DEFAULT_SHADOW_PRECISION: u32 = 120;
pub const DEFAULT_ERROR_PRECISION: u32 = 128;
pub const DEFAULT_MAX_STEPS: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("step budget of {0} instructions exceeded")]
    StepBudgetExceeded(u64),
    #[error("type mismatch at instruction {instr}: {message}")]
    TypeMismatch { instr: InstrId, message: String },
    #[error("register `{var}` read before assignment at instruction {instr}")]
    Unassigned { instr: InstrId, var: String },
    #[error("expected {expected} input(s), got {got}")]
    InputArity { expected: usize, got: usize },
    #[error("non-finite input {0}")]
    NonFiniteInput(usize),
    #[error("value at instruction {instr} has no binary64 encoding")]
    NotRepresentable { instr: InstrId },
    #[error("bad literal `{0}`")]
    BadLiteral(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EngineConfig {
    /// Native precision; values use the binary64 exponent range.
    pub p_orig: u32,
    /// Shadow precision; unbounded exponent.
    pub p_shadow: u32,
    /// Precision of relative-error computations.
    pub error_precision: u32,
    pub max_steps: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            p_orig: DEFAULT_ORIGINAL_PRECISION,
            p_shadow: DEFAULT_SHADOW_PRECISION,
            error_precision: DEFAULT_ERROR_PRECISION,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(2..=53).contains(&self.p_orig) {
            return Err(EngineError::Config(format!(
                "native precision {} outside 2..=53",
                self.p_orig
            )));
        }
        if self.p_shadow < self.p_orig {
            return Err(EngineError::Config(format!(
                "shadow precision {} below native precision {}",
                self.p_shadow, self.p_orig
            )));
        }
        Ok(())
    }

    pub fn original_format(&self) -> Format {
        Format::with_range(self.p_orig, ExponentRange::Binary64)
    }

    pub fn shadow_format(&self) -> Format {
        Format::new(self.p_shadow)
    }
}

/// A float register: original lane, optional shadow lane, and whether the
/// shadow has been left behind by a partial bit write.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DualValue {
    pub original: MpFloat,
    pub shadow: Option<MpFloat>,
    pub stale: bool,
}

impl DualValue {
    /// Both lanes equal to `original`.
    pub fn exact(original: MpFloat, p_shadow: u32) -> Self {
        let shadow = Some(original.extend(p_shadow.max(original.precision())));
        DualValue {
            original,
            shadow,
            stale: false,
        }
    }

    /// Shadow lane, or the extended original when there is none.
    fn shadow_or_original(&self, p_shadow: u32) -> MpFloat {
        match &self.shadow {
            Some(s) => s.clone(),
            None => self.original.extend(p_shadow.max(self.original.precision())),
        }
    }

    /// Relative error of the original lane with the shadow as exact value.
    pub fn relative_error(&self, precision: u32) -> Option<MpFloat> {
        self.shadow
            .as_ref()
            .map(|s| relative_error(s, &self.original, precision))
    }
}

/// Copies the shadow lane into the original lane (rounded to native
/// precision).
pub fn sync_down(v: &DualValue, cfg: &EngineConfig) -> DualValue {
    match &v.shadow {
        Some(s) => DualValue {
            original: s.round_to(cfg.original_format()),
            shadow: v.shadow.clone(),
            stale: false,
        },
        None => v.clone(),
    }
}

/// Copies the original lane into the shadow lane.
pub fn sync_up(v: &DualValue, cfg: &EngineConfig) -> DualValue {
    DualValue::exact(v.original.clone(), cfg.p_shadow)
}

/// Receiver of per-assignment error samples.
pub trait SampleSink {
    fn sample(&mut self, run: usize, instr: InstrId, dst: &Arc<str>, value: &DualValue, rel_err: MpFloat);
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErrorSample {
    pub instr: InstrId,
    pub run: usize,
    /// Relative error; `+inf` when the shadow is zero and the original is not.
    pub rel_err: MpFloat,
    pub dst: Arc<str>,
}

impl SampleSink for Vec<ErrorSample> {
    fn sample(&mut self, run: usize, instr: InstrId, dst: &Arc<str>, _: &DualValue, rel_err: MpFloat) {
        self.push(ErrorSample {
            instr,
            run,
            rel_err,
            dst: dst.clone(),
        });
    }
}

/// Discards samples.
pub struct NoSamples;

impl SampleSink for NoSamples {
    fn sample(&mut self, _: usize, _: InstrId, _: &Arc<str>, _: &DualValue, _: MpFloat) {}
}

/// Renders samples in the four-field trace layout.
pub struct TraceDump {
    pub text: String,
    p_shadow: u32,
}

impl TraceDump {
    pub fn new(cfg: &EngineConfig) -> Self {
        TraceDump {
            text: String::new(),
            p_shadow: cfg.p_shadow,
        }
    }
}

fn trace_field(v: &MpFloat, of: u32) -> String {
    let digits = if v.is_finite() && !v.is_zero() {
        v.to_scientific(15).to_trace_string()
    } else {
        v.to_decimal_string(15)
    };
    format!("{digits}, {}/{of} bit", v.significant_bits())
}

impl SampleSink for TraceDump {
    fn sample(&mut self, run: usize, instr: InstrId, dst: &Arc<str>, value: &DualValue, rel_err: MpFloat) {
        let Some(shadow) = &value.shadow else { return };
        let p = self.p_shadow.max(shadow.precision());
        let abs = shadow.sub(&value.original, p);
        let t = &mut self.text;
        let _ = writeln!(t, "{dst}_tag{instr} (run {run})");
        let _ = writeln!(t, "ORIGINAL:       {}", trace_field(&value.original, p));
        let _ = writeln!(t, "SHADOW VALUE:   {}", trace_field(shadow, p));
        let _ = writeln!(t, "ABSOLUTE ERROR: {}", trace_field(&abs, p));
        let _ = writeln!(t, "RELATIVE ERROR: {}", trace_field(&rel_err, p));
    }
}

/// Result of one run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunTrace {
    pub program: String,
    pub run: usize,
    pub output: DualValue,
    pub samples: Vec<ErrorSample>,
    pub steps: u64,
    /// Dynamic executions per static instruction.
    pub exec_counts: Vec<u64>,
    /// Outcome of every executed branch, in execution order.
    pub branches: Vec<bool>,
}

/// Outcome of a run without stored samples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunSummary {
    pub output: DualValue,
    pub steps: u64,
    pub exec_counts: Vec<u64>,
    pub branches: Vec<bool>,
}

#[derive(Clone, Debug)]
enum Src {
    Reg(usize),
    Float(DualValue),
    Int(i64),
}

#[derive(Clone, Debug)]
struct Code {
    op: Opcode,
    dst: usize,
    srcs: Vec<Src>,
    target: usize,
}

#[derive(Clone, Debug)]
enum Value {
    Unset,
    F(DualValue),
    I(i64),
}

/// A program prepared for repeated execution under one configuration.
#[derive(Clone, Debug)]
pub struct Engine {
    cfg: EngineConfig,
    name: String,
    names: Vec<Arc<str>>,
    params: Vec<usize>,
    consts: Vec<(usize, DualValue)>,
    code: Vec<Code>,
    ret: usize,
}

const NO_REG: usize = usize::MAX;

impl Engine {
    /// Resolves registers, labels and literals. Literals are rounded to the
    /// native precision once, here.
    pub fn new(prog: &TacProgram, cfg: &EngineConfig) -> Result<Engine, EngineError> {
        cfg.validate()?;
        let orig = cfg.original_format();
        let mut names: Vec<Arc<str>> = Vec::new();
        let mut index = std::collections::HashMap::<String, usize>::new();
        let mut reg = |name: &str, names: &mut Vec<Arc<str>>| -> usize {
            *index.entry(name.to_string()).or_insert_with(|| {
                names.push(Arc::from(name));
                names.len() - 1
            })
        };
        let params = prog.params.iter().map(|p| reg(p, &mut names)).collect();
        let mut consts = Vec::new();
        for c in &prog.consts {
            let value = c
                .value
                .value(orig)
                .ok_or_else(|| EngineError::BadLiteral(c.name.clone()))?;
            consts.push((reg(&c.name, &mut names), DualValue::exact(value, cfg.p_shadow)));
        }
        let float_lit = |text: &str| -> Result<Src, EngineError> {
            let v = parse_float_literal(text, orig).ok_or_else(|| EngineError::BadLiteral(text.into()))?;
            Ok(Src::Float(DualValue::exact(v, cfg.p_shadow)))
        };
        let int_lit = |text: &str| -> Result<Src, EngineError> {
            parse_int_literal(text)
                .map(Src::Int)
                .ok_or_else(|| EngineError::BadLiteral(text.into()))
        };
        let mut code = Vec::with_capacity(prog.instrs.len());
        for ins in &prog.instrs {
            let kinds: Vec<Kind> = match ins.op.operand_kinds() {
                Some(k) => k.to_vec(),
                None if matches!(ins.op, Opcode::ICmp(_)) => {
                    let var_kind = ins.srcs.iter().find_map(|s| {
                        let v = s.var()?;
                        prog.instrs
                            .iter()
                            .find(|i| i.dst.as_deref() == Some(v))
                            .and_then(|i| i.op.result_kind())
                            .or_else(|| {
                                (prog.params.iter().any(|p| p == v) || prog.consts.iter().any(|c| c.name == v))
                                    .then_some(Kind::Float)
                            })
                    });
                    let lit_kind = ins.srcs.iter().all(|s| match s {
                        Operand::Lit(t) => parse_int_literal(t).is_some(),
                        Operand::Var(_) => true,
                    });
                    let k = var_kind.unwrap_or(if lit_kind { Kind::Int } else { Kind::Float });
                    vec![k; ins.srcs.len()]
                }
                None => vec![Kind::Float; ins.srcs.len()],
            };
            let mut srcs = Vec::with_capacity(ins.srcs.len());
            for (s, k) in ins.srcs.iter().zip(kinds.iter().chain(std::iter::repeat(&Kind::Float))) {
                srcs.push(match s {
                    Operand::Var(v) => Src::Reg(reg(v, &mut names)),
                    Operand::Lit(t) if *k == Kind::Int => int_lit(t)?,
                    Operand::Lit(t) => float_lit(t)?,
                });
            }
            let dst = match &ins.dst {
                Some(d) => reg(d, &mut names),
                None => NO_REG,
            };
            let target = ins
                .label
                .as_ref()
                .map(|l| {
                    prog.labels.get(l).copied().ok_or_else(|| EngineError::TypeMismatch {
                        instr: ins.id,
                        message: format!("undefined label `{l}`"),
                    })
                })
                .transpose()?
                .unwrap_or(0);
            code.push(Code {
                op: ins.op,
                dst,
                srcs,
                target,
            });
        }
        let ret = reg(&prog.return_var, &mut names);
        Ok(Engine {
            cfg: *cfg,
            name: prog.name.clone(),
            names,
            params,
            consts,
            code,
            ret,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn program_name(&self) -> &str {
        &self.name
    }

    pub fn instr_count(&self) -> usize {
        self.code.len()
    }

    /// Executes one run, streaming error samples to `sink`.
    pub fn run(
        &self,
        input: &[MpFloat],
        barriers: &BarrierSet,
        run: usize,
        sink: &mut dyn SampleSink,
    ) -> Result<RunSummary, EngineError> {
        if input.len() != self.params.len() {
            return Err(EngineError::InputArity {
                expected: self.params.len(),
                got: input.len(),
            });
        }
        let cfg = &self.cfg;
        let orig = cfg.original_format();
        let shadow_fmt = cfg.shadow_format();
        let barrier: Vec<bool> = (0..self.code.len()).map(|i| barriers.contains(i)).collect();
        let mut regs = vec![Value::Unset; self.names.len()];
        for (i, (&r, x)) in self.params.iter().zip(input).enumerate() {
            if !x.is_finite() {
                return Err(EngineError::NonFiniteInput(i));
            }
            regs[r] = Value::F(DualValue::exact(x.round_to(orig), cfg.p_shadow));
        }
        for (r, v) in &self.consts {
            regs[*r] = Value::F(v.clone());
        }
        let mut counts = vec![0u64; self.code.len()];
        let mut branches = Vec::new();
        let mut steps = 0u64;
        let mut pc = 0usize;
        let mut ret_reg = self.ret;

        while pc < self.code.len() {
            steps += 1;
            if steps > cfg.max_steps {
                return Err(EngineError::StepBudgetExceeded(cfg.max_steps));
            }
            counts[pc] += 1;
            let ins = &self.code[pc];
            let id = pc;
            let mut next = pc + 1;

            let float = |k: usize| -> Result<&DualValue, EngineError> {
                match &ins.srcs[k] {
                    Src::Float(v) => Ok(v),
                    Src::Reg(r) => match &regs[*r] {
                        Value::F(v) => Ok(v),
                        Value::I(_) => Err(EngineError::TypeMismatch {
                            instr: id,
                            message: format!("`{}` is int", self.names[*r]),
                        }),
                        Value::Unset => Err(EngineError::Unassigned {
                            instr: id,
                            var: self.names[*r].to_string(),
                        }),
                    },
                    Src::Int(_) => Err(EngineError::TypeMismatch {
                        instr: id,
                        message: "int literal in float position".into(),
                    }),
                }
            };
            let int = |k: usize| -> Result<i64, EngineError> {
                match &ins.srcs[k] {
                    Src::Int(v) => Ok(*v),
                    Src::Reg(r) => match &regs[*r] {
                        Value::I(v) => Ok(*v),
                        Value::F(_) => Err(EngineError::TypeMismatch {
                            instr: id,
                            message: format!("`{}` is float", self.names[*r]),
                        }),
                        Value::Unset => Err(EngineError::Unassigned {
                            instr: id,
                            var: self.names[*r].to_string(),
                        }),
                    },
                    Src::Float(_) => Err(EngineError::TypeMismatch {
                        instr: id,
                        message: "float literal in int position".into(),
                    }),
                }
            };
            let bits = |v: &DualValue| -> Result<u64, EngineError> {
                v.original
                    .to_binary64_bits()
                    .map_err(|_| EngineError::NotRepresentable { instr: id })
            };

            let result: Option<Value> = match ins.op {
                op if op.is_float_arith() || matches!(op, Opcode::FMov | Opcode::FConst) => {
                    let a = float(0)?;
                    let b = if ins.srcs.len() > 1 { Some(float(1)?) } else { None };
                    let original = apply(op, &a.original, b.map(|b| &b.original), orig);
                    let (shadow, stale) = if matches!(op, Opcode::FMov | Opcode::FConst) && !barrier[id] {
                        (a.shadow.clone(), a.stale)
                    } else if barrier[id] {
                        let sa = a.shadow_or_original(cfg.p_shadow).round_to(orig);
                        let sb = b.map(|b| b.shadow_or_original(cfg.p_shadow).round_to(orig));
                        let r = apply(op, &sa, sb.as_ref(), orig);
                        (Some(r.extend(cfg.p_shadow)), false)
                    } else {
                        let sa = a.shadow_or_original(cfg.p_shadow);
                        let sb = b.map(|b| b.shadow_or_original(cfg.p_shadow));
                        (Some(apply(op, &sa, sb.as_ref(), shadow_fmt)), false)
                    };
                    Some(Value::F(DualValue {
                        original,
                        shadow,
                        stale,
                    }))
                }
                Opcode::GetHi => Some(Value::I(i64::from((bits(float(0)?)? >> 32) as u32 as i32))),
                Opcode::GetLo => Some(Value::I(i64::from(bits(float(0)?)? as u32 as i32))),
                Opcode::MakeF => {
                    let hi = int(0)? as u32;
                    let lo = int(1)? as u32;
                    let v = MpFloat::from_binary64_words(lo, hi).round_to(orig);
                    Some(Value::F(DualValue::exact(v, cfg.p_shadow)))
                }
                Opcode::SetHi | Opcode::SetLo => {
                    let f = float(0)?;
                    let word = int(1)? as u32;
                    let set = |b: u64| -> u64 {
                        if ins.op == Opcode::SetHi {
                            (b & 0xFFFF_FFFF) | (u64::from(word) << 32)
                        } else {
                            (b & 0xFFFF_FFFF_0000_0000) | u64::from(word)
                        }
                    };
                    let original = MpFloat::from_binary64_bits(set(bits(f)?)).round_to(orig);
                    // The shadow goes stale only when it is held in a wider
                    // format than the word being written.
                    if barrier[id] || cfg.p_shadow == cfg.p_orig {
                        let s = f.shadow_or_original(cfg.p_shadow).round_to(orig);
                        let sb = s
                            .to_binary64_bits()
                            .map_err(|_| EngineError::NotRepresentable { instr: id })?;
                        let shadow = MpFloat::from_binary64_bits(set(sb)).round_to(orig);
                        Some(Value::F(DualValue {
                            original,
                            shadow: Some(shadow.extend(cfg.p_shadow)),
                            stale: false,
                        }))
                    } else {
                        Some(Value::F(DualValue {
                            original,
                            shadow: f.shadow.clone(),
                            stale: true,
                        }))
                    }
                }
                Opcode::IConst | Opcode::IMov => Some(Value::I(int(0)?)),
                Opcode::IAdd => Some(Value::I(int(0)?.wrapping_add(int(1)?))),
                Opcode::ISub => Some(Value::I(int(0)?.wrapping_sub(int(1)?))),
                Opcode::IAnd => Some(Value::I(int(0)? & int(1)?)),
                Opcode::IOr => Some(Value::I(int(0)? | int(1)?)),
                Opcode::IXor => Some(Value::I(int(0)? ^ int(1)?)),
                Opcode::IShl => Some(Value::I(int(0)?.wrapping_shl((int(1)? & 63) as u32))),
                Opcode::IShr => Some(Value::I(int(0)?.wrapping_shr((int(1)? & 63) as u32))),
                Opcode::ICmp(pred) => {
                    let holds = match (&ins.srcs[0], &ins.srcs[1]) {
                        (a, b) if is_int(a, &regs) && is_int(b, &regs) => pred.holds(Some(int(0)?.cmp(&int(1)?))),
                        _ => pred.holds(float(0)?.original.compare(&float(1)?.original)),
                    };
                    Some(Value::I(i64::from(holds)))
                }
                Opcode::Br => {
                    let taken = int(0)? != 0;
                    branches.push(taken);
                    if taken {
                        next = ins.target;
                    }
                    None
                }
                Opcode::Jmp => {
                    next = ins.target;
                    None
                }
                Opcode::Ret => {
                    if let Some(Src::Reg(r)) = ins.srcs.first() {
                        ret_reg = *r;
                    } else if let Some(Src::Float(v)) = ins.srcs.first() {
                        let out = v.clone();
                        return Ok(RunSummary {
                            output: out,
                            steps,
                            exec_counts: counts,
                            branches,
                        });
                    }
                    next = self.code.len();
                    None
                }
                other => unreachable!("opcode {other:?} handled above"),
            };
            if let Some(value) = result {
                if let Value::F(v) = &value {
                    if let Some(err) = v.relative_error(cfg.error_precision) {
                        sink.sample(run, id, &self.names[ins.dst], v, err);
                    }
                }
                regs[ins.dst] = value;
            }
            pc = next;
        }
        match &regs[ret_reg] {
            Value::F(v) => Ok(RunSummary {
                output: v.clone(),
                steps,
                exec_counts: counts,
                branches,
            }),
            Value::I(_) => Err(EngineError::TypeMismatch {
                instr: self.code.len(),
                message: "integer return value".into(),
            }),
            Value::Unset => Err(EngineError::Unassigned {
                instr: self.code.len(),
                var: self.names[ret_reg].to_string(),
            }),
        }
    }

    /// Executes one run and keeps every sample.
    pub fn trace(&self, input: &[MpFloat], barriers: &BarrierSet, run: usize) -> Result<RunTrace, EngineError> {
        let mut samples = Vec::new();
        let s = self.run(input, barriers, run, &mut samples)?;
        Ok(RunTrace {
            program: self.name.clone(),
            run,
            output: s.output,
            samples,
            steps: s.steps,
            exec_counts: s.exec_counts,
            branches: s.branches,
        })
    }
}

fn is_int(src: &Src, regs: &[Value]) -> bool {
    match src {
        Src::Int(_) => true,
        Src::Float(_) => false,
        Src::Reg(r) => matches!(regs[*r], Value::I(_)),
    }
}

/// Float operation at `fmt`.
fn apply(op: Opcode, a: &MpFloat, b: Option<&MpFloat>, fmt: Format) -> MpFloat {
    let b = || b.expect("binary operand");
    match op {
        Opcode::FAdd => a.add(b(), fmt),
        Opcode::FSub => a.sub(b(), fmt),
        Opcode::FMul => a.mul(b(), fmt),
        Opcode::FDiv => a.div(b(), fmt),
        Opcode::FSqrt => a.sqrt(fmt),
        Opcode::FNeg => a.neg().round_to(fmt),
        Opcode::FAbs => a.abs().round_to(fmt),
        Opcode::FFloor => a.floor().round_to(fmt),
        Opcode::FMov | Opcode::FConst => a.round_to(fmt),
        other => unreachable!("{other:?} is not a float operation"),
    }
}

/// Executes `prog` once on `input`.
pub fn execute(
    prog: &TacProgram,
    input: &[MpFloat],
    cfg: &EngineConfig,
    barriers: &BarrierSet,
) -> Result<RunTrace, EngineError> {
    Engine::new(prog, cfg)?.trace(input, barriers, 0)
}

/// Executes `prog` on every input tuple. Results are in input order; a
/// failing run does not stop the others.
pub fn run_batch(
    prog: &TacProgram,
    inputs: &[Vec<MpFloat>],
    cfg: &EngineConfig,
    barriers: &BarrierSet,
) -> Result<Vec<Result<RunTrace, EngineError>>, EngineError> {
    let engine = Engine::new(prog, cfg)?;
    Ok(inputs
        .par_iter()
        .enumerate()
        .map(|(i, input)| engine.trace(input, barriers, i))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tac::parse_program;

    const FRAGMENT: &str = "const log2e = 0x1.71547652b82fep0\n\
                            const three51 = 0x1.8p52\n\
                            func f(x) -> t10\n\
                            t8 = x * log2e\n\
                            t9 = t8 + three51\n\
                            y = t9\n\
                            t10 = y - three51\n";

    fn rel(trace: &RunTrace, id: InstrId) -> String {
        let s = trace.samples.iter().find(|s| s.instr == id).unwrap();
        s.rel_err.to_scientific(15).to_trace_string()
    }

    #[test]
    fn fragment_reproduces_trace_errors() {
        let p = parse_program(FRAGMENT).unwrap();
        let t = execute(
            &p,
            &[MpFloat::from_f64(0.45)],
            &EngineConfig::default(),
            &BarrierSet::new(),
        )
        .unwrap();
        assert_eq!(rel(&t, 0), "5.88737542944107 * 10^-17");
        assert_eq!(rel(&t, 1), "5.19269415022400 * 10^-17");
        assert_eq!(rel(&t, 2), "5.19269415022400 * 10^-17");
        assert_eq!(rel(&t, 3), "5.40327067910990 * 10^-1");
        assert_eq!(t.output.original.to_f64(), 1.0);
    }

    #[test]
    fn barrier_on_subtraction_zeroes_its_error() {
        let p = parse_program(FRAGMENT).unwrap();
        let b: BarrierSet = [3].into_iter().collect();
        let t = execute(&p, &[MpFloat::from_f64(0.45)], &EngineConfig::default(), &b).unwrap();
        assert!(t.samples[3].rel_err.is_zero());
        assert_eq!(t.output.shadow, Some(MpFloat::from_f64(1.0).extend(120)));
    }

    #[test]
    fn identity_program() {
        let p = parse_program("func f(x) -> x\n  ret x\n").unwrap();
        let x = MpFloat::from_f64(0.3);
        let t = execute(
            &p,
            std::slice::from_ref(&x),
            &EngineConfig::default(),
            &BarrierSet::new(),
        )
        .unwrap();
        assert_eq!(t.output, DualValue::exact(x, 120));
        assert!(t.samples.is_empty());
    }

    #[test]
    fn set_hi_leaves_shadow_stale() {
        let text = "func f(x) -> y\n  h = get_hi x\n  h2 = iadd h, 0x100000\n  y = set_hi x, h2\n";
        let p = parse_program(text).unwrap();
        let cfg = EngineConfig::default();
        let t = execute(&p, &[MpFloat::from_f64(3.0)], &cfg, &BarrierSet::new()).unwrap();
        assert_eq!(t.output.original.to_f64(), 6.0);
        assert!(t.output.stale);
        assert!(t.output.shadow.as_ref().unwrap().same_value(&MpFloat::from_f64(3.0)));
        let up = sync_up(&t.output, &cfg);
        assert!(!up.stale);
        assert!(up.relative_error(128).unwrap().is_zero());
        assert_eq!(sync_up(&up, &cfg), up);
        let fixed = execute(&p, &[MpFloat::from_f64(3.0)], &cfg, &[2].into_iter().collect()).unwrap();
        assert!(fixed.samples[0].rel_err.is_zero());
    }

    #[test]
    fn sync_down_rounds_shadow() {
        let cfg = EngineConfig::default();
        let v = DualValue {
            original: MpFloat::from_f64(999.9),
            shadow: Some(MpFloat::from_i64(1000, 120)),
            stale: true,
        };
        let d = sync_down(&v, &cfg);
        assert_eq!(d.original, MpFloat::from_f64(1000.0));
        assert!(!d.stale);
        let bare = DualValue {
            original: MpFloat::from_f64(1.0),
            shadow: None,
            stale: false,
        };
        assert_eq!(sync_down(&bare, &cfg), bare);
    }

    #[test]
    fn loops_and_step_budget() {
        let text = "func f(x) -> s\n  s = fmov x\n  i = iconst 0\ntop:\n  s = s + 0.5\n  i = iadd i, 1\n  c = icmp lt i, 4\n  br c, top\n";
        let p = parse_program(text).unwrap();
        let t = execute(
            &p,
            &[MpFloat::from_f64(1.0)],
            &EngineConfig::default(),
            &BarrierSet::new(),
        )
        .unwrap();
        assert_eq!(t.output.original.to_f64(), 3.0);
        assert_eq!(t.exec_counts[2], 4);
        assert_eq!(t.branches, vec![true, true, true, false]);
        let tight = EngineConfig {
            max_steps: 5,
            ..EngineConfig::default()
        };
        assert_eq!(
            execute(&p, &[MpFloat::from_f64(1.0)], &tight, &BarrierSet::new()),
            Err(EngineError::StepBudgetExceeded(5))
        );
    }

    #[test]
    fn float_compare_follows_original_lane() {
        let text = "func f(x) -> y\n  c = icmp gt x, 0\n  y = fmov x\n  br c, end\n  y = fneg x\nend:\n";
        let p = parse_program(text).unwrap();
        let t = execute(
            &p,
            &[MpFloat::from_f64(-2.0)],
            &EngineConfig::default(),
            &BarrierSet::new(),
        )
        .unwrap();
        assert_eq!(t.output.original.to_f64(), 2.0);
    }

    #[test]
    fn batch_keeps_order() {
        let p = parse_program("func f(x) -> y\n  y = x * x\n").unwrap();
        let inputs: Vec<Vec<MpFloat>> = (0..20).map(|i| vec![MpFloat::from_f64(i as f64)]).collect();
        let out = run_batch(&p, &inputs, &EngineConfig::default(), &BarrierSet::new()).unwrap();
        for (i, t) in out.iter().enumerate() {
            let t = t.as_ref().unwrap();
            assert_eq!(t.run, i);
            assert_eq!(t.output.original.to_f64(), (i * i) as f64);
        }
        assert!(run_batch(&p, &[], &EngineConfig::default(), &BarrierSet::new())
            .unwrap()
            .is_empty());
    }
}
