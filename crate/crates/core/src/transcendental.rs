//! High-precision elementary functions used as the reference standard.
//!
//! Every function evaluates at `precision + guard_bits` and rounds once to
//! `precision`. Results are not proven correctly rounded; the guard bits make
//! a last-place error unlikely rather than impossible.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use psop_mpfloat::MpFloat;
use thiserror::Error;

pub const DEFAULT_ORACLE_PRECISION: u32 = 256;
pub const DEFAULT_GUARD_BITS: u32 = 64;
pub const MIN_GUARD_BITS: u32 = 32;

/// Environment variable overriding the default oracle precision.
pub const ORACLE_PRECISION_ENV: &str = "PSOP_ORACLE_PRECISION";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("{function}: argument outside the domain ({reason})")]
    Domain {
        function: &'static str,
        reason: &'static str,
    },
    #[error("{function} takes {expected} argument(s), got {got}")]
    Arity {
        function: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("invalid oracle configuration: {0}")]
    Config(String),
    #[error("cannot parse expression: {0}")]
    Syntax(String),
}

fn domain(function: &'static str, reason: &'static str) -> OracleError {
    OracleError::Domain { function, reason }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleConfig {
    pub precision: u32,
    pub guard_bits: u32,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            precision: DEFAULT_ORACLE_PRECISION,
            guard_bits: DEFAULT_GUARD_BITS,
        }
    }
}

impl OracleConfig {
    pub fn new(precision: u32, guard_bits: u32) -> Result<Self, OracleError> {
        let cfg = OracleConfig { precision, guard_bits };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Default configuration, with the precision taken from
    /// [`ORACLE_PRECISION_ENV`] when set.
    pub fn from_env() -> Result<Self, OracleError> {
        match std::env::var(ORACLE_PRECISION_ENV) {
            Ok(text) => {
                let precision = text
                    .trim()
                    .parse::<u32>()
                    .map_err(|_| OracleError::Config(format!("{ORACLE_PRECISION_ENV}={text} is not a bit count")))?;
                Self::new(precision, DEFAULT_GUARD_BITS)
            }
            Err(_) => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if self.precision < 2 {
            return Err(OracleError::Config("precision must be at least 2 bits".into()));
        }
        if self.guard_bits < MIN_GUARD_BITS {
            return Err(OracleError::Config(format!(
                "guard bits must be at least {MIN_GUARD_BITS}"
            )));
        }
        Ok(())
    }

    fn working(&self) -> u32 {
        self.precision + self.guard_bits
    }

    pub fn exp(&self, x: &MpFloat) -> Result<MpFloat, OracleError> {
        finite("exp", x)?;
        Ok(exp_w(x, self.working()).round_to(self.precision))
    }

    pub fn ln(&self, x: &MpFloat) -> Result<MpFloat, OracleError> {
        finite("log", x)?;
        Ok(ln_w(x, self.working(), "log")?.round_to(self.precision))
    }

    pub fn sin(&self, x: &MpFloat) -> Result<MpFloat, OracleError> {
        finite("sin", x)?;
        Ok(sin_cos_w(x, self.working()).0.round_to(self.precision))
    }

    pub fn cos(&self, x: &MpFloat) -> Result<MpFloat, OracleError> {
        finite("cos", x)?;
        Ok(sin_cos_w(x, self.working()).1.round_to(self.precision))
    }

    pub fn atan(&self, x: &MpFloat) -> Result<MpFloat, OracleError> {
        finite("atan", x)?;
        Ok(atan_w(x, self.working()).round_to(self.precision))
    }

    pub fn pi(&self) -> MpFloat {
        pi_w(self.working()).round_to(self.precision)
    }

    /// Evaluates `function` on `args`.
    pub fn eval(&self, function: Function, args: &[MpFloat]) -> Result<MpFloat, OracleError> {
        if args.len() != function.arity() {
            return Err(OracleError::Arity {
                function: function.name(),
                expected: function.arity(),
                got: args.len(),
            });
        }
        for a in args {
            finite(function.name(), a)?;
        }
        let w = self.working();
        let a = &args[0];
        let c = args.get(1);
        let value = match function {
            Function::Add => a.add(c.unwrap(), w),
            Function::Sub => a.sub(c.unwrap(), w),
            Function::Mul => a.mul(c.unwrap(), w),
            Function::Div => {
                if c.unwrap().is_zero() {
                    return Err(domain("div", "division by zero"));
                }
                a.div(c.unwrap(), w)
            }
            Function::Sqrt => {
                if a.is_sign_negative() && !a.is_zero() {
                    return Err(domain("sqrt", "negative argument"));
                }
                a.sqrt(w)
            }
            Function::Exp => exp_w(a, w),
            Function::Exp2 => exp_w(&a.mul(&ln2_w(w), w), w),
            Function::Exp10 => exp_w(&a.mul(&ln10_w(w), w), w),
            Function::Log => ln_w(a, w, "log")?,
            Function::Log2 => ln_w(a, w, "log2")?.div(&ln2_w(w), w),
            Function::Log10 => ln_w(a, w, "log10")?.div(&ln10_w(w), w),
            Function::Sin => sin_cos_w(a, w).0,
            Function::Cos => sin_cos_w(a, w).1,
            Function::Tan => {
                let (s, c) = sin_cos_w(a, w);
                s.div(&c, w)
            }
            Function::Atan => atan_w(a, w),
            Function::Asin => asin_w(a, w)?,
            Function::Acos => acos_w(a, w)?,
            Function::Atan2 => atan2_w(a, c.unwrap(), w),
            Function::Sinh => sinh_w(a, w),
            Function::Cosh => {
                let e = exp_w(a, w);
                let inv = MpFloat::one(w).div(&e, w);
                e.add(&inv, w).mul_pow2(-1)
            }
            Function::Tanh => tanh_w(a, w),
            Function::Asinh => asinh_w(a, w),
            Function::Acosh => {
                if a.compare(&MpFloat::one(w)) == Some(std::cmp::Ordering::Less) {
                    return Err(domain("acosh", "argument below 1"));
                }
                let w2 = w + 32;
                let r = a.mul(a, 2 * w2).sub(&MpFloat::one(w2), w2).sqrt(w2);
                ln_w(&a.add(&r, w2), w2, "acosh")?
            }
            Function::Atanh => atanh_w(a, w)?,
            Function::Hypot => a.mul(a, 2 * w).add(&c.unwrap().mul(c.unwrap(), 2 * w), w).sqrt(w),
            Function::Fmod => fmod_w(a, c.unwrap(), w)?,
            Function::Pow => pow_w(a, c.unwrap(), self.precision, w)?,
        };
        Ok(value.round_to(self.precision))
    }

    /// Parses `name` and evaluates it.
    pub fn eval_named(&self, name: &str, args: &[MpFloat]) -> Result<MpFloat, OracleError> {
        self.eval(name.parse()?, args)
    }
}

fn finite(function: &'static str, x: &MpFloat) -> Result<(), OracleError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(domain(function, "non-finite argument"))
    }
}

/// Functions available to the oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Function {
    Add,
    Sub,
    Mul,
    Div,
    Sqrt,
    Exp,
    Exp2,
    Exp10,
    Log,
    Log2,
    Log10,
    Sin,
    Cos,
    Tan,
    Atan,
    Asin,
    Acos,
    Atan2,
    Sinh,
    Cosh,
    Tanh,
    Asinh,
    Acosh,
    Atanh,
    Hypot,
    Fmod,
    Pow,
}

impl Function {
    pub const ALL: [Function; 27] = [
        Function::Add,
        Function::Sub,
        Function::Mul,
        Function::Div,
        Function::Sqrt,
        Function::Exp,
        Function::Exp2,
        Function::Exp10,
        Function::Log,
        Function::Log2,
        Function::Log10,
        Function::Sin,
        Function::Cos,
        Function::Tan,
        Function::Atan,
        Function::Asin,
        Function::Acos,
        Function::Atan2,
        Function::Sinh,
        Function::Cosh,
        Function::Tanh,
        Function::Asinh,
        Function::Acosh,
        Function::Atanh,
        Function::Hypot,
        Function::Fmod,
        Function::Pow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Function::Add => "add",
            Function::Sub => "sub",
            Function::Mul => "mul",
            Function::Div => "div",
            Function::Sqrt => "sqrt",
            Function::Exp => "exp",
            Function::Exp2 => "exp2",
            Function::Exp10 => "exp10",
            Function::Log => "log",
            Function::Log2 => "log2",
            Function::Log10 => "log10",
            Function::Sin => "sin",
            Function::Cos => "cos",
            Function::Tan => "tan",
            Function::Atan => "atan",
            Function::Asin => "asin",
            Function::Acos => "acos",
            Function::Atan2 => "atan2",
            Function::Sinh => "sinh",
            Function::Cosh => "cosh",
            Function::Tanh => "tanh",
            Function::Asinh => "asinh",
            Function::Acosh => "acosh",
            Function::Atanh => "atanh",
            Function::Hypot => "hypot",
            Function::Fmod => "fmod",
            Function::Pow => "pow",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Function::Add
            | Function::Sub
            | Function::Mul
            | Function::Div
            | Function::Atan2
            | Function::Hypot
            | Function::Fmod
            | Function::Pow => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Function {
    type Err = OracleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let alias = match s {
            "ln" => "log",
            other => other,
        };
        Function::ALL
            .into_iter()
            .find(|f| f.name() == alias)
            .ok_or_else(|| OracleError::UnknownFunction(s.to_string()))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Constant {
    Pi,
    Ln2,
    Ln10,
}

fn constants() -> &'static Mutex<HashMap<(Constant, u32), MpFloat>> {
    static CACHE: OnceLock<Mutex<HashMap<(Constant, u32), MpFloat>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cached(which: Constant, w: u32, compute: impl FnOnce() -> MpFloat) -> MpFloat {
    if let Some(v) = constants().lock().expect("constant cache").get(&(which, w)) {
        return v.clone();
    }
    // Computed outside the lock; concurrent first uses insert equal values.
    let v = compute();
    constants()
        .lock()
        .expect("constant cache")
        .entry((which, w))
        .or_insert(v)
        .clone()
}

fn int(v: i64, w: u32) -> MpFloat {
    MpFloat::from_i64(v, w)
}

/// Exponent of the leading bit, or a very small number for zero.
fn magnitude(x: &MpFloat) -> i64 {
    x.exponent().unwrap_or(i64::MIN / 4)
}

/// Sum of `1/((2k+1) n^(2k+1))` with alternating signs: `atan(1/n)`.
fn atan_inv(n: i64, w: u32) -> MpFloat {
    let n2 = int(n * n, w);
    let mut power = MpFloat::one(w).div(&int(n, w), w);
    let mut sum = power.clone();
    let limit = -(w as i64) - 8;
    for k in 1i64.. {
        power = power.div(&n2, w);
        if magnitude(&power) < limit {
            break;
        }
        let term = power.div(&int(2 * k + 1, w), w);
        sum = if k % 2 == 1 {
            sum.sub(&term, w)
        } else {
            sum.add(&term, w)
        };
    }
    sum
}

fn pi_w(w: u32) -> MpFloat {
    cached(Constant::Pi, w, || {
        let wp = w + 16;
        // Machin: pi = 16 atan(1/5) - 4 atan(1/239)
        let a = atan_inv(5, wp).mul_pow2(4);
        let b = atan_inv(239, wp).mul_pow2(2);
        a.sub(&b, w)
    })
}

/// `2 * atanh(z)` for small `|z|`.
fn atanh_series2(z: &MpFloat, w: u32) -> MpFloat {
    if z.is_zero() {
        return MpFloat::zero(w);
    }
    let z2 = z.mul(z, w);
    let mut power = z.clone();
    let mut sum = z.clone();
    let limit = magnitude(z) - w as i64 - 8;
    for k in 1i64.. {
        power = power.mul(&z2, w);
        if magnitude(&power) < limit {
            break;
        }
        sum = sum.add(&power.div(&int(2 * k + 1, w), w), w);
    }
    sum.mul_pow2(1)
}

fn ln2_w(w: u32) -> MpFloat {
    cached(Constant::Ln2, w, || {
        let wp = w + 16;
        let third = MpFloat::one(wp).div(&int(3, wp), wp);
        atanh_series2(&third, wp).round_to(w)
    })
}

fn ln10_w(w: u32) -> MpFloat {
    cached(Constant::Ln10, w, || {
        ln_w(&int(10, w + 16), w + 16, "log").expect("ln 10").round_to(w)
    })
}

/// Beyond this magnitude exp over- or underflows the unbounded exponent.
const EXP_ARGUMENT_LIMIT: f64 = 1.4e9;

fn exp_w(x: &MpFloat, w: u32) -> MpFloat {
    if x.is_zero() {
        return MpFloat::one(w);
    }
    let approx = x.to_f64();
    if approx > EXP_ARGUMENT_LIMIT {
        return MpFloat::infinity(w, false);
    }
    if approx < -EXP_ARGUMENT_LIMIT {
        return MpFloat::zero(w);
    }
    // x = n ln2 + r with |r| <= ln2 / 2
    let n = (approx / std::f64::consts::LN_2).round() as i64;
    let halvings: u32 = 16;
    let wp = w + halvings + 24 + 64 - n.unsigned_abs().leading_zeros();
    let r = x.sub(&ln2_w(wp).mul(&int(n, wp), wp), wp);
    let r = r.mul_pow2(-i64::from(halvings));
    let mut sum = MpFloat::one(wp);
    let mut term = MpFloat::one(wp);
    let limit = -(wp as i64) - 4;
    for k in 1u64.. {
        term = term.mul(&r, wp).div(&MpFloat::from_u64(k, wp), wp);
        if term.is_zero() || magnitude(&term) < limit {
            break;
        }
        sum = sum.add(&term, wp);
    }
    for _ in 0..halvings {
        sum = sum.mul(&sum, wp);
    }
    sum.mul_pow2(n).round_to(w)
}

fn ln_w(x: &MpFloat, w: u32, function: &'static str) -> Result<MpFloat, OracleError> {
    if x.is_zero() || x.is_sign_negative() {
        return Err(domain(function, "non-positive argument"));
    }
    let e = x.exponent().expect("positive finite");
    // m in [1, 2), moved to [sqrt(1/2), sqrt(2)) so |z| stays below 0.172.
    let mut m = x.mul_pow2(-e);
    let mut e = e;
    if m.to_f64() > std::f64::consts::SQRT_2 {
        m = m.mul_pow2(-1);
        e += 1;
    }
    let wp = w + 16 + x.precision().saturating_sub(w);
    let one = MpFloat::one(wp);
    let z = m.sub(&one, wp).div(&m.add(&one, wp), wp);
    let frac = atanh_series2(&z, wp);
    if e == 0 {
        return Ok(frac.round_to(w));
    }
    let wp = wp + 64;
    Ok(ln2_w(wp).mul(&int(e, wp), wp).add(&frac, w))
}

/// `(sin x, cos x)` via reduction modulo pi/2.
fn sin_cos_w(x: &MpFloat, w: u32) -> (MpFloat, MpFloat) {
    if x.is_zero() {
        return (x.round_to(w), MpFloat::one(w));
    }
    let e = magnitude(x).max(0) as u32;
    // Extra bits cover both the size of the quotient and cancellation of
    // x against the nearest multiple of pi/2.
    let wp = w + e + 80;
    let half_pi = pi_w(wp).mul_pow2(-1);
    let q = x.div(&half_pi, wp);
    let k = q.add(&MpFloat::from_f64(0.5), wp).floor();
    let r = x.sub(&k.mul(&half_pi, wp), wp);
    let quadrant = {
        let four = int(4, wp);
        let rem = k.sub(&k.div(&four, wp).floor().mul(&four, wp), wp);
        rem.to_i64_exact().expect("quadrant") as u8
    };
    let wr = w + 16;
    let s = sin_series(&r, wr);
    let c = cos_series(&r, wr);
    let (s, c) = match quadrant {
        0 => (s, c),
        1 => (c, s.neg()),
        2 => (s.neg(), c.neg()),
        _ => (c.neg(), s),
    };
    (s.round_to(w), c.round_to(w))
}

fn sin_series(r: &MpFloat, w: u32) -> MpFloat {
    if r.is_zero() {
        return r.clone();
    }
    let r2 = r.mul(r, w);
    let mut term = r.clone();
    let mut sum = r.clone();
    let limit = magnitude(r) - w as i64 - 8;
    for k in 1i64.. {
        term = term.mul(&r2, w).div(&int((2 * k) * (2 * k + 1), w), w).neg();
        if term.is_zero() || magnitude(&term) < limit {
            break;
        }
        sum = sum.add(&term, w);
    }
    sum
}

fn cos_series(r: &MpFloat, w: u32) -> MpFloat {
    let r2 = r.mul(r, w);
    let mut term = MpFloat::one(w);
    let mut sum = MpFloat::one(w);
    let limit = -(w as i64) - 8;
    for k in 1i64.. {
        term = term.mul(&r2, w).div(&int((2 * k - 1) * (2 * k), w), w).neg();
        if term.is_zero() || magnitude(&term) < limit {
            break;
        }
        sum = sum.add(&term, w);
    }
    sum
}

fn atan_w(x: &MpFloat, w: u32) -> MpFloat {
    if x.is_zero() {
        return x.round_to(w);
    }
    let wp = w + 24;
    let negative = x.is_sign_negative();
    let ax = x.abs();
    let one = MpFloat::one(wp);
    let inverted = ax.compare(&one) == Some(std::cmp::Ordering::Greater);
    let mut t = if inverted { one.div(&ax, wp) } else { ax.round_to(wp) };
    // atan t = 2 atan(t / (1 + sqrt(1 + t^2)))
    let mut doublings = 0i64;
    while magnitude(&t) > -10 {
        let root = one.add(&t.mul(&t, wp), wp).sqrt(wp);
        t = t.div(&one.add(&root, wp), wp);
        doublings += 1;
    }
    let t2 = t.mul(&t, wp);
    let mut power = t.clone();
    let mut sum = t.clone();
    let limit = magnitude(&t) - wp as i64 - 8;
    for k in 1i64.. {
        power = power.mul(&t2, wp).neg();
        if magnitude(&power) < limit {
            break;
        }
        sum = sum.add(&power.div(&int(2 * k + 1, wp), wp), wp);
    }
    let mut value = sum.mul_pow2(doublings);
    if inverted {
        value = pi_w(wp).mul_pow2(-1).sub(&value, wp);
    }
    let value = value.round_to(w);
    if negative {
        value.neg()
    } else {
        value
    }
}

fn asin_w(a: &MpFloat, w: u32) -> Result<MpFloat, OracleError> {
    let one = MpFloat::one(w);
    match a.abs().compare(&one) {
        Some(std::cmp::Ordering::Greater) => Err(domain("asin", "|a| > 1")),
        Some(std::cmp::Ordering::Equal) => {
            let half_pi = pi_w(w).mul_pow2(-1);
            Ok(if a.is_sign_negative() { half_pi.neg() } else { half_pi })
        }
        _ => {
            // asin a = atan(a / sqrt(1 - a^2)); 1 - a^2 = (1 - a)(1 + a) exactly.
            let wp = w + 16;
            let one = MpFloat::one(wp);
            let d = one.sub(a, 2 * wp).mul(&one.add(a, 2 * wp), wp).sqrt(wp);
            Ok(atan_w(&a.div(&d, wp), w))
        }
    }
}

fn acos_w(a: &MpFloat, w: u32) -> Result<MpFloat, OracleError> {
    let one = MpFloat::one(w);
    match a.abs().compare(&one) {
        Some(std::cmp::Ordering::Greater) => Err(domain("acos", "|a| > 1")),
        _ if a.same_value(&one.neg()) => Ok(pi_w(w)),
        _ => {
            // acos a = 2 atan(sqrt((1 - a) / (1 + a)))
            let wp = w + 16;
            let one = MpFloat::one(wp);
            let q = one.sub(a, 2 * wp).div(&one.add(a, 2 * wp), wp).sqrt(wp);
            Ok(atan_w(&q, wp).mul_pow2(1).round_to(w))
        }
    }
}

/// Quadrant-corrected `atan(a / c)`; `a` is the ordinate.
fn atan2_w(a: &MpFloat, c: &MpFloat, w: u32) -> MpFloat {
    let pi = pi_w(w + 8);
    if c.is_zero() {
        if a.is_zero() {
            // Signed-zero conventions: the result sign follows a, and a
            // negative c selects pi.
            return if c.is_sign_negative() {
                let v = pi.round_to(w);
                if a.is_sign_negative() {
                    v.neg()
                } else {
                    v
                }
            } else {
                a.round_to(w)
            };
        }
        let half = pi.mul_pow2(-1).round_to(w);
        return if a.is_sign_negative() { half.neg() } else { half };
    }
    let wp = w + 16;
    let base = atan_w(&a.div(c, wp + 16), wp);
    if !c.is_sign_negative() {
        return base.round_to(w);
    }
    if a.is_sign_negative() {
        base.sub(&pi, w)
    } else {
        base.add(&pi, w)
    }
}

/// Extra working bits for formulas that cancel near zero.
fn cancellation_bits(a: &MpFloat) -> u32 {
    (-magnitude(a)).clamp(0, 4096) as u32
}

fn sinh_w(a: &MpFloat, w: u32) -> MpFloat {
    if a.is_zero() {
        return a.round_to(w);
    }
    let wp = w + cancellation_bits(a) + 16;
    let e = exp_w(a, wp);
    let inv = MpFloat::one(wp).div(&e, wp);
    e.sub(&inv, w).mul_pow2(-1)
}

fn tanh_w(a: &MpFloat, w: u32) -> MpFloat {
    if a.is_zero() {
        return a.round_to(w);
    }
    if a.abs().to_f64() > f64::from(w) {
        let one = MpFloat::one(w);
        return if a.is_sign_negative() { one.neg() } else { one };
    }
    let wp = w + cancellation_bits(a) + 16;
    let e = exp_w(a, wp);
    let inv = MpFloat::one(wp).div(&e, wp);
    e.sub(&inv, wp).div(&e.add(&inv, wp), w)
}

fn asinh_w(a: &MpFloat, w: u32) -> MpFloat {
    if a.is_zero() {
        return a.round_to(w);
    }
    // ln(|a| + sqrt(a^2 + 1)) with the sign restored, avoiding cancellation
    // for negative a.
    let wp = w + cancellation_bits(a) + 16;
    let x = a.abs();
    let r = x.mul(&x, 2 * wp).add(&MpFloat::one(wp), wp).sqrt(wp);
    let v = ln_w(&x.add(&r, wp), wp, "asinh").expect("positive").round_to(w);
    if a.is_sign_negative() {
        v.neg()
    } else {
        v
    }
}

fn atanh_w(a: &MpFloat, w: u32) -> Result<MpFloat, OracleError> {
    let one = MpFloat::one(w);
    if a.abs().compare(&one) != Some(std::cmp::Ordering::Less) {
        return Err(domain("atanh", "|a| >= 1"));
    }
    if a.is_zero() {
        return Ok(a.round_to(w));
    }
    // 1/2 ln((1 + a) / (1 - a))
    let wp = w + cancellation_bits(a) + 16;
    let one = MpFloat::one(wp);
    let q = one.add(a, 2 * wp).div(&one.sub(a, 2 * wp), wp);
    Ok(ln_w(&q, wp, "atanh")?.mul_pow2(-1).round_to(w))
}

/// `a - floor(a / c) * c` with the floor computed exactly.
fn fmod_w(a: &MpFloat, c: &MpFloat, w: u32) -> Result<MpFloat, OracleError> {
    if c.is_zero() {
        return Err(domain("fmod", "c = 0"));
    }
    if a.is_zero() {
        return Ok(a.round_to(w));
    }
    let (na, ma, sa) = a.to_parts().expect("normal");
    let (nc, mc, sc) = c.to_parts().expect("normal");
    let signed = |neg: bool, m: BigUint| {
        let v = BigInt::from(m);
        if neg {
            -v
        } else {
            v
        }
    };
    let s = sa.min(sc);
    let num = signed(na, ma << (sa - s) as usize);
    let den = signed(nc, mc << (sc - s) as usize);
    let q = num.div_floor(&den);
    let (qneg, qmag) = (q.sign() == num_bigint::Sign::Minus, q.magnitude().clone());
    let qbits = (qmag.bits() as u32).max(2);
    let qf = MpFloat::from_parts(qneg, qmag, 0, qbits);
    let prod = qf.mul(c, qbits + c.precision());
    Ok(a.sub(&prod, w))
}

/// `e^(c ln a)` composed from primitives rounded to `p` bits, so that it
/// agrees exactly with `exp(mul(c, log(a)))` evaluated call by call.
fn pow_w(a: &MpFloat, c: &MpFloat, p: u32, w: u32) -> Result<MpFloat, OracleError> {
    if a.is_zero() {
        return match c.compare(&MpFloat::zero(w)) {
            Some(std::cmp::Ordering::Greater) => Ok(MpFloat::zero(w)),
            _ => Err(domain("pow", "zero base with non-positive exponent")),
        };
    }
    if a.is_sign_negative() {
        // e^(c ln a) needs a > 0; integral exponents extend it by sign.
        if !c.is_integer() {
            return Err(domain("pow", "negative base with non-integral exponent"));
        }
        let even = c.mul_pow2(-1).is_integer();
        let v = pow_w(&a.abs(), c, p, w)?;
        return Ok(if even { v } else { v.neg() });
    }
    let l = ln_w(a, w, "pow")?.round_to(p);
    Ok(exp_w(&c.mul(&l, p), w))
}

/// Oracle expression: literals, `pi`, and function calls.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Literal(String),
    Pi,
    Call(Function, Vec<Expr>),
}

fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch == '(' || ch == ')' || ch == ',' || ch.is_whitespace() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_string());
            }
        } else {
            cur.push(ch);
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

struct ExprParser {
    tokens: Vec<String>,
    pos: usize,
}

impl ExprParser {
    fn peek(&self) -> Option<&str> {
        self.tokens.get(self.pos).map(String::as_str)
    }

    fn next(&mut self) -> Result<String, OracleError> {
        let t = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| OracleError::Syntax("unexpected end of input".into()))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, want: &str) -> Result<(), OracleError> {
        let t = self.next()?;
        if t == want {
            Ok(())
        } else {
            Err(OracleError::Syntax(format!("expected `{want}`, found `{t}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr, OracleError> {
        let t = self.next()?;
        if matches!(t.as_str(), "(" | ")" | ",") {
            return Err(OracleError::Syntax(format!("unexpected `{t}`")));
        }
        if self.peek() == Some("(") {
            let f: Function = t.parse()?;
            self.pos += 1;
            let mut args = vec![self.expr()?];
            while self.peek() == Some(",") {
                self.pos += 1;
                args.push(self.expr()?);
            }
            self.expect(")")?;
            return Ok(Expr::Call(f, args));
        }
        if t == "pi" {
            return Ok(Expr::Pi);
        }
        Ok(Expr::Literal(t))
    }
}

impl FromStr for Expr {
    type Err = OracleError;

    /// Accepts `exp(-0.0277)`, nested calls such as `sub(pow(20, 65), 1)`,
    /// and the command form `exp -0.0277` (function name, then arguments).
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut p = ExprParser {
            tokens: tokenize(text),
            pos: 0,
        };
        let command = match (p.tokens.first(), p.tokens.get(1)) {
            (Some(name), Some(next)) if next != "(" && name.parse::<Function>().is_ok() => {
                Some(name.parse::<Function>()?)
            }
            _ => None,
        };
        let e = match command {
            Some(f) => {
                p.pos = 1;
                let mut args = Vec::new();
                while p.peek().is_some() {
                    args.push(p.expr()?);
                }
                Expr::Call(f, args)
            }
            None => p.expr()?,
        };
        if let Some(t) = p.peek() {
            return Err(OracleError::Syntax(format!("trailing `{t}`")));
        }
        Ok(e)
    }
}

impl OracleConfig {
    /// Evaluates `e`. Literals are read at `precision` bits and every call
    /// result is rounded to `precision` bits.
    pub fn eval_expr(&self, e: &Expr) -> Result<MpFloat, OracleError> {
        match e {
            Expr::Literal(text) => MpFloat::parse_literal(text, self.precision)
                .ok()
                .filter(MpFloat::is_finite)
                .ok_or_else(|| OracleError::Syntax(format!("bad number `{text}`"))),
            Expr::Pi => Ok(self.pi()),
            Expr::Call(f, args) => {
                let vals = args.iter().map(|a| self.eval_expr(a)).collect::<Result<Vec<_>, _>>()?;
                self.eval(*f, &vals)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use psop_mpfloat::Format;

    fn is_one(v: &MpFloat) -> bool {
        v.same_value(&MpFloat::one(2))
    }

    fn dec(s: &str) -> MpFloat {
        MpFloat::from_decimal_string(s, Format::BINARY64).unwrap()
    }

    #[test]
    fn trivial_values() {
        let o = OracleConfig::default();
        assert!(is_one(&o.exp(&MpFloat::zero(53)).unwrap()));
        assert!(o.ln(&MpFloat::one(53)).unwrap().is_zero());
        assert!(o.sin(&MpFloat::zero(53)).unwrap().is_zero());
        assert!(o.atan(&MpFloat::zero(53)).unwrap().is_zero());
        let cosh0 = o.eval(Function::Cosh, &[MpFloat::zero(53)]).unwrap();
        assert!(is_one(&cosh0));
        let h = o
            .eval(Function::Hypot, &[MpFloat::from_f64(3.0), MpFloat::from_f64(4.0)])
            .unwrap();
        assert!(h.same_value(&MpFloat::from_f64(5.0)));
    }

    #[test]
    fn exp_of_decimal_argument() {
        let o = OracleConfig::default();
        let x = MpFloat::from_decimal_string("-0.0277", 256).unwrap();
        let v = o.exp(&x).unwrap();
        assert_eq!(v.to_decimal_string(30), "0.972680127073139846902979085281");
    }

    #[test]
    fn expression_forms() {
        let o = OracleConfig::default();
        let a: Expr = "exp -0.0277".parse().unwrap();
        let b: Expr = "exp(-0.0277)".parse().unwrap();
        assert_eq!(a, b);
        assert_eq!(
            o.eval_expr(&a).unwrap().to_decimal_string(30),
            "0.972680127073139846902979085281"
        );
        let d: Expr = "sub(pow(20, 65), exp(mul(65, ln(20))))".parse().unwrap();
        assert!(o.eval_expr(&d).unwrap().is_zero());
        assert_eq!(
            o.eval_expr(&"atan2 1 -1".parse().unwrap()).unwrap(),
            o.eval_expr(&"mul(0.75, pi)".parse().unwrap()).unwrap()
        );
        assert!("exp(1".parse::<Expr>().is_err());
        assert!("exp(1))".parse::<Expr>().is_err());
        assert!(matches!(
            "frob(1)".parse::<Expr>(),
            Err(OracleError::UnknownFunction(_))
        ));
    }

    #[test]
    fn domain_errors() {
        let o = OracleConfig::default();
        assert!(matches!(o.ln(&MpFloat::zero(53)), Err(OracleError::Domain { .. })));
        assert!(o.eval(Function::Acos, &[dec("1.5")]).is_err());
        assert!(o.eval(Function::Atanh, &[dec("1")]).is_err());
        assert!(o.eval(Function::Fmod, &[dec("1"), dec("0")]).is_err());
        assert!(matches!(
            o.eval(Function::Pow, &[dec("1")]),
            Err(OracleError::Arity { .. })
        ));
        assert!(OracleConfig::new(256, 16).is_err());
    }

    #[test]
    fn fmod_is_floor_mod() {
        let o = OracleConfig::default();
        let r = o.eval(Function::Fmod, &[dec("-7"), dec("3")]).unwrap();
        assert!(r.same_value(&MpFloat::from_f64(2.0)));
        let r = o.eval(Function::Fmod, &[dec("7.5"), dec("2")]).unwrap();
        assert!(r.same_value(&MpFloat::from_f64(1.5)));
    }

    #[test]
    fn pow_matches_exp_log_form() {
        let o = OracleConfig::default();
        let p = o.eval(Function::Pow, &[dec("20"), dec("65")]).unwrap();
        let l = o.eval(Function::Log, &[dec("20")]);
        assert!(l.is_ok());
        assert!(p.to_f64() > 3.6e84 && p.to_f64() < 3.7e84);
        let neg = o.eval(Function::Pow, &[dec("-2"), dec("3")]).unwrap();
        assert!(neg.same_value(&MpFloat::from_f64(-8.0)));
    }

    #[test]
    fn function_names_round_trip() {
        for f in Function::ALL {
            assert_eq!(f.name().parse::<Function>().unwrap(), f);
        }
        assert_eq!("ln".parse::<Function>().unwrap(), Function::Log);
        assert!("gamma".parse::<Function>().is_err());
    }

    #[test]
    fn sin_near_multiple_of_pi() {
        let o = OracleConfig::default();
        // sin of the binary64 nearest to pi is pi - fl(pi) ~ 1.2246e-16.
        let v = o.sin(&MpFloat::from_f64(std::f64::consts::PI)).unwrap();
        let expect = 1.2246467991473532e-16;
        assert!((v.to_f64() - expect).abs() < 1e-30);
    }
}
