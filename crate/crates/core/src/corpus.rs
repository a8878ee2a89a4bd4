//! Built-in kernels, input grids and input files.

use std::fs;
use std::io;
use std::path::Path;

use num_bigint::{BigInt, Sign};
use psop_mpfloat::{Format, MpFloat};
use thiserror::Error;

use crate::tac::{parse_program, ConstValue, TacError, TacProgram};
use crate::transcendental::Function;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: cannot parse `{text}`")]
    Parse { path: String, line: usize, text: String },
    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),
    #[error("kernel {name}: {source}")]
    Kernel {
        name: String,
        #[source]
        source: TacError,
    },
}

/// Which precision-specific mechanism a kernel contains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pattern {
    /// `(x + C) - C` rounding with a magic constant.
    MagicConstant,
    /// Partial bit writes through float/word reinterpretation.
    Union,
    /// Both of the above.
    Both,
    /// No precision-specific operation.
    Control,
}

/// Default input domain of a kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Domain {
    pub lo: &'static str,
    pub hi: &'static str,
    pub count: usize,
}

#[derive(Clone, Debug)]
pub struct Kernel {
    pub name: &'static str,
    pub source: &'static str,
    pub program: TacProgram,
    /// Reference function computed by the kernel, if any.
    pub oracle: Option<Function>,
    pub domain: Domain,
    pub pattern: Pattern,
}

impl Kernel {
    /// Grid over the default domain at `fmt`.
    pub fn default_grid(&self, fmt: Format) -> Vec<MpFloat> {
        let lo = MpFloat::from_decimal_string(self.domain.lo, fmt).expect("domain bound");
        let hi = MpFloat::from_decimal_string(self.domain.hi, fmt).expect("domain bound");
        grid(&lo, &hi, self.domain.count, fmt).expect("valid default domain")
    }
}

pub const ROUND_KERNEL: &str = "\
# Nearest-integer rounding by adding and subtracting 1.5 * 2^52.
const toint = 0x1.8p52

func round_kernel(x) -> r
  t = x + toint
  r = t - toint
  ret r
";

pub const EXP_KERNEL: &str = "\
# exp(x) = 2^n * exp(r), x = n ln2 + r, |r| <= ln2/2.
# n comes from the magic-constant rounding of x * log2(e); the integer is read
# back from the low word of y and 2^n is assembled in the exponent field.
const log2e = 0x1.71547652b82fep0
const three51 = {0, 0x43380000}
const ln2hi = 0x1.62e42fee00000p-1
const ln2lo = 0x1.a39ef35793c76p-33
const P1 = 1.66666666666666019037e-01
const P2 = -2.77777777770155933842e-03
const P3 = 6.61375632143793436117e-05
const P4 = -1.65339022054652515390e-06
const P5 = 4.13813679705723846039e-08
const one = 1.0
const two = 2.0

func exp_kernel(x) -> result
  t8 = x * log2e
  t9 = t8 + three51
  y = t9
  t10 = y - three51
  u = t10 * ln2hi
  hi = x - u
  lo = t10 * ln2lo
  r = hi - lo
  z = r * r
  p = z * P5
  p = p + P4
  p = z * p
  p = p + P3
  p = z * p
  p = p + P2
  p = z * p
  p = p + P1
  p = z * p
  c = r - p
  rc = r * c
  d = two - c
  q = rc / d
  v = lo - q
  w = v - hi
  e = one - w
  n = get_lo y
  n = iadd n, 1023
  n = ishl n, 20
  scale = set_hi one, n
  result = e * scale
  ret result
";

pub const SIN_KERNEL: &str = "\
# sin(x): quadrant k = round(x * 2/pi) through the magic constant, the
# reduced argument r = x - k pi/2 in two parts, then a sine or cosine
# polynomial selected by k mod 4 (read from the low word of the rounded sum).
const invpio2 = 0x1.45f306dc9c883p-1
const toint = 0x1.8p52
const pio2_1 = 0x1.921fb544p0
const pio2_1t = 0x1.0b4611a626331p-34
const S1 = -1.66666666666666324348e-01
const S2 = 8.33333333332248946124e-03
const S3 = -1.98412698298579493134e-04
const S4 = 2.75573137070700676789e-06
const S5 = -2.50507602534068634195e-08
const S6 = 1.58969099521155010221e-10
const C1 = 4.16666666666666019037e-02
const C2 = -1.38888888888741095749e-03
const C3 = 2.48015872894767294178e-05
const C4 = -2.75573143513906633035e-07
const C5 = 2.08757232129817482790e-09
const C6 = -1.13596475577881948265e-11
const one = 1.0
const half = 0.5

func sin_kernel(x) -> result
  t = x * invpio2
  a = t + toint
  fn = a - toint
  u = fn * pio2_1
  r0 = x - u
  w = fn * pio2_1t
  r = r0 - w
  z = r * r
  v = z * r
  s = z * S6
  s = s + S5
  s = z * s
  s = s + S4
  s = z * s
  s = s + S3
  s = z * s
  s = s + S2
  s = z * s
  s = s + S1
  s = v * s
  sinr = r + s
  k = z * C6
  k = k + C5
  k = z * k
  k = k + C4
  k = z * k
  k = k + C3
  k = z * k
  k = k + C2
  k = z * k
  k = k + C1
  k = z * k
  k = z * k
  hz = half * z
  g = one - hz
  cosr = g + k
  n = get_lo a
  q = iand n, 3
  c0 = icmp eq q, 0
  br c0, quadrant0
  c1 = icmp eq q, 1
  br c1, quadrant1
  c2 = icmp eq q, 2
  br c2, quadrant2
  result = fneg cosr
  jmp done
quadrant0:
  result = fmov sinr
  jmp done
quadrant1:
  result = fmov cosr
  jmp done
quadrant2:
  result = fneg sinr
done:
  ret result
";

pub const UNION_SCALE_KERNEL: &str = "\
# x * 8 by adding 3 to the exponent field of the high word.
func union_scale_kernel(x) -> y
  hi = get_hi x
  hi = iadd hi, 0x300000
  y = set_hi x, hi
  ret y
";

pub const ACCUM_KERNEL: &str = "\
# x + 0.1 + 0.1 + ... (10000 additions).
const tenth = 0.1

func accum_kernel(x) -> s
  s = fmov x
  i = iconst 0
loop:
  s = s + tenth
  i = iadd i, 1
  more = icmp lt i, 10000
  br more, loop
  ret s
";

pub const CANCEL_KERNEL: &str = "\
# (x + d) - x with d = 1e-4.
const d = 1e-4

func cancel_kernel(x) -> y
  t = x + d
  y = t - x
  ret y
";

/// Constants built with magic values in a reference math library, in their
/// source-text forms.
pub const PARTICULAR_CONSTANTS: &str = "\
const big = 0x1.8000000000000p45
const toint = 0x1.8000000000000p52
const three33 = {0, 0x42180000}
const three51 = {0, 0x43380000}
const THREEp42 = 13194139533312.0
const t22 = 0x1.8p22
const bigu = {0xfffffd2c, 0x4297ffff}
const bigv = {0xfff8016a, 0x4207ffff}
";

/// Loads [`PARTICULAR_CONSTANTS`] at binary64.
pub fn particular_constants() -> Vec<(String, MpFloat)> {
    let text = format!("{PARTICULAR_CONSTANTS}func constants(x) -> x\n");
    let prog = parse_program(&text).expect("constant table parses");
    prog.consts
        .iter()
        .map(|c| {
            let v: &ConstValue = &c.value;
            (c.name.clone(), v.value(Format::BINARY64).expect("constant value"))
        })
        .collect()
}

struct Spec {
    name: &'static str,
    source: &'static str,
    oracle: Option<Function>,
    domain: Domain,
    pattern: Pattern,
}

const DEFAULT_COUNT: usize = 1000;

const SPECS: [Spec; 6] = [
    Spec {
        name: "round_kernel",
        source: ROUND_KERNEL,
        oracle: None,
        domain: Domain {
            lo: "-100",
            hi: "100",
            count: DEFAULT_COUNT,
        },
        pattern: Pattern::MagicConstant,
    },
    Spec {
        name: "exp_kernel",
        source: EXP_KERNEL,
        oracle: Some(Function::Exp),
        domain: Domain {
            lo: "-1",
            hi: "1",
            count: DEFAULT_COUNT,
        },
        pattern: Pattern::Both,
    },
    Spec {
        name: "sin_kernel",
        source: SIN_KERNEL,
        oracle: Some(Function::Sin),
        domain: Domain {
            lo: "-4",
            hi: "4",
            count: DEFAULT_COUNT,
        },
        pattern: Pattern::MagicConstant,
    },
    Spec {
        name: "union_scale_kernel",
        source: UNION_SCALE_KERNEL,
        oracle: None,
        domain: Domain {
            lo: "1",
            hi: "2",
            count: DEFAULT_COUNT,
        },
        pattern: Pattern::Union,
    },
    Spec {
        name: "accum_kernel",
        source: ACCUM_KERNEL,
        oracle: None,
        domain: Domain {
            lo: "-1",
            hi: "1",
            count: DEFAULT_COUNT,
        },
        pattern: Pattern::Control,
    },
    Spec {
        name: "cancel_kernel",
        source: CANCEL_KERNEL,
        oracle: None,
        domain: Domain {
            lo: "-1",
            hi: "1",
            count: DEFAULT_COUNT,
        },
        pattern: Pattern::Control,
    },
];

fn build(spec: &Spec) -> Result<Kernel, CorpusError> {
    let program = parse_program(spec.source).map_err(|source| CorpusError::Kernel {
        name: spec.name.to_string(),
        source,
    })?;
    Ok(Kernel {
        name: spec.name,
        source: spec.source,
        program,
        oracle: spec.oracle,
        domain: spec.domain,
        pattern: spec.pattern,
    })
}

pub fn builtin_kernels() -> Vec<Kernel> {
    SPECS
        .iter()
        .map(|s| build(s).expect("built-in kernel is valid"))
        .collect()
}

pub fn kernel_names() -> Vec<&'static str> {
    SPECS.iter().map(|s| s.name).collect()
}

pub fn kernel(name: &str) -> Result<Kernel, CorpusError> {
    let spec = SPECS
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| CorpusError::UnknownKernel(name.to_string()))?;
    build(spec)
}

fn signed(neg: bool, mag: num_bigint::BigUint) -> BigInt {
    BigInt::from_biguint(if neg { Sign::Minus } else { Sign::Plus }, mag)
}

fn to_float(v: &BigInt) -> MpFloat {
    let bits = (v.bits() as u32).max(2);
    MpFloat::from_parts(v.sign() == Sign::Minus, v.magnitude().clone(), 0, bits)
}

/// `count` points `lo + i (hi - lo) / count`, each computed exactly and
/// rounded once to `fmt`.
pub fn grid(lo: &MpFloat, hi: &MpFloat, count: usize, fmt: Format) -> Result<Vec<MpFloat>, CorpusError> {
    if count == 0 {
        return Err(CorpusError::InvalidRange("count must be positive".into()));
    }
    if !lo.is_finite() || !hi.is_finite() || lo.compare(hi) != Some(std::cmp::Ordering::Less) {
        return Err(CorpusError::InvalidRange(format!(
            "need finite lo < hi, got {lo} and {hi}"
        )));
    }
    let parts = |v: &MpFloat| {
        v.to_parts()
            .map(|(n, m, s)| (signed(n, m), s))
            .unwrap_or((BigInt::from(0), i64::MAX))
    };
    let (l, sl) = parts(lo);
    let (h, sh) = parts(hi);
    let s = sl.min(sh);
    let s = if s == i64::MAX { 0 } else { s };
    let scale = |v: BigInt, sv: i64| if sv == i64::MAX { v } else { v << (sv - s) as usize };
    let l = scale(l, sl);
    let h = scale(h, sh);
    let n = BigInt::from(count);
    let span = &h - &l;
    // Value i is num_i * 2^s / count; fold 2^s into one side so the single
    // division is the only rounding.
    let den = if s < 0 {
        to_float(&(&n << (-s) as usize))
    } else {
        to_float(&n)
    };
    Ok((0..count)
        .map(|i| {
            let mut num = &l * &n + &span * BigInt::from(i);
            if num.sign() == Sign::NoSign {
                return MpFloat::zero(fmt.precision);
            }
            if s > 0 {
                num <<= s as usize;
            }
            to_float(&num).div(&den, fmt)
        })
        .collect())
}

/// Significant decimal digits that identify every value of `precision` bits.
pub fn round_trip_digits(precision: u32) -> usize {
    (f64::from(precision) * std::f64::consts::LOG10_2).ceil() as usize + 1
}

/// Writes one decimal literal per line.
pub fn write_inputs(points: &[MpFloat], path: &Path) -> Result<(), CorpusError> {
    let mut text = String::new();
    for p in points {
        text.push_str(&p.to_decimal_string(round_trip_digits(p.precision())));
        text.push('\n');
    }
    fs::write(path, text).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Input line: the literal as written and its value at the target format.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InputValue {
    pub text: String,
    pub value: MpFloat,
}

/// Parses input text: one literal per line, `#` comments, blank lines ignored.
pub fn parse_inputs(text: &str, origin: &str, fmt: Format) -> Result<Vec<InputValue>, CorpusError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let value = MpFloat::parse_literal(line, fmt)
            .ok()
            .filter(MpFloat::is_finite)
            .ok_or_else(|| CorpusError::Parse {
                path: origin.to_string(),
                line: i + 1,
                text: line.to_string(),
            })?;
        out.push(InputValue {
            text: line.to_string(),
            value,
        });
    }
    Ok(out)
}

pub fn read_input_values(path: &Path, fmt: Format) -> Result<Vec<InputValue>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_inputs(&text, &path.display().to_string(), fmt)
}

pub fn read_inputs(path: &Path, fmt: Format) -> Result<Vec<MpFloat>, CorpusError> {
    Ok(read_input_values(path, fmt)?.into_iter().map(|v| v.value).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{execute, EngineConfig, RunTrace};
    use crate::tac::BarrierSet;
    use crate::transcendental::OracleConfig;
    use psop_mpfloat::relative_error;

    fn f(v: f64) -> MpFloat {
        MpFloat::from_f64(v)
    }

    #[test]
    fn all_kernels_build() {
        let ks = builtin_kernels();
        assert_eq!(ks.len(), 6);
        for k in &ks {
            assert_eq!(kernel(k.name).unwrap().program, k.program);
        }
        assert!(matches!(kernel("nope"), Err(CorpusError::UnknownKernel(_))));
    }

    #[test]
    fn grid_endpoints() {
        let g = grid(&f(-1.0), &f(1.0), 1000, Format::BINARY64).unwrap();
        assert_eq!(g.len(), 1000);
        assert_eq!(g[0].to_f64(), -1.0);
        assert_eq!(g[1].to_f64(), -0.998);
        assert_eq!(g[500].to_f64(), 0.0);
        assert_eq!(g[999].to_f64(), 0.998);
        assert_eq!(
            grid(&f(0.0), &f(1.0), 1, Format::BINARY64).unwrap(),
            vec![MpFloat::zero(53)]
        );
        assert!(grid(&f(1.0), &f(1.0), 3, Format::BINARY64).is_err());
        assert!(grid(&f(0.0), &f(1.0), 0, Format::BINARY64).is_err());
    }

    #[test]
    fn inputs_parse_with_lines() {
        let v = parse_inputs("# header\n0.1\n\n-2 # trailing\n", "mem", Format::BINARY64).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].value.to_f64(), 0.1);
        assert_eq!(v[1].text, "-2");
        match parse_inputs("1\nx\n", "mem", Format::BINARY64) {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    fn run(name: &str, x: f64, cfg: &EngineConfig) -> RunTrace {
        let k = kernel(name).unwrap();
        execute(&k.program, &[f(x)], cfg, &BarrierSet::new()).unwrap()
    }

    #[test]
    fn round_kernel_rounds_to_nearest() {
        let cfg = EngineConfig::default();
        assert_eq!(run("round_kernel", 13.75, &cfg).output.original.to_f64(), 14.0);
        assert_eq!(run("round_kernel", -2.5, &cfg).output.original.to_f64(), -2.0);
        // The shadow lane keeps the fraction.
        let out = run("round_kernel", 13.75, &cfg).output;
        assert_eq!(out.shadow.unwrap().to_f64(), 13.75);
    }

    #[test]
    fn math_kernels_are_accurate_in_binary64() {
        let cfg = EngineConfig::default();
        let oracle = OracleConfig::default();
        for (name, func) in [("exp_kernel", Function::Exp), ("sin_kernel", Function::Sin)] {
            let k = kernel(name).unwrap();
            for x in k.default_grid(Format::BINARY64).iter().step_by(37) {
                let got = execute(&k.program, std::slice::from_ref(x), &cfg, &BarrierSet::new()).unwrap();
                let want = oracle.eval(func, std::slice::from_ref(x)).unwrap();
                let err = relative_error(&want, &got.output.original, 128).to_f64();
                assert!(err < 1e-15 || want.abs().to_f64() < 1e-300, "{name}({x}) rel err {err}");
            }
        }
    }

    #[test]
    fn union_scale_multiplies_by_eight() {
        let out = run("union_scale_kernel", 1.25, &EngineConfig::default()).output;
        assert_eq!(out.original.to_f64(), 10.0);
        assert!(out.stale);
    }

    #[test]
    fn accum_in_single_precision() {
        let cfg = EngineConfig {
            p_orig: 24,
            ..EngineConfig::default()
        };
        let out = run("accum_kernel", 0.0, &cfg).output;
        assert_eq!(out.original.to_decimal_exact(), "999.90289306640625");
    }

    #[test]
    fn particular_constant_values() {
        let c: std::collections::HashMap<_, _> = particular_constants().into_iter().collect();
        assert_eq!(c.len(), 8);
        assert_eq!(c["big"].to_f64(), 1.5 * 2f64.powi(45));
        assert_eq!(c["toint"].to_f64(), 1.5 * 2f64.powi(52));
        assert_eq!(c["three33"].to_f64(), 1.5 * 2f64.powi(34));
        assert_eq!(c["three51"].to_f64(), 1.5 * 2f64.powi(52));
        assert_eq!(c["THREEp42"].to_f64(), 1.5 * 2f64.powi(43));
        assert_eq!(c["t22"].to_f64(), 1.5 * 2f64.powi(22));
        assert_eq!(c["bigu"].to_f64(), 1.5 * 2f64.powi(42) - 724.0 * 2f64.powi(-10));
        assert_eq!(c["bigv"].to_f64(), 1.5 * 2f64.powi(33) - 1.0 + 362.0 * 2f64.powi(-19));
    }

    #[test]
    fn round_trip_digit_counts() {
        assert_eq!(round_trip_digits(53), 17);
        assert_eq!(round_trip_digits(24), 9);
    }
}
