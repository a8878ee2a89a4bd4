//! Exact decimal and hexadecimal conversion.
//!
//! Parsing builds the exact rational value with big integers and rounds once.
//! Printing scales the exact binary value by a power of ten and rounds the
//! resulting integer half-to-even; no intermediate binary arithmetic.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Pow, Zero};

use crate::round::round_magnitude;
use crate::{Category, Format, MpError, MpFloat};

/// Largest accepted magnitude of a decimal exponent in literal text.
const MAX_DECIMAL_EXPONENT: i64 = 100_000;

/// Decimal significand digits and exponent: value = `0.d1 d2 ... * 10^(exponent+1)`,
/// i.e. the first digit has weight `10^exponent`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scientific {
    pub negative: bool,
    pub digits: String,
    pub exponent: i64,
}

impl Scientific {
    /// `d.ddd * 10^e` layout used by trace dumps.
    pub fn to_trace_string(&self) -> String {
        let sign = if self.negative { "-" } else { "" };
        let (head, tail) = self.digits.split_at(1);
        if tail.is_empty() {
            format!("{sign}{head} * 10^{}", self.exponent)
        } else {
            format!("{sign}{head}.{tail} * 10^{}", self.exponent)
        }
    }

    /// `d.ddde-5` layout.
    pub fn to_e_notation(&self) -> String {
        let sign = if self.negative { "-" } else { "" };
        let (head, tail) = self.digits.split_at(1);
        if tail.is_empty() {
            format!("{sign}{head}e{}", self.exponent)
        } else {
            format!("{sign}{head}.{tail}e{}", self.exponent)
        }
    }
}

/// Decimal digits needed to identify any value of the given precision.
pub(crate) fn digits_for_precision(precision: u32) -> usize {
    // ceil(p * log10(2)) + 1
    (f64::from(precision) * std::f64::consts::LOG10_2).ceil() as usize + 1
}

fn pow10(n: u64) -> BigUint {
    BigUint::from(10u32).pow(n)
}

/// Rounds `num / den * 2^scale` to `fmt`.
fn round_ratio(negative: bool, num: BigUint, den: &BigUint, scale: i64, fmt: Format) -> MpFloat {
    if num.is_zero() {
        return round_magnitude(negative, num, 0, false, fmt);
    }
    let want = u64::from(fmt.precision) + 2 + den.bits();
    let k = want.saturating_sub(num.bits());
    let (q, r) = (num << k as usize).div_rem(den);
    round_magnitude(negative, q, scale - k as i64, !r.is_zero(), fmt)
}

fn parse_error(input: &str, reason: &str) -> MpError {
    MpError::Parse {
        input: input.to_string(),
        reason: reason.to_string(),
    }
}

fn split_sign(s: &str) -> (bool, &str) {
    if let Some(rest) = s.strip_prefix('-') {
        (true, rest)
    } else if let Some(rest) = s.strip_prefix('+') {
        (false, rest)
    } else {
        (false, s)
    }
}

fn parse_exponent(text: &str, input: &str) -> Result<i64, MpError> {
    let (neg, digits) = split_sign(text);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(parse_error(input, "malformed exponent"));
    }
    let value: i64 = digits
        .parse()
        .map_err(|_| parse_error(input, "exponent out of range"))?;
    Ok(if neg { -value } else { value })
}

impl MpFloat {
    /// Parses `[+-]digits[.digits][(e|E)[+-]digits]` and rounds once to `fmt`.
    pub fn from_decimal_string(text: &str, fmt: impl Into<Format>) -> Result<MpFloat, MpError> {
        let fmt = fmt.into();
        let s = text.trim();
        let (negative, body) = split_sign(s);
        let (mantissa, exponent) = match body.find(['e', 'E']) {
            Some(i) => (&body[..i], parse_exponent(&body[i + 1..], text)?),
            None => (body, 0),
        };
        let (int_part, frac_part) = match mantissa.split_once('.') {
            Some((i, f)) => (i, f),
            None => (mantissa, ""),
        };
        if int_part.is_empty() || !int_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(parse_error(text, "expected decimal digits"));
        }
        if !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(parse_error(text, "expected decimal digits after '.'"));
        }
        if mantissa.ends_with('.') {
            return Err(parse_error(text, "expected digits after '.'"));
        }
        let digits: String = [int_part, frac_part].concat();
        let n =
            BigUint::parse_bytes(digits.as_bytes(), 10).ok_or_else(|| parse_error(text, "expected decimal digits"))?;
        let scale10 = exponent - frac_part.len() as i64;
        if n.is_zero() {
            return Ok(round_magnitude(negative, n, 0, false, fmt));
        }
        if scale10.abs() > MAX_DECIMAL_EXPONENT {
            return Err(parse_error(text, "decimal exponent out of range"));
        }
        if scale10 >= 0 {
            let mag = n * pow10(scale10 as u64);
            Ok(round_magnitude(negative, mag, 0, false, fmt))
        } else {
            Ok(round_ratio(negative, n, &pow10((-scale10) as u64), 0, fmt))
        }
    }

    /// Parses a hexadecimal float `[+-]0xH[.H][p[+-]D]` exactly, then rounds to `fmt`.
    pub fn from_hex_string(text: &str, fmt: impl Into<Format>) -> Result<MpFloat, MpError> {
        let fmt = fmt.into();
        let s = text.trim();
        let (negative, body) = split_sign(s);
        let body = body
            .strip_prefix("0x")
            .or_else(|| body.strip_prefix("0X"))
            .ok_or_else(|| parse_error(text, "expected 0x prefix"))?;
        let (mantissa, exponent) = match body.find(['p', 'P']) {
            Some(i) => (&body[..i], parse_exponent(&body[i + 1..], text)?),
            None => (body, 0),
        };
        let (int_part, frac_part) = match mantissa.split_once('.') {
            Some((i, f)) => (i, f),
            None => (mantissa, ""),
        };
        let all_hex = |t: &str| t.bytes().all(|b| b.is_ascii_hexdigit());
        if int_part.is_empty() || !all_hex(int_part) || !all_hex(frac_part) {
            return Err(parse_error(text, "expected hexadecimal digits"));
        }
        let digits: String = [int_part, frac_part].concat();
        let n = BigUint::parse_bytes(digits.as_bytes(), 16)
            .ok_or_else(|| parse_error(text, "expected hexadecimal digits"))?;
        if exponent.abs() > crate::EXPONENT_LIMIT {
            return Err(parse_error(text, "binary exponent out of range"));
        }
        let scale = exponent - 4 * frac_part.len() as i64;
        Ok(round_magnitude(negative, n, scale, false, fmt))
    }

    /// Parses either a decimal or hexadecimal literal, plus `inf` and `nan`.
    pub fn parse_literal(text: &str, fmt: impl Into<Format>) -> Result<MpFloat, MpError> {
        let fmt = fmt.into();
        let s = text.trim();
        let (negative, body) = split_sign(s);
        match body.to_ascii_lowercase().as_str() {
            "inf" | "infinity" => return Ok(MpFloat::infinity(fmt.precision, negative)),
            "nan" => return Ok(MpFloat::nan(fmt.precision)),
            _ => {}
        }
        if body.starts_with("0x") || body.starts_with("0X") {
            MpFloat::from_hex_string(s, fmt)
        } else {
            MpFloat::from_decimal_string(s, fmt)
        }
    }

    /// Correctly rounded (half-even) decimal digits of `|self|`.
    ///
    /// Only meaningful for finite non-zero values.
    pub fn to_scientific(&self, digits: usize) -> Scientific {
        assert!(digits >= 1, "at least one digit");
        match self.category {
            Category::Zero => Scientific {
                negative: self.negative,
                digits: "0".repeat(digits),
                exponent: 0,
            },
            Category::Normal => {
                let (mag, scale) = self.trimmed();
                // floor(log10(2^exponent)) is within one of the true exponent.
                let mut exp10 = (self.exponent as f64 * std::f64::consts::LOG10_2).floor() as i64;
                loop {
                    let n = scaled_digits(&mag, scale, digits as i64 - 1 - exp10);
                    let len = n.to_str_radix(10).len();
                    if len > digits {
                        exp10 += 1;
                    } else if len < digits {
                        exp10 -= 1;
                    } else {
                        return Scientific {
                            negative: self.negative,
                            digits: n.to_str_radix(10),
                            exponent: exp10,
                        };
                    }
                }
            }
            _ => panic!("to_scientific on a non-finite value"),
        }
    }

    /// Correctly rounded decimal text with `digits` significant digits.
    ///
    /// Positional notation is used when the decimal exponent lies in
    /// `[-4, digits)`, otherwise `d.ddde<exp>`. Trailing zeros are kept, so
    /// `1.0` at 5 digits prints `1.0000`.
    pub fn to_decimal_string(&self, digits: usize) -> String {
        match self.category {
            Category::Nan => return "nan".into(),
            Category::Infinite => {
                return if self.negative { "-inf".into() } else { "inf".into() };
            }
            _ => {}
        }
        let sci = self.to_scientific(digits);
        let sign = if sci.negative { "-" } else { "" };
        let e = sci.exponent;
        if e < -4 || e >= digits as i64 {
            return sci.to_e_notation();
        }
        let d = &sci.digits;
        if e >= 0 {
            let split = (e + 1) as usize;
            let (int, frac) = d.split_at(split);
            if frac.is_empty() {
                format!("{sign}{int}")
            } else {
                format!("{sign}{int}.{frac}")
            }
        } else {
            let zeros = "0".repeat((-e - 1) as usize);
            format!("{sign}0.{zeros}{d}")
        }
    }

    /// The exact, finite decimal expansion of a finite value.
    pub fn to_decimal_exact(&self) -> String {
        match self.category {
            Category::Normal => {}
            Category::Zero => return if self.negative { "-0".into() } else { "0".into() },
            _ => return self.to_decimal_string(1),
        }
        let sign = if self.negative { "-" } else { "" };
        let (mag, scale) = self.trimmed();
        if scale >= 0 {
            return format!("{sign}{}", mag << scale as usize);
        }
        // mag * 2^scale = mag * 5^-scale / 10^-scale
        let frac_digits = (-scale) as usize;
        let n = (mag * BigUint::from(5u32).pow(frac_digits as u64)).to_str_radix(10);
        let padded = if n.len() <= frac_digits {
            format!("{}{}", "0".repeat(frac_digits - n.len() + 1), n)
        } else {
            n
        };
        let (int, frac) = padded.split_at(padded.len() - frac_digits);
        format!("{sign}{int}.{frac}")
    }
}

/// `round_half_even(mag * 2^scale * 10^k)`.
fn scaled_digits(mag: &BigUint, scale: i64, k: i64) -> BigUint {
    let mut num = mag.clone();
    let mut den = BigUint::one();
    if scale >= 0 {
        num <<= scale as usize;
    } else {
        den <<= (-scale) as usize;
    }
    if k >= 0 {
        num *= pow10(k as u64);
    } else {
        den *= pow10((-k) as u64);
    }
    let (q, r) = num.div_rem(&den);
    let twice = r << 1usize;
    if twice > den || (twice == den && q.is_odd()) {
        q + 1u32
    } else {
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary32_tenth() {
        let v = MpFloat::from_decimal_string("0.1", 24).unwrap();
        assert_eq!(v.to_decimal_string(27), "0.100000001490116119384765625");
        assert_eq!(v.to_decimal_exact(), "0.100000001490116119384765625");
    }

    #[test]
    fn printing_layouts() {
        assert_eq!(MpFloat::one(53).to_decimal_string(5), "1.0000");
        assert_eq!(MpFloat::zero(53).to_decimal_string(3), "0.00");
        assert_eq!(MpFloat::from_i64(1000, 53).to_decimal_string(4), "1000");
        let err = MpFloat::from_decimal_string("9.710693359375e-5", 200).unwrap();
        assert_eq!(err.to_decimal_string(13), "9.710693359375e-5");
        assert_eq!(MpFloat::from_f64(-0.5).to_decimal_string(3), "-0.500");
        assert_eq!(MpFloat::from_f64(1.5e-4).to_decimal_string(2), "0.00015");
        assert_eq!(MpFloat::from_f64(1.5e-7).to_decimal_string(2), "1.5e-7");
        assert_eq!(MpFloat::infinity(53, true).to_decimal_string(3), "-inf");
    }

    #[test]
    fn rounding_carries_into_new_digit() {
        let v = MpFloat::from_decimal_string("9.9996", 53).unwrap();
        assert_eq!(v.to_decimal_string(4), "10.00");
        let s = MpFloat::from_f64(6_755_399_441_055_745.0).to_scientific(15);
        assert_eq!(s.to_trace_string(), "6.75539944105574 * 10^15");
    }

    #[test]
    fn half_even_in_decimal() {
        assert_eq!(MpFloat::from_f64(0.125).to_decimal_string(2), "0.12");
        assert_eq!(MpFloat::from_f64(0.375).to_decimal_string(2), "0.38");
    }

    #[test]
    fn hex_literals() {
        let a = MpFloat::from_hex_string("0x1.8p52", 53).unwrap();
        let b = MpFloat::from_decimal_string("6755399441055744", 53).unwrap();
        assert_eq!(a, b);
        let c = MpFloat::parse_literal("-0x1.71547652b82fep0", 53).unwrap();
        assert_eq!(c.to_f64(), -std::f64::consts::LOG2_E);
        assert!(MpFloat::parse_literal("0x", 53).is_err());
    }

    #[test]
    fn three_p42_is_one_and_a_half_times_two_to_43() {
        let v = MpFloat::from_decimal_string("13194139533312.0", 53).unwrap();
        let expect = MpFloat::from_hex_string("0x1.8p43", 53).unwrap();
        assert_eq!(v, expect);
    }

    #[test]
    fn malformed_text() {
        for bad in ["", "-", "1.", ".5", "1e", "1e+", "abc", "1.2.3", "0x1p", "1e5x"] {
            assert!(MpFloat::parse_literal(bad, 53).is_err(), "{bad:?} should not parse");
        }
        assert!(MpFloat::from_decimal_string("1e999999", 53).is_err());
    }

    #[test]
    fn exact_expansion() {
        assert_eq!(MpFloat::from_f64(-0.75).to_decimal_exact(), "-0.75");
        assert_eq!(MpFloat::from_f64(1024.0).to_decimal_exact(), "1024");
        assert_eq!(
            MpFloat::from_f64(0.1).to_decimal_exact(),
            "0.1000000000000000055511151231257827021181583404541015625"
        );
    }
}
