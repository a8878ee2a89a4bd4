//! Arbitrary-precision binary floating point.
//!
//! An [`MpFloat`] is a sign, an unbounded exponent and a mantissa of exactly
//! `precision` bits with the top bit set. Every arithmetic operation computes
//! the exact mathematical result and rounds once, to nearest with ties to even.
//!
//! Two exponent policies are supported through [`ExponentRange`]:
//!
//! * [`ExponentRange::Unbounded`]: only the mantissa width limits the value.
//! * [`ExponentRange::Binary64`]: IEEE 754 binary64 exponent limits, with
//!   gradual underflow (subnormals) and overflow to infinity. At precision 53
//!   this is bit-for-bit IEEE double arithmetic.

mod arith;
mod binary64;
mod decimal;
mod error;
mod relerr;
mod round;

use std::fmt;

use num_bigint::BigUint;
use num_traits::Zero;

pub use crate::decimal::Scientific;
pub use crate::error::MpError;
pub use crate::relerr::relative_error;

/// Significand width of IEEE binary64.
pub const BINARY64_PRECISION: u32 = 53;
/// Smallest normal binary64 exponent.
pub const BINARY64_EMIN: i64 = -1022;
/// Largest finite binary64 exponent.
pub const BINARY64_EMAX: i64 = 1023;

/// Exponents of unbounded values are clamped to this magnitude; beyond it a
/// result overflows to infinity or underflows to zero.
pub const EXPONENT_LIMIT: i64 = 1 << 31;

/// Exponent policy applied when rounding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum ExponentRange {
    #[default]
    Unbounded,
    /// IEEE binary64 limits: `emin = -1022`, `emax = 1023`, subnormals below.
    Binary64,
}

/// Target of a rounding step: mantissa width plus exponent policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Format {
    pub precision: u32,
    pub range: ExponentRange,
}

impl Format {
    /// IEEE binary64.
    pub const BINARY64: Format = Format {
        precision: BINARY64_PRECISION,
        range: ExponentRange::Binary64,
    };

    /// Unbounded exponent at the given precision.
    pub const fn new(precision: u32) -> Self {
        Format {
            precision,
            range: ExponentRange::Unbounded,
        }
    }

    pub const fn with_range(precision: u32, range: ExponentRange) -> Self {
        Format { precision, range }
    }
}

impl From<u32> for Format {
    fn from(precision: u32) -> Self {
        Format::new(precision)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Category {
    Zero,
    Normal,
    Infinite,
    Nan,
}

/// A binary floating-point value of arbitrary precision.
///
/// For the normal category the represented value is
/// `(-1)^negative * mantissa * 2^(exponent - precision + 1)` with
/// `2^(precision-1) <= mantissa < 2^precision`.
///
/// Equality (`==`) is structural: it distinguishes `+0` from `-0` and
/// compares the precision tag. Use [`MpFloat::compare`] or
/// [`MpFloat::same_value`] for numeric comparisons.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct MpFloat {
    category: Category,
    negative: bool,
    exponent: i64,
    mantissa: BigUint,
    precision: u32,
}

impl MpFloat {
    pub fn zero(precision: u32) -> Self {
        Self::special(Category::Zero, false, precision)
    }

    pub fn neg_zero(precision: u32) -> Self {
        Self::special(Category::Zero, true, precision)
    }

    pub fn infinity(precision: u32, negative: bool) -> Self {
        Self::special(Category::Infinite, negative, precision)
    }

    /// The canonical quiet NaN.
    pub fn nan(precision: u32) -> Self {
        Self::special(Category::Nan, false, precision)
    }

    pub fn one(precision: u32) -> Self {
        Self::from_u64(1, precision)
    }

    fn special(category: Category, negative: bool, precision: u32) -> Self {
        assert!(precision >= 2, "precision must be at least 2 bits");
        MpFloat {
            category,
            negative: negative && category != Category::Nan,
            exponent: 0,
            mantissa: BigUint::zero(),
            precision,
        }
    }

    /// Rounds `(-1)^negative * magnitude * 2^scale` to `fmt`.
    pub fn from_parts(negative: bool, magnitude: BigUint, scale: i64, fmt: impl Into<Format>) -> Self {
        round::round_magnitude(negative, magnitude, scale, false, fmt.into())
    }

    /// Rounds an integer to `fmt`.
    pub fn from_i64(value: i64, fmt: impl Into<Format>) -> Self {
        Self::from_parts(value < 0, BigUint::from(value.unsigned_abs()), 0, fmt)
    }

    pub fn from_u64(value: u64, fmt: impl Into<Format>) -> Self {
        Self::from_parts(false, BigUint::from(value), 0, fmt)
    }

    /// Exact conversion of a host double (precision 53).
    pub fn from_f64(value: f64) -> Self {
        Self::from_binary64_bits(value.to_bits())
    }

    /// Rounds to binary64 and returns the host double.
    pub fn to_f64(&self) -> f64 {
        let rounded = self.round_to(Format::BINARY64);
        f64::from_bits(
            rounded
                .to_binary64_bits()
                .expect("binary64-rounded value is representable"),
        )
    }

    pub fn category(&self) -> Category {
        self.category
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    /// Sign bit. Always `false` for NaN.
    pub fn is_sign_negative(&self) -> bool {
        self.negative
    }

    /// Exponent of the leading mantissa bit (normal values only).
    pub fn exponent(&self) -> Option<i64> {
        (self.category == Category::Normal).then_some(self.exponent)
    }

    /// Mantissa of exactly `precision` bits (normal values only).
    pub fn mantissa(&self) -> Option<&BigUint> {
        (self.category == Category::Normal).then_some(&self.mantissa)
    }

    pub fn is_zero(&self) -> bool {
        self.category == Category::Zero
    }

    pub fn is_nan(&self) -> bool {
        self.category == Category::Nan
    }

    pub fn is_infinite(&self) -> bool {
        self.category == Category::Infinite
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.category, Category::Zero | Category::Normal)
    }

    /// Exponent of the mantissa's least significant bit.
    pub(crate) fn scale(&self) -> i64 {
        self.exponent - i64::from(self.precision) + 1
    }

    /// Magnitude with trailing zero bits stripped, and its scale.
    pub(crate) fn trimmed(&self) -> (BigUint, i64) {
        let tz = self.mantissa.trailing_zeros().unwrap_or(0);
        (&self.mantissa >> tz, self.scale() + tz as i64)
    }

    /// Sign, odd-or-zero-trailing magnitude and scale of a normal value:
    /// `(-1)^sign * magnitude * 2^scale`, with trailing zero bits stripped.
    pub fn to_parts(&self) -> Option<(bool, BigUint, i64)> {
        (self.category == Category::Normal).then(|| {
            let (mag, scale) = self.trimmed();
            (self.negative, mag, scale)
        })
    }

    /// Number of significant bits (position of the lowest set bit counted
    /// from the leading bit). Zero for non-normal values.
    pub fn significant_bits(&self) -> u32 {
        if self.category != Category::Normal {
            return 0;
        }
        let tz = self.mantissa.trailing_zeros().unwrap_or(0) as u32;
        self.precision - tz
    }

    /// Nearest value at `fmt`, ties to even.
    pub fn round_to(&self, fmt: impl Into<Format>) -> Self {
        let fmt = fmt.into();
        match self.category {
            Category::Normal => round::round_magnitude(self.negative, self.mantissa.clone(), self.scale(), false, fmt),
            _ => Self::special(self.category, self.negative, fmt.precision),
        }
    }

    /// Exactly the same value with a wider precision tag.
    ///
    /// # Panics
    /// If `precision` is narrower than the current precision.
    pub fn extend(&self, precision: u32) -> Self {
        assert!(
            precision >= self.precision,
            "extend to {precision} bits from {} bits",
            self.precision
        );
        let mut out = self.clone();
        out.precision = precision;
        if out.category == Category::Normal {
            out.mantissa <<= (precision - self.precision) as usize;
        }
        out
    }

    /// Multiplication by `2^k`, exact unless the exponent limit is crossed.
    pub fn mul_pow2(&self, k: i64) -> Self {
        if self.category != Category::Normal {
            return self.clone();
        }
        let mut out = self.clone();
        out.exponent += k;
        if out.exponent > EXPONENT_LIMIT {
            return Self::infinity(self.precision, self.negative);
        }
        if out.exponent < -EXPONENT_LIMIT {
            return Self::special(Category::Zero, self.negative, self.precision);
        }
        out
    }

    /// Integer value if `self` is integral and fits in `i64`.
    pub fn to_i64_exact(&self) -> Option<i64> {
        match self.category {
            Category::Zero => Some(0),
            Category::Normal => {
                let (mag, scale) = self.trimmed();
                if scale < 0 || mag.bits() as i64 + scale > 63 {
                    return None;
                }
                let mag: u64 = (mag << scale as usize).try_into().ok()?;
                let v = mag as i64;
                Some(if self.negative { -v } else { v })
            }
            _ => None,
        }
    }

    /// `true` when the value is an integer (zero included).
    pub fn is_integer(&self) -> bool {
        match self.category {
            Category::Zero => true,
            Category::Normal => self.trimmed().1 >= 0,
            _ => false,
        }
    }

    fn new_normal(negative: bool, exponent: i64, mantissa: BigUint, precision: u32) -> Self {
        debug_assert_eq!(mantissa.bits(), u64::from(precision));
        MpFloat {
            category: Category::Normal,
            negative,
            exponent,
            mantissa,
            precision,
        }
    }
}

impl fmt::Debug for MpFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = decimal::digits_for_precision(self.precision);
        write!(f, "{}@{}", self.to_decimal_string(digits), self.precision)
    }
}

/// Shortest-safe decimal: enough digits to identify the value at its precision.
impl fmt::Display for MpFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = decimal::digits_for_precision(self.precision);
        f.write_str(&self.to_decimal_string(digits))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extend_then_round_is_identity() {
        let tenth = MpFloat::from_decimal_string("0.1", Format::BINARY64).unwrap();
        let wide = tenth.extend(120);
        assert_eq!(wide.precision(), 120);
        assert!(wide.same_value(&tenth));
        assert_eq!(wide.round_to(Format::BINARY64), tenth);
        assert_eq!(tenth.extend(53), tenth);
    }

    #[test]
    fn extended_tenth_differs_from_wide_tenth() {
        let tenth53 = MpFloat::from_decimal_string("0.1", 53).unwrap();
        let tenth120 = MpFloat::from_decimal_string("0.1", 120).unwrap();
        assert!(!tenth53.extend(120).same_value(&tenth120));
    }

    #[test]
    fn to_i64_exact_rejects_fractions() {
        assert_eq!(MpFloat::from_i64(-42, 53).to_i64_exact(), Some(-42));
        assert_eq!(MpFloat::from_f64(2.5).to_i64_exact(), None);
        assert_eq!(MpFloat::from_f64(2f64.powi(70)).to_i64_exact(), None);
    }

    #[test]
    fn significant_bits_counts_to_lowest_set_bit() {
        assert_eq!(MpFloat::from_f64(1.0).significant_bits(), 1);
        assert_eq!(MpFloat::from_f64(13.75).significant_bits(), 6);
    }
}
