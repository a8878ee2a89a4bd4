use std::cmp::Ordering;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};

use crate::round::{lsb_position, round_magnitude};
use crate::{Category, Format, MpFloat};

impl MpFloat {
    pub fn add(&self, rhs: &MpFloat, fmt: impl Into<Format>) -> MpFloat {
        add_signed(self, rhs, false, fmt.into())
    }

    pub fn sub(&self, rhs: &MpFloat, fmt: impl Into<Format>) -> MpFloat {
        add_signed(self, rhs, true, fmt.into())
    }

    pub fn mul(&self, rhs: &MpFloat, fmt: impl Into<Format>) -> MpFloat {
        let fmt = fmt.into();
        let negative = self.negative ^ rhs.negative;
        use Category::*;
        match (self.category, rhs.category) {
            (Nan, _) | (_, Nan) => MpFloat::nan(fmt.precision),
            (Infinite, Zero) | (Zero, Infinite) => MpFloat::nan(fmt.precision),
            (Infinite, _) | (_, Infinite) => MpFloat::infinity(fmt.precision, negative),
            (Zero, _) | (_, Zero) => signed_zero(negative, fmt.precision),
            (Normal, Normal) => round_magnitude(
                negative,
                &self.mantissa * &rhs.mantissa,
                self.scale() + rhs.scale(),
                false,
                fmt,
            ),
        }
    }

    pub fn div(&self, rhs: &MpFloat, fmt: impl Into<Format>) -> MpFloat {
        let fmt = fmt.into();
        let negative = self.negative ^ rhs.negative;
        use Category::*;
        match (self.category, rhs.category) {
            (Nan, _) | (_, Nan) => MpFloat::nan(fmt.precision),
            (Infinite, Infinite) | (Zero, Zero) => MpFloat::nan(fmt.precision),
            (Infinite, _) | (_, Zero) => MpFloat::infinity(fmt.precision, negative),
            (Zero, _) | (_, Infinite) => signed_zero(negative, fmt.precision),
            (Normal, Normal) => {
                let (num, num_scale) = self.trimmed();
                let (den, den_scale) = rhs.trimmed();
                let want = u64::from(fmt.precision) + 2 + den.bits();
                let k = want.saturating_sub(num.bits());
                let (q, r) = (num << k as usize).div_rem(&den);
                round_magnitude(negative, q, num_scale - den_scale - k as i64, !r.is_zero(), fmt)
            }
        }
    }

    pub fn sqrt(&self, fmt: impl Into<Format>) -> MpFloat {
        let fmt = fmt.into();
        match self.category {
            Category::Nan => MpFloat::nan(fmt.precision),
            Category::Zero => signed_zero(self.negative, fmt.precision),
            _ if self.negative => MpFloat::nan(fmt.precision),
            Category::Infinite => MpFloat::infinity(fmt.precision, false),
            Category::Normal => {
                let (mag, scale) = self.trimmed();
                let want = 2 * u64::from(fmt.precision) + 4;
                let mut k = want.saturating_sub(mag.bits()) as i64;
                if (scale - k).rem_euclid(2) != 0 {
                    k += 1;
                }
                let radicand = mag << k as usize;
                let root = radicand.sqrt();
                let exact = &root * &root == radicand;
                round_magnitude(false, root, (scale - k) / 2, !exact, fmt)
            }
        }
    }

    /// Greatest integer not above `self`, exact, at the same precision.
    pub fn floor(&self) -> MpFloat {
        if self.category != Category::Normal {
            return self.clone();
        }
        let scale = self.scale();
        if scale >= 0 {
            return self.clone();
        }
        let fmt = Format::new(self.precision);
        if self.exponent < 0 {
            return if self.negative {
                MpFloat::from_i64(-1, fmt)
            } else {
                MpFloat::zero(self.precision)
            };
        }
        let shift = (-scale) as usize;
        let mut int = &self.mantissa >> shift;
        let has_fraction = self.mantissa.trailing_zeros().is_some_and(|tz| (tz as usize) < shift);
        if self.negative && has_fraction {
            int += 1u32;
        }
        round_magnitude(self.negative, int, 0, false, fmt)
    }

    pub fn neg(&self) -> MpFloat {
        let mut out = self.clone();
        if out.category != Category::Nan {
            out.negative = !out.negative;
        }
        out
    }

    pub fn abs(&self) -> MpFloat {
        let mut out = self.clone();
        out.negative = false;
        out
    }

    /// Numeric ordering with `-0 == +0`; `None` when either side is NaN.
    pub fn compare(&self, other: &MpFloat) -> Option<Ordering> {
        use Category::*;
        match (self.category, other.category) {
            (Nan, _) | (_, Nan) => None,
            (Zero, Zero) => Some(Ordering::Equal),
            _ => {
                let ls = self.sign_rank();
                let rs = other.sign_rank();
                if ls != rs {
                    return Some(ls.cmp(&rs));
                }
                let mag = self.cmp_magnitude(other);
                Some(if ls < 0 { mag.reverse() } else { mag })
            }
        }
    }

    /// Numeric equality regardless of precision tag; NaN equals NaN.
    pub fn same_value(&self, other: &MpFloat) -> bool {
        if self.is_nan() || other.is_nan() {
            return self.is_nan() && other.is_nan();
        }
        self.compare(other) == Some(Ordering::Equal)
    }

    /// -1 for negative, 0 for zero, 1 for positive (infinities included).
    fn sign_rank(&self) -> i8 {
        match self.category {
            Category::Zero => 0,
            _ if self.negative => -1,
            _ => 1,
        }
    }

    /// Compares `|self|` with `|other|`; both non-NaN and non-zero.
    fn cmp_magnitude(&self, other: &MpFloat) -> Ordering {
        use Category::*;
        match (self.category, other.category) {
            (Infinite, Infinite) => Ordering::Equal,
            (Infinite, _) => Ordering::Greater,
            (_, Infinite) => Ordering::Less,
            _ => self.exponent.cmp(&other.exponent).then_with(|| {
                let (a, b) = aligned_mantissas(self, other);
                a.cmp(&b)
            }),
        }
    }
}

fn signed_zero(negative: bool, precision: u32) -> MpFloat {
    if negative {
        MpFloat::neg_zero(precision)
    } else {
        MpFloat::zero(precision)
    }
}

/// Mantissas widened to a common precision (same leading-bit exponent assumed
/// by the caller for meaningful comparison).
fn aligned_mantissas(a: &MpFloat, b: &MpFloat) -> (BigUint, BigUint) {
    match a.precision.cmp(&b.precision) {
        Ordering::Equal => (a.mantissa.clone(), b.mantissa.clone()),
        Ordering::Less => (&a.mantissa << (b.precision - a.precision) as usize, b.mantissa.clone()),
        Ordering::Greater => (a.mantissa.clone(), &b.mantissa << (a.precision - b.precision) as usize),
    }
}

fn add_signed(a: &MpFloat, b: &MpFloat, negate_b: bool, fmt: Format) -> MpFloat {
    let b_negative = b.negative ^ (negate_b && b.category != Category::Nan);
    use Category::*;
    match (a.category, b.category) {
        (Nan, _) | (_, Nan) => return MpFloat::nan(fmt.precision),
        (Infinite, Infinite) => {
            return if a.negative == b_negative {
                MpFloat::infinity(fmt.precision, a.negative)
            } else {
                MpFloat::nan(fmt.precision)
            };
        }
        (Infinite, _) => return MpFloat::infinity(fmt.precision, a.negative),
        (_, Infinite) => return MpFloat::infinity(fmt.precision, b_negative),
        (Zero, Zero) => return signed_zero(a.negative && b_negative, fmt.precision),
        (Zero, Normal) => {
            let mut r = b.round_to(fmt);
            if negate_b {
                r = r.neg();
            }
            return r;
        }
        (Normal, Zero) => return a.round_to(fmt),
        (Normal, Normal) => {}
    }

    // Order by leading-bit exponent so `big` dominates.
    let (big, big_neg, small, small_neg) = if a.exponent >= b.exponent {
        (a, a.negative, b, b_negative)
    } else {
        (b, b_negative, a, a.negative)
    };

    // A small operand lying entirely below every rounding boundary of the
    // result only matters through its sign; replace it by a single bit there.
    let p = i64::from(fmt.precision);
    let boundary = big
        .scale()
        .min(big.exponent - p - 1)
        .min(lsb_position(big.exponent - 1, fmt) - 1);
    let (small_mag, small_scale) = if small.exponent < boundary {
        (BigUint::one(), boundary - 1)
    } else {
        (small.mantissa.clone(), small.scale())
    };
    let (big_mag, big_scale) = (big.mantissa.clone(), big.scale());

    let scale = big_scale.min(small_scale);
    let big_mag = big_mag << (big_scale - scale) as usize;
    let small_mag = small_mag << (small_scale - scale) as usize;

    if big_neg == small_neg {
        round_magnitude(big_neg, big_mag + small_mag, scale, false, fmt)
    } else {
        match big_mag.cmp(&small_mag) {
            Ordering::Equal => MpFloat::zero(fmt.precision),
            Ordering::Greater => round_magnitude(big_neg, big_mag - small_mag, scale, false, fmt),
            Ordering::Less => round_magnitude(small_neg, small_mag - big_mag, scale, false, fmt),
        }
    }
}
