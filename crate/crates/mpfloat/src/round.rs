use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::{ExponentRange, Format, MpFloat, BINARY64_EMAX, BINARY64_EMIN, EXPONENT_LIMIT};

/// Lowest bit position a value may occupy under `fmt`, given the position of
/// its leading bit.
pub(crate) fn lsb_position(top: i64, fmt: Format) -> i64 {
    let p = i64::from(fmt.precision);
    let lsb = top - p + 1;
    match fmt.range {
        ExponentRange::Unbounded => lsb,
        ExponentRange::Binary64 => lsb.max(BINARY64_EMIN - p + 1),
    }
}

/// Rounds `(-1)^negative * (magnitude + f) * 2^scale` to nearest-even at `fmt`,
/// where `f` is `0` when `sticky` is false and lies strictly in `(0, 1)`
/// otherwise.
///
/// A sticky remainder is only meaningful when `magnitude` carries at least one
/// bit below the rounding position, i.e. `magnitude.bits() > precision`.
pub(crate) fn round_magnitude(
    negative: bool,
    mut magnitude: BigUint,
    mut scale: i64,
    sticky: bool,
    fmt: Format,
) -> MpFloat {
    let p = fmt.precision;
    assert!(p >= 2, "precision must be at least 2 bits");
    if magnitude.is_zero() {
        debug_assert!(!sticky, "sticky remainder on a zero magnitude");
        return zero(negative, p);
    }
    if sticky {
        debug_assert!(magnitude.bits() > u64::from(p));
        magnitude = (magnitude << 1usize) | BigUint::one();
        scale -= 1;
    }
    let top = scale + magnitude.bits() as i64 - 1;
    let lsb = lsb_position(top, fmt);

    let kept = if lsb <= scale {
        magnitude << (scale - lsb) as usize
    } else {
        let shift = (lsb - scale) as u64;
        let kept = &magnitude >> shift as usize;
        // Round bit and the bits below it decide the direction.
        let round_bit = magnitude.bit(shift - 1);
        let below = magnitude.trailing_zeros().is_some_and(|tz| tz < shift - 1);
        if round_bit && (below || kept.bit(0)) {
            kept + 1u32
        } else {
            kept
        }
    };
    if kept.is_zero() {
        return zero(negative, p);
    }

    let top = lsb + kept.bits() as i64 - 1;
    let overflow = match fmt.range {
        ExponentRange::Unbounded => top > EXPONENT_LIMIT,
        ExponentRange::Binary64 => top > BINARY64_EMAX,
    };
    if overflow {
        return MpFloat::infinity(p, negative);
    }
    if top < -EXPONENT_LIMIT {
        return zero(negative, p);
    }
    // A rounding carry leaves a power of two one bit wider than `p`.
    let kept = if kept.bits() > u64::from(p) {
        kept >> 1usize
    } else {
        kept
    };
    let mantissa = &kept << (u64::from(p) - kept.bits()) as usize;
    MpFloat::new_normal(negative, top, mantissa, p)
}

fn zero(negative: bool, precision: u32) -> MpFloat {
    if negative {
        MpFloat::neg_zero(precision)
    } else {
        MpFloat::zero(precision)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_int(v: u64, p: u32) -> u64 {
        let r = round_magnitude(false, BigUint::from(v), 0, false, Format::new(p));
        r.to_i64_exact().unwrap() as u64
    }

    #[test]
    fn ties_go_to_even() {
        // 2 bits: representable integers near 5 are 4, 6.
        assert_eq!(round_int(5, 2), 4);
        assert_eq!(round_int(7, 2), 8);
        assert_eq!(round_int(0b1011, 3), 0b1100);
        assert_eq!(round_int(0b1001, 3), 0b1000);
        assert_eq!(round_int(0b1101, 3), 0b1100);
    }

    #[test]
    fn sticky_breaks_ties_upward() {
        let r = round_magnitude(false, BigUint::from(0b1001u32), 0, true, Format::new(3));
        assert_eq!(r.to_i64_exact(), Some(0b1010));
    }

    #[test]
    fn binary64_subnormal_and_overflow() {
        let min_sub = round_magnitude(false, BigUint::one(), -1074, false, Format::BINARY64);
        assert_eq!(min_sub.to_binary64_bits().unwrap(), 1);
        // Half of the smallest subnormal ties to zero.
        let half = round_magnitude(false, BigUint::one(), -1075, false, Format::BINARY64);
        assert!(half.is_zero());
        let three_halves = round_magnitude(false, BigUint::from(3u32), -1076, false, Format::BINARY64);
        assert_eq!(three_halves.to_binary64_bits().unwrap(), 1);
        let big = round_magnitude(true, BigUint::one(), 1024, false, Format::BINARY64);
        assert!(big.is_infinite() && big.is_sign_negative());
    }

    #[test]
    fn unbounded_range_keeps_huge_exponents() {
        let big = round_magnitude(false, BigUint::one(), 5000, false, Format::new(53));
        assert_eq!(big.exponent(), Some(5000));
        let beyond = round_magnitude(false, BigUint::one(), EXPONENT_LIMIT + 1, false, Format::new(53));
        assert!(beyond.is_infinite());
    }
}
