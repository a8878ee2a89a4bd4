use crate::{Format, MpFloat};

/// `|exact - approx| / |exact|` computed at `precision` bits.
///
/// Totalized: both zero gives `0`; a zero `exact` with a non-zero `approx`,
/// any NaN, or any infinity gives `+inf`, which exceeds every threshold.
/// Infinities that agree (same sign) give `0`.
pub fn relative_error(exact: &MpFloat, approx: &MpFloat, precision: u32) -> MpFloat {
    let fmt = Format::new(precision);
    if exact.is_nan() || approx.is_nan() {
        return MpFloat::infinity(precision, false);
    }
    if exact.is_infinite() || approx.is_infinite() {
        let agree =
            exact.is_infinite() && approx.is_infinite() && exact.is_sign_negative() == approx.is_sign_negative();
        return if agree {
            MpFloat::zero(precision)
        } else {
            MpFloat::infinity(precision, false)
        };
    }
    if exact.is_zero() {
        return if approx.is_zero() {
            MpFloat::zero(precision)
        } else {
            MpFloat::infinity(precision, false)
        };
    }
    let diff = exact.sub(approx, fmt).abs();
    diff.div(&exact.abs(), fmt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str, p: u32) -> MpFloat {
        MpFloat::from_decimal_string(s, p).unwrap()
    }

    #[test]
    fn accumulation_example() {
        let e = relative_error(&d("1000", 53), &d("999.90289306640625", 53), 256);
        assert_eq!(e.to_decimal_string(13), "9.710693359375e-5");
        assert_eq!(e.to_decimal_string(30), "9.71069335937500000000000000000e-5");
    }

    #[test]
    fn trace_example() {
        // Shadow of x * log2e at x = 0.45 is the exact 106-bit product.
        let log2e = MpFloat::from_f64(std::f64::consts::LOG2_E);
        let shadow = MpFloat::from_f64(0.45).mul(&log2e, 120);
        let e = relative_error(&shadow, &MpFloat::one(53), 128);
        assert_eq!(e.to_scientific(15).to_trace_string(), "5.40327067910990 * 10^-1");
    }

    #[test]
    fn conventions() {
        let x = d("2.5", 53);
        assert!(relative_error(&x, &x, 64).is_zero());
        assert!(relative_error(&MpFloat::zero(53), &MpFloat::neg_zero(53), 64).is_zero());
        assert!(relative_error(&MpFloat::zero(53), &x, 64).is_infinite());
        assert!(relative_error(&MpFloat::nan(53), &x, 64).is_infinite());
        assert!(relative_error(&x, &MpFloat::infinity(53, false), 64).is_infinite());
        let inf = MpFloat::infinity(53, true);
        assert!(relative_error(&inf, &inf, 64).is_zero());
    }
}
