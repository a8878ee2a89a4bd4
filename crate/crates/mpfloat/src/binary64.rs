use num_bigint::BigUint;

use crate::{Category, MpError, MpFloat, BINARY64_EMAX, BINARY64_PRECISION};

const FRACTION_BITS: u32 = 52;
const FRACTION_MASK: u64 = (1 << FRACTION_BITS) - 1;
const EXPONENT_BIAS: i64 = 1023;
const CANONICAL_NAN: u64 = 0x7FF8_0000_0000_0000;

impl MpFloat {
    /// Decodes an IEEE binary64 bit pattern exactly (precision 53).
    ///
    /// Every NaN pattern maps to the canonical NaN.
    pub fn from_binary64_bits(bits: u64) -> MpFloat {
        let negative = bits >> 63 != 0;
        let biased = ((bits >> FRACTION_BITS) & 0x7FF) as i64;
        let fraction = bits & FRACTION_MASK;
        let p = BINARY64_PRECISION;
        match (biased, fraction) {
            (0, 0) if negative => MpFloat::neg_zero(p),
            (0, 0) => MpFloat::zero(p),
            (0x7FF, 0) => MpFloat::infinity(p, negative),
            (0x7FF, _) => MpFloat::nan(p),
            // Subnormal: fraction * 2^-1074, normalized into 53 bits.
            (0, f) => MpFloat::from_parts(negative, BigUint::from(f), -1074, p),
            (e, f) => MpFloat::new_normal(negative, e - EXPONENT_BIAS, BigUint::from(f | (1 << FRACTION_BITS)), p),
        }
    }

    /// Encodes as an IEEE binary64 bit pattern.
    ///
    /// Fails when the value needs more than 53 significant bits or lies
    /// outside the binary64 exponent range (including below the subnormal
    /// grid). NaN encodes as the canonical quiet NaN.
    pub fn to_binary64_bits(&self) -> Result<u64, MpError> {
        let sign = u64::from(self.negative) << 63;
        match self.category {
            Category::Zero => Ok(sign),
            Category::Infinite => Ok(sign | 0x7FF0_0000_0000_0000),
            Category::Nan => Ok(CANONICAL_NAN),
            Category::Normal => {
                let not_representable = || MpError::NotRepresentable(self.to_decimal_string(20));
                let top = self.exponent;
                let (mag, lowest) = self.trimmed();
                if top > BINARY64_EMAX || lowest < -1074 {
                    return Err(not_representable());
                }
                if top >= -1022 {
                    if mag.bits() > u64::from(BINARY64_PRECISION) {
                        return Err(not_representable());
                    }
                    let significand: u64 = (mag << (lowest - (top - 52)) as usize)
                        .try_into()
                        .map_err(|_| not_representable())?;
                    let biased = (top + EXPONENT_BIAS) as u64;
                    Ok(sign | (biased << FRACTION_BITS) | (significand & FRACTION_MASK))
                } else {
                    let fraction: u64 = (mag << (lowest + 1074) as usize)
                        .try_into()
                        .map_err(|_| not_representable())?;
                    Ok(sign | fraction)
                }
            }
        }
    }

    /// High 32-bit word of the binary64 encoding (sign, exponent and the top
    /// 20 fraction bits).
    pub fn binary64_hi(&self) -> Result<u32, MpError> {
        Ok((self.to_binary64_bits()? >> 32) as u32)
    }

    /// Low 32-bit word of the binary64 encoding.
    pub fn binary64_lo(&self) -> Result<u32, MpError> {
        Ok(self.to_binary64_bits()? as u32)
    }

    /// Builds a binary64 value from its `{lo, hi}` word pair.
    pub fn from_binary64_words(lo: u32, hi: u32) -> MpFloat {
        MpFloat::from_binary64_bits((u64::from(hi) << 32) | u64::from(lo))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Format;

    #[test]
    fn decodes_paper_constants() {
        let x = MpFloat::from_binary64_bits(13.75f64.to_bits());
        assert_eq!(x.to_decimal_exact(), "13.75");
        let three51 = MpFloat::from_binary64_bits(0x4338_0000_0000_0000);
        assert_eq!(three51.to_i64_exact(), Some(6_755_399_441_055_744));
        assert!(MpFloat::from_binary64_bits(0).is_zero());
        assert!(!MpFloat::from_binary64_bits(0).is_sign_negative());
    }

    #[test]
    fn encodes_paper_constants() {
        let v = MpFloat::from_i64(6_755_399_441_055_744, 53);
        assert_eq!(v.to_binary64_bits().unwrap(), 0x4338_0000_0000_0000);
        assert_eq!(MpFloat::zero(53).to_binary64_bits().unwrap(), 0);
        let tenth = MpFloat::from_decimal_string("0.1", 53).unwrap();
        assert_eq!(tenth.to_binary64_bits().unwrap(), 0x3FB9_9999_9999_999A);
    }

    #[test]
    fn wide_tags_encode_when_exact() {
        let one = MpFloat::one(120);
        assert_eq!(one.to_binary64_bits().unwrap(), 1f64.to_bits());
        let third = MpFloat::one(120).div(&MpFloat::from_i64(3, 120), 120);
        assert!(matches!(third.to_binary64_bits(), Err(MpError::NotRepresentable(_))));
        let huge = MpFloat::one(53).mul_pow2(1024);
        assert!(huge.to_binary64_bits().is_err());
        let tiny = MpFloat::one(53).mul_pow2(-1075);
        assert!(tiny.to_binary64_bits().is_err());
    }

    #[test]
    fn subnormals_round_trip() {
        for bits in [
            1u64,
            0x000F_FFFF_FFFF_FFFF,
            0x8000_0000_0000_0001,
            0x0010_0000_0000_0000,
        ] {
            let v = MpFloat::from_binary64_bits(bits);
            assert_eq!(v.to_binary64_bits().unwrap(), bits);
            assert_eq!(v.round_to(Format::BINARY64), v);
        }
    }

    #[test]
    fn word_accessors() {
        let three51 = MpFloat::from_binary64_words(0, 0x4338_0000);
        assert_eq!(three51.binary64_hi().unwrap(), 0x4338_0000);
        assert_eq!(three51.binary64_lo().unwrap(), 0);
        let nan = MpFloat::from_binary64_bits(0x7FF0_0000_0000_0001);
        assert_eq!(nan.to_binary64_bits().unwrap(), CANONICAL_NAN);
    }
}
