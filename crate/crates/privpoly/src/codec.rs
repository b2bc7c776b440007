//! Fixed-point encoding of reals into the public prime field `Z_Omega`.
//!
//! A real `v` at scale exponent `e` is stored as the residue of
//! `round(v * L^e) mod Omega` with `L = 2^frac_bits`. Decoding takes the
//! symmetric lift in `(-Omega/2, Omega/2)` and divides the scale back out.
//! Multiplying encodings adds scale exponents; summation requires equal
//! exponents and is rejected otherwise, so homomorphically combined terms
//! stay commensurable.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};

use crate::error::CodecError;

/// Public field parameters: the prime `Omega` and the fractional precision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldParams {
    omega: BigUint,
    frac_bits: u32,
}

/// A field residue together with the scale exponent it was encoded at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedValue {
    residue: BigUint,
    scale_exp: u32,
}

impl FieldParams {
    pub fn new(omega: BigUint, frac_bits: u32) -> Self {
        FieldParams { omega, frac_bits }
    }

    pub fn omega(&self) -> &BigUint {
        &self.omega
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    /// `L^e` as an integer.
    pub fn scale_factor(&self, scale_exp: u32) -> BigUint {
        BigUint::one() << (self.frac_bits as u64 * scale_exp as u64)
    }

    /// Reduces a signed integer into `[0, Omega)`.
    pub fn residue_of(&self, z: &BigInt) -> BigUint {
        let omega = BigInt::from(self.omega.clone());
        let r = ((z % &omega) + &omega) % &omega;
        r.to_biguint().expect("reduced residue is nonnegative")
    }

    /// The unique representative of `residue` in `(-Omega/2, Omega/2)`.
    pub fn symmetric_lift(&self, residue: &BigUint) -> BigInt {
        let half = &self.omega >> 1;
        if residue > &half {
            BigInt::from(residue.clone()) - BigInt::from(self.omega.clone())
        } else {
            BigInt::from(residue.clone())
        }
    }

    fn fits(&self, z: &BigInt) -> bool {
        (z.magnitude() << 1u32) < self.omega
    }
}

impl EncodedValue {
    pub fn from_residue(residue: BigUint, scale_exp: u32) -> Self {
        EncodedValue { residue, scale_exp }
    }

    pub fn residue(&self) -> &BigUint {
        &self.residue
    }

    pub fn scale_exp(&self) -> u32 {
        self.scale_exp
    }
}

/// Encodes an exact rational at the given scale exponent.
pub fn encode_rational(
    v: &BigRational,
    params: &FieldParams,
    scale_exp: u32,
) -> Result<EncodedValue, CodecError> {
    let scaled = v * BigRational::from_integer(BigInt::from(params.scale_factor(scale_exp)));
    let z = scaled.round().to_integer();
    if !params.fits(&z) {
        return Err(CodecError::EncodingOverflow);
    }
    Ok(EncodedValue {
        residue: params.residue_of(&z),
        scale_exp,
    })
}

/// Encodes a real at the given scale exponent. Non-finite inputs overflow.
pub fn encode(v: f64, params: &FieldParams, scale_exp: u32) -> Result<EncodedValue, CodecError> {
    let r = BigRational::from_float(v).ok_or(CodecError::EncodingOverflow)?;
    encode_rational(&r, params, scale_exp)
}

/// Exact decoded value: symmetric lift divided by `L^scale_exp`.
pub fn decode_rational(ev: &EncodedValue, params: &FieldParams) -> BigRational {
    let z = params.symmetric_lift(&ev.residue);
    BigRational::new(z, BigInt::from(params.scale_factor(ev.scale_exp)))
}

pub fn decode(ev: &EncodedValue, params: &FieldParams) -> f64 {
    decode_rational(ev, params)
        .to_f64()
        .expect("decoded value fits f64 range for valid parameters")
}

/// Re-expresses `ev` at a coarser-grained (higher) scale exponent without
/// changing the represented value.
pub fn normalize_to_scale(
    ev: &EncodedValue,
    params: &FieldParams,
    target_exp: u32,
) -> Result<EncodedValue, CodecError> {
    if target_exp < ev.scale_exp {
        return Err(CodecError::ScaleBelowCurrent {
            current: ev.scale_exp,
            target: target_exp,
        });
    }
    if target_exp == ev.scale_exp {
        return Ok(ev.clone());
    }
    let z = params.symmetric_lift(&ev.residue)
        * BigInt::from(params.scale_factor(target_exp - ev.scale_exp));
    if !params.fits(&z) {
        return Err(CodecError::EncodingOverflow);
    }
    Ok(EncodedValue {
        residue: params.residue_of(&z),
        scale_exp: target_exp,
    })
}

/// Field addition; both operands must carry the same scale exponent.
pub fn add(a: &EncodedValue, b: &EncodedValue, params: &FieldParams) -> Result<EncodedValue, CodecError> {
    if a.scale_exp != b.scale_exp {
        return Err(CodecError::ScaleMismatch(a.scale_exp, b.scale_exp));
    }
    Ok(EncodedValue {
        residue: (&a.residue + &b.residue) % &params.omega,
        scale_exp: a.scale_exp,
    })
}

/// Field multiplication; scale exponents add.
pub fn mul(a: &EncodedValue, b: &EncodedValue, params: &FieldParams) -> EncodedValue {
    EncodedValue {
        residue: &a.residue * &b.residue % &params.omega,
        scale_exp: a.scale_exp + b.scale_exp,
    }
}
