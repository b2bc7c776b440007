//! Arbitrary-precision modular arithmetic and probabilistic prime generation.
//!
//! Everything here is a pure function of its inputs plus an explicitly passed
//! random source, so whole protocol runs replay bit-exactly under a fixed seed.

use num_bigint::{BigInt, BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::Rng;

use crate::error::MathError;

/// Parameters for prime generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrimeParams {
    /// Exact bit length of the generated prime.
    pub bit_length: u64,
    /// Number of random Miller-Rabin rounds for candidates above 64 bits.
    pub miller_rabin_rounds: u32,
}

impl PrimeParams {
    pub fn new(bit_length: u64) -> Self {
        PrimeParams {
            bit_length,
            miller_rabin_rounds: 40,
        }
    }
}

/// `base^exp mod modulus`. Fails for a modulus below 2.
pub fn mod_pow(base: &BigUint, exp: &BigUint, modulus: &BigUint) -> Result<BigUint, MathError> {
    if *modulus < BigUint::from(2u32) {
        return Err(MathError::InvalidModulus);
    }
    Ok(base.modpow(exp, modulus))
}

/// Multiplicative inverse of `a` modulo `modulus`, via the extended Euclidean
/// algorithm. A non-invertible `a` signals bad key material or a zero share.
pub fn mod_inv(a: &BigUint, modulus: &BigUint) -> Result<BigUint, MathError> {
    if *modulus < BigUint::from(2u32) {
        return Err(MathError::InvalidModulus);
    }
    let a = BigInt::from(a % modulus);
    let m = BigInt::from(modulus.clone());
    let e = a.extended_gcd(&m);
    if !e.gcd.is_one() {
        return Err(MathError::NotInvertible);
    }
    let inv = e.x.mod_floor(&m);
    Ok(inv.to_biguint().expect("mod_floor of positive modulus is nonnegative"))
}

/// Additive inverse of `a` modulo `modulus`.
pub fn mod_neg(a: &BigUint, modulus: &BigUint) -> BigUint {
    let r = a % modulus;
    if r.is_zero() {
        r
    } else {
        modulus - r
    }
}

const SMALL_PRIMES: [u32; 25] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
];

/// Bases that make Miller-Rabin deterministic for all candidates below 2^64.
const DETERMINISTIC_WITNESSES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn miller_rabin_witness(n: &BigUint, base: &BigUint, d: &BigUint, s: u64) -> bool {
    // Returns true if `base` witnesses n composite.
    let n_minus_1 = n - 1u32;
    let mut x = base.modpow(d, n);
    if x.is_one() || x == n_minus_1 {
        return false;
    }
    for _ in 1..s {
        x = x.modpow(&BigUint::from(2u32), n);
        if x == n_minus_1 {
            return false;
        }
    }
    true
}

/// Probabilistic primality test: deterministic witness set below 64 bits,
/// `rounds` random bases otherwise.
pub fn is_prime<R: Rng>(n: &BigUint, rounds: u32, rng: &mut R) -> bool {
    if *n < BigUint::from(2u32) {
        return false;
    }
    for p in SMALL_PRIMES {
        let p = BigUint::from(p);
        if *n == p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - 1u32;
    let s = n_minus_1.trailing_zeros().expect("n > 2 is odd here");
    let d = &n_minus_1 >> s;

    if n.bits() <= 64 {
        for w in DETERMINISTIC_WITNESSES {
            let w = BigUint::from(w);
            if miller_rabin_witness(n, &w, &d, s) {
                return false;
            }
        }
        return true;
    }
    for _ in 0..rounds {
        let base = rng.gen_biguint_range(&BigUint::from(2u32), &n_minus_1);
        if miller_rabin_witness(n, &base, &d, s) {
            return false;
        }
    }
    true
}

/// Generates a prime of exactly `params.bit_length` bits. Loops until found.
pub fn gen_prime<R: Rng>(params: &PrimeParams, rng: &mut R) -> BigUint {
    assert!(params.bit_length >= 2, "prime bit length must be at least 2");
    loop {
        let mut candidate = rng.gen_biguint(params.bit_length);
        candidate.set_bit(params.bit_length - 1, true);
        candidate.set_bit(0, true);
        if is_prime(&candidate, params.miller_rabin_rounds, rng) {
            return candidate;
        }
    }
}
