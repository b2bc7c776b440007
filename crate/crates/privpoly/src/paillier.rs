//! Paillier keygen, encryption, decryption, and the two homomorphic
//! operators: ciphertext multiplication (plaintext addition) and ciphertext
//! exponentiation (plaintext scalar multiplication).

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::One;
use rand::Rng;

use crate::error::CryptoError;
use crate::modmath::{gen_prime, mod_inv, PrimeParams};

/// Key fingerprint so cross-key operations fail loudly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct KeyId(u64);

fn fingerprint(modulus: &BigUint) -> KeyId {
    let digits = modulus.to_u64_digits();
    KeyId(digits.first().copied().unwrap_or(0) ^ modulus.bits())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    modulus: BigUint,
    modulus_squared: BigUint,
    key_id: KeyId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecretKey {
    phi: BigUint,
    phi_inv: BigUint,
    key_id: KeyId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    value: BigUint,
    key_id: KeyId,
}

impl PublicKey {
    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    pub fn modulus_squared(&self) -> &BigUint {
        &self.modulus_squared
    }

    pub fn key_id(&self) -> KeyId {
        self.key_id
    }

    /// Big-endian bytes with a length prefix, for the simulator wire format.
    pub fn to_bytes(&self) -> Vec<u8> {
        prefix_bytes(&self.modulus)
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<PublicKey> {
        let (modulus, rest) = read_prefixed(bytes)?;
        if !rest.is_empty() {
            return None;
        }
        Some(PublicKey::from_modulus(modulus))
    }

    fn from_modulus(modulus: BigUint) -> PublicKey {
        let modulus_squared = &modulus * &modulus;
        let key_id = fingerprint(&modulus);
        PublicKey {
            modulus,
            modulus_squared,
            key_id,
        }
    }
}

impl Ciphertext {
    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn key_id(&self) -> KeyId {
        self.key_id
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        prefix_bytes(&self.value)
    }

    pub fn from_bytes(bytes: &[u8], pk: &PublicKey) -> Option<Ciphertext> {
        let (value, rest) = read_prefixed(bytes)?;
        if !rest.is_empty() || value >= pk.modulus_squared {
            return None;
        }
        Some(Ciphertext {
            value,
            key_id: pk.key_id,
        })
    }

    /// Serialized length in bytes, used by the simulator's byte counters.
    pub fn wire_len(&self) -> usize {
        4 + (self.value.bits() as usize + 7) / 8
    }
}

fn prefix_bytes(v: &BigUint) -> Vec<u8> {
    let body = v.to_bytes_be();
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

fn read_prefixed(bytes: &[u8]) -> Option<(BigUint, &[u8])> {
    if bytes.len() < 4 {
        return None;
    }
    let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
    if bytes.len() < 4 + len {
        return None;
    }
    Some((BigUint::from_bytes_be(&bytes[4..4 + len]), &bytes[4 + len..]))
}

/// Generates a key pair with a modulus of exactly `modulus_bits` bits.
///
/// A prime collision or a short product is regenerated internally and never
/// surfaced.
pub fn keygen<R: Rng>(modulus_bits: u64, rng: &mut R) -> (PublicKey, SecretKey) {
    assert!(modulus_bits >= 16, "modulus must be at least 16 bits");
    let prime_params = PrimeParams::new(modulus_bits / 2);
    loop {
        let p = gen_prime(&prime_params, rng);
        let q = gen_prime(&prime_params, rng);
        if p == q {
            continue;
        }
        let modulus = &p * &q;
        if modulus.bits() != modulus_bits {
            continue;
        }
        if let Some(pair) = keygen_from_primes(&p, &q) {
            return pair;
        }
    }
}

/// Builds a key pair from explicitly chosen primes.
///
/// Test hook for reproducible vectors (e.g. the toy modulus 35); secure runs
/// go through [`keygen`]. Returns `None` when `gcd(phi, modulus) != 1`.
pub fn keygen_from_primes(p: &BigUint, q: &BigUint) -> Option<(PublicKey, SecretKey)> {
    if p == q {
        return None;
    }
    let modulus = p * q;
    let phi = (p - 1u32) * (q - 1u32);
    if !modulus.gcd(&phi).is_one() {
        return None;
    }
    let phi_inv = mod_inv(&phi, &modulus).ok()?;
    let pk = PublicKey::from_modulus(modulus);
    let sk = SecretKey {
        phi,
        phi_inv,
        key_id: pk.key_id,
    };
    Some((pk, sk))
}

/// Encrypts `m` under `pk` with a fresh uniform `r` from `Z*_M`.
pub fn encrypt<R: Rng>(pk: &PublicKey, m: &BigUint, rng: &mut R) -> Result<Ciphertext, CryptoError> {
    // rejection-sample r from [1, M) with gcd(r, M) = 1
    let r = loop {
        let candidate = rng.gen_biguint_range(&BigUint::one(), &pk.modulus);
        if candidate.gcd(&pk.modulus).is_one() {
            break candidate;
        }
    };
    encrypt_with_r(pk, m, &r)
}

/// Encryption with an injected randomizer. Test hook for reproducible vectors.
pub fn encrypt_with_r(pk: &PublicKey, m: &BigUint, r: &BigUint) -> Result<Ciphertext, CryptoError> {
    if m >= &pk.modulus {
        return Err(CryptoError::MessageTooLarge);
    }
    // c = (1+M)^m * r^M mod M^2
    let m2 = &pk.modulus_squared;
    let g_pow = (BigUint::one() + &pk.modulus).modpow(m, m2);
    let r_pow = r.modpow(&pk.modulus, m2);
    Ok(Ciphertext {
        value: g_pow * r_pow % m2,
        key_id: pk.key_id,
    })
}

/// Decrypts `ct`, returning the plaintext in `[0, M)`.
pub fn decrypt(sk: &SecretKey, pk: &PublicKey, ct: &Ciphertext) -> Result<BigUint, CryptoError> {
    if ct.key_id != pk.key_id || sk.key_id != pk.key_id {
        return Err(CryptoError::WrongKey);
    }
    // m = L(c^phi mod M^2) * phi^{-1} mod M, with L(u) = (u - 1) / M
    let u = ct.value.modpow(&sk.phi, &pk.modulus_squared);
    let l = (u - BigUint::one()) / &pk.modulus;
    Ok(l * &sk.phi_inv % &pk.modulus)
}

/// Ciphertext multiplication: decrypts to `m1 + m2 mod M`.
pub fn homomorphic_add(
    pk: &PublicKey,
    ct1: &Ciphertext,
    ct2: &Ciphertext,
) -> Result<Ciphertext, CryptoError> {
    if ct1.key_id != pk.key_id || ct2.key_id != pk.key_id {
        return Err(CryptoError::WrongKey);
    }
    Ok(Ciphertext {
        value: &ct1.value * &ct2.value % &pk.modulus_squared,
        key_id: pk.key_id,
    })
}

/// Ciphertext exponentiation: decrypts to `s * m mod M`.
pub fn scalar_mul(pk: &PublicKey, ct: &Ciphertext, s: &BigUint) -> Result<Ciphertext, CryptoError> {
    if ct.key_id != pk.key_id {
        return Err(CryptoError::WrongKey);
    }
    Ok(Ciphertext {
        value: ct.value.modpow(s, &pk.modulus_squared),
        key_id: pk.key_id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn b(v: u64) -> BigUint {
        BigUint::from(v)
    }

    fn toy_keys() -> (PublicKey, SecretKey) {
        keygen_from_primes(&b(5), &b(7)).unwrap()
    }

    #[test]
    fn injected_primes_give_expected_key_material() {
        let (pk, sk) = toy_keys();
        assert_eq!(*pk.modulus(), b(35));
        assert_eq!(sk.phi, b(24));
        assert_eq!((&sk.phi * &sk.phi_inv) % pk.modulus(), BigUint::one());
    }

    #[test]
    fn exhaustive_round_trip_on_toy_modulus() {
        let (pk, sk) = toy_keys();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for m in 0u64..35 {
            let ct = encrypt(&pk, &b(m), &mut rng).unwrap();
            assert_eq!(decrypt(&sk, &pk, &ct).unwrap(), b(m));
        }
    }

    #[test]
    fn keygen_deterministic_under_fixed_seed() {
        let (pk1, _) = keygen(16, &mut ChaCha20Rng::seed_from_u64(9));
        let (pk2, _) = keygen(16, &mut ChaCha20Rng::seed_from_u64(9));
        assert_eq!(pk1.modulus(), pk2.modulus());
        assert_eq!(pk1.modulus().bits(), 16);
    }

    #[test]
    fn encrypt_zero_with_unit_randomizer_gives_unit_ciphertext() {
        let (pk, _) = toy_keys();
        let ct = encrypt_with_r(&pk, &b(0), &b(1)).unwrap();
        assert_eq!(*ct.value(), b(1));
    }

    #[test]
    fn decrypt_unit_ciphertext_gives_zero() {
        let (pk, sk) = toy_keys();
        let ct = Ciphertext {
            value: b(1),
            key_id: pk.key_id(),
        };
        assert_eq!(decrypt(&sk, &pk, &ct).unwrap(), b(0));
    }

    #[test]
    fn message_too_large_rejected() {
        let (pk, _) = toy_keys();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        assert!(matches!(
            encrypt(&pk, &b(35), &mut rng),
            Err(CryptoError::MessageTooLarge)
        ));
    }

    #[test]
    fn fresh_randomizers_give_distinct_ciphertexts() {
        let (pk, _) = keygen(32, &mut ChaCha20Rng::seed_from_u64(4));
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let m = b(17);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..1000 {
            seen.insert(encrypt(&pk, &m, &mut rng).unwrap().value().clone());
        }
        assert!(seen.len() >= 999);
    }

    #[test]
    fn same_randomizer_collides() {
        let (pk, _) = toy_keys();
        let c1 = encrypt_with_r(&pk, &b(3), &b(4)).unwrap();
        let c2 = encrypt_with_r(&pk, &b(3), &b(4)).unwrap();
        assert_eq!(c1, c2);
    }

    #[test]
    fn round_trip_random_messages() {
        let (pk, sk) = keygen(64, &mut ChaCha20Rng::seed_from_u64(6));
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..200 {
            let m = rng.gen_biguint_range(&BigUint::zero(), pk.modulus());
            let ct = encrypt(&pk, &m, &mut rng).unwrap();
            assert_eq!(decrypt(&sk, &pk, &ct).unwrap(), m);
        }
    }

    #[test]
    fn wrong_key_decryption_garbles_plaintext() {
        let (pk, _) = keygen(64, &mut ChaCha20Rng::seed_from_u64(20));
        let (pk2, sk2) = keygen(64, &mut ChaCha20Rng::seed_from_u64(21));
        let mut rng = ChaCha20Rng::seed_from_u64(22);
        let m = b(12345);
        let ct = encrypt(&pk, &m, &mut rng).unwrap();
        // key_id mismatch fails loudly
        assert!(matches!(decrypt(&sk2, &pk2, &ct), Err(CryptoError::WrongKey)));
        // forcing the raw value under the wrong key yields a different plaintext
        let forged = Ciphertext {
            value: ct.value().clone() % pk2.modulus_squared(),
            key_id: pk2.key_id(),
        };
        assert_ne!(decrypt(&sk2, &pk2, &forged).unwrap(), m);
    }

    #[test]
    fn homomorphic_add_small_values() {
        let (pk, sk) = toy_keys();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let c1 = encrypt(&pk, &b(2), &mut rng).unwrap();
        let c2 = encrypt(&pk, &b(3), &mut rng).unwrap();
        let sum = homomorphic_add(&pk, &c1, &c2).unwrap();
        assert_eq!(decrypt(&sk, &pk, &sum).unwrap(), b(5));
        // additive identity
        let zero = encrypt(&pk, &b(0), &mut rng).unwrap();
        let same = homomorphic_add(&pk, &c1, &zero).unwrap();
        assert_eq!(decrypt(&sk, &pk, &same).unwrap(), b(2));
    }

    #[test]
    fn homomorphic_sum_of_many() {
        let (pk, sk) = keygen(64, &mut ChaCha20Rng::seed_from_u64(10));
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let bound = pk.modulus() / b(10);
        let mut expected = BigUint::zero();
        let mut acc = encrypt(&pk, &b(0), &mut rng).unwrap();
        for _ in 0..10 {
            let m = rng.gen_biguint_range(&BigUint::zero(), &bound);
            expected += &m;
            let ct = encrypt(&pk, &m, &mut rng).unwrap();
            acc = homomorphic_add(&pk, &acc, &ct).unwrap();
        }
        assert_eq!(decrypt(&sk, &pk, &acc).unwrap(), expected);
    }

    #[test]
    fn scalar_mul_identities_and_small_product() {
        let (pk, sk) = toy_keys();
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let ct = encrypt(&pk, &b(4), &mut rng).unwrap();
        assert_eq!(decrypt(&sk, &pk, &scalar_mul(&pk, &ct, &b(1)).unwrap()).unwrap(), b(4));
        assert_eq!(decrypt(&sk, &pk, &scalar_mul(&pk, &ct, &b(0)).unwrap()).unwrap(), b(0));
        assert_eq!(decrypt(&sk, &pk, &scalar_mul(&pk, &ct, &b(3)).unwrap()).unwrap(), b(12));
    }

    #[test]
    fn ciphertexts_lie_in_unit_group() {
        let (pk, _) = keygen(32, &mut ChaCha20Rng::seed_from_u64(13));
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        for m in 0u64..20 {
            let ct = encrypt(&pk, &b(m), &mut rng).unwrap();
            assert!(ct.value() < pk.modulus_squared());
            assert!(ct.value().gcd(pk.modulus_squared()).is_one());
        }
    }

    #[test]
    fn key_and_ciphertext_bytes_round_trip() {
        let (pk, _) = keygen(64, &mut ChaCha20Rng::seed_from_u64(15));
        let mut rng = ChaCha20Rng::seed_from_u64(16);
        let pk2 = PublicKey::from_bytes(&pk.to_bytes()).unwrap();
        assert_eq!(pk, pk2);
        let ct = encrypt(&pk, &b(99), &mut rng).unwrap();
        let ct2 = Ciphertext::from_bytes(&ct.to_bytes(), &pk).unwrap();
        assert_eq!(ct, ct2);
    }
}
