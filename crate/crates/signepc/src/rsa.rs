//! Minimal deterministic RSA with SHA-256 PKCS#1 v1.5 padding.
//!
//! Two properties drive this implementation instead of an off-the-shelf
//! crate: verification must *recover* the digest the signer committed to
//! (the access check compares that digest against one the verifier rebuilds
//! locally), and key generation must be byte-reproducible from a caller
//! supplied RNG. Padding is deterministic, so signing the same digest twice
//! yields identical bytes.

use num_bigint::BigUint;
use rand::RngCore;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RsaError {
    #[error("signature rejected")]
    BadSignature,
}

/// ASN.1 DigestInfo prefix for SHA-256, per PKCS#1 v1.5.
const DIGEST_INFO_SHA256: [u8; 19] = [
    0x30, 0x31, 0x30, 0x0d, 0x06, 0x09, 0x60, 0x86, 0x48, 0x01, 0x65, 0x03, 0x04, 0x02, 0x01,
    0x05, 0x00, 0x04, 0x20,
];

const PUBLIC_EXPONENT: u32 = 65537;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyKey {
    n: BigUint,
    e: BigUint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SigningKey {
    n: BigUint,
    d: BigUint,
    p: BigUint,
    q: BigUint,
    dp: BigUint,
    dq: BigUint,
    qinv: BigUint,
}

impl VerifyKey {
    pub fn from_components(n_be: &[u8], e_be: &[u8]) -> Self {
        VerifyKey {
            n: BigUint::from_bytes_be(n_be),
            e: BigUint::from_bytes_be(e_be),
        }
    }

    pub fn modulus_be(&self) -> Vec<u8> {
        self.n.to_bytes_be()
    }

    pub fn exponent_be(&self) -> Vec<u8> {
        self.e.to_bytes_be()
    }

    /// Modulus length in bytes; every signature is exactly this long.
    pub fn modulus_len(&self) -> usize {
        (self.n.bits() as usize).div_ceil(8)
    }

    /// Raw public-key operation plus padding check. On success returns the
    /// 32-byte digest embedded in the signature.
    pub fn verify_recover(&self, signature: &[u8]) -> Result<[u8; 32], RsaError> {
        let k = self.modulus_len();
        if signature.len() != k {
            return Err(RsaError::BadSignature);
        }
        let s = BigUint::from_bytes_be(signature);
        if s >= self.n {
            return Err(RsaError::BadSignature);
        }
        let m = s.modpow(&self.e, &self.n);
        let em = to_fixed_be(&m, k);
        parse_emsa(&em)
    }
}

impl SigningKey {
    /// Rebuild a signing key from its primes (and the fixed public exponent).
    pub fn from_primes(p_be: &[u8], q_be: &[u8]) -> Self {
        let p = BigUint::from_bytes_be(p_be);
        let q = BigUint::from_bytes_be(q_be);
        assemble_key(p, q)
    }

    pub fn verify_key(&self) -> VerifyKey {
        VerifyKey {
            n: self.n.clone(),
            e: BigUint::from(PUBLIC_EXPONENT),
        }
    }

    pub fn primes_be(&self) -> (Vec<u8>, Vec<u8>) {
        (self.p.to_bytes_be(), self.q.to_bytes_be())
    }

    pub fn modulus_len(&self) -> usize {
        (self.n.bits() as usize).div_ceil(8)
    }

    /// Sign a SHA-256 digest. Deterministic: the padding has no random bytes.
    pub fn sign_digest(&self, digest: &[u8; 32]) -> Vec<u8> {
        let k = self.modulus_len();
        let em = build_emsa(digest, k);
        let m = BigUint::from_bytes_be(&em);
        let s = self.modpow_crt(&m);
        to_fixed_be(&s, k)
    }

    /// m^d mod n via the Chinese remainder theorem.
    fn modpow_crt(&self, m: &BigUint) -> BigUint {
        let m1 = m.modpow(&self.dp, &self.p);
        let m2 = m.modpow(&self.dq, &self.q);
        let diff = (&m1 + &self.p - (&m2 % &self.p)) % &self.p;
        let h = (&self.qinv * diff) % &self.p;
        m2 + h * &self.q
    }
}

/// Generate a keypair with an exactly `bits`-long modulus. Identical RNG
/// state yields identical keys. Callers enforce minimum sizes.
pub fn generate(bits: usize, rng: &mut dyn RngCore) -> SigningKey {
    assert!(bits >= 512 && bits % 2 == 0, "unsupported modulus size");
    let half = bits / 2;
    let e = BigUint::from(PUBLIC_EXPONENT);
    let one = BigUint::from(1u32);
    loop {
        let p = gen_prime(half, rng, &e);
        let q = gen_prime(half, rng, &e);
        if p == q {
            continue;
        }
        let n = &p * &q;
        if n.bits() as usize != bits {
            continue;
        }
        // e must be invertible mod lambda(n); gen_prime already filtered
        // gcd(e, p-1) = 1, so this always succeeds, but keep the check.
        let phi = (&p - &one) * (&q - &one);
        if e.modinv(&phi).is_none() {
            continue;
        }
        return assemble_key(p, q);
    }
}

fn assemble_key(p: BigUint, q: BigUint) -> SigningKey {
    let one = BigUint::from(1u32);
    let e = BigUint::from(PUBLIC_EXPONENT);
    let n = &p * &q;
    let phi = (&p - &one) * (&q - &one);
    let d = e.modinv(&phi).expect("e invertible mod phi");
    let dp = &d % (&p - &one);
    let dq = &d % (&q - &one);
    let qinv = q.modinv(&p).expect("q invertible mod p");
    SigningKey { n, d, p, q, dp, dq, qinv }
}

fn build_emsa(digest: &[u8; 32], k: usize) -> Vec<u8> {
    let t_len = DIGEST_INFO_SHA256.len() + digest.len();
    assert!(k >= t_len + 11, "modulus too small for SHA-256 padding");
    let mut em = Vec::with_capacity(k);
    em.push(0x00);
    em.push(0x01);
    em.resize(k - t_len - 1, 0xff);
    em.push(0x00);
    em.extend_from_slice(&DIGEST_INFO_SHA256);
    em.extend_from_slice(digest);
    em
}

fn parse_emsa(em: &[u8]) -> Result<[u8; 32], RsaError> {
    let t_len = DIGEST_INFO_SHA256.len() + 32;
    if em.len() < t_len + 11 || em[0] != 0x00 || em[1] != 0x01 {
        return Err(RsaError::BadSignature);
    }
    let ps_end = em.len() - t_len - 1;
    if !em[2..ps_end].iter().all(|&b| b == 0xff) || em[ps_end] != 0x00 {
        return Err(RsaError::BadSignature);
    }
    let (info, digest) = em[ps_end + 1..].split_at(DIGEST_INFO_SHA256.len());
    if info != DIGEST_INFO_SHA256 {
        return Err(RsaError::BadSignature);
    }
    let mut out = [0u8; 32];
    out.copy_from_slice(digest);
    Ok(out)
}

fn to_fixed_be(v: &BigUint, len: usize) -> Vec<u8> {
    let raw = v.to_bytes_be();
    assert!(raw.len() <= len);
    let mut out = vec![0u8; len - raw.len()];
    out.extend_from_slice(&raw);
    out
}

fn gen_prime(bits: usize, rng: &mut dyn RngCore, e: &BigUint) -> BigUint {
    let one = BigUint::from(1u32);
    loop {
        let mut bytes = vec![0u8; bits / 8];
        rng.fill_bytes(&mut bytes);
        // top two bits set so p*q reaches the full modulus width; low bit odd
        bytes[0] |= 0b1100_0000;
        let last = bytes.len() - 1;
        bytes[last] |= 1;
        let candidate = BigUint::from_bytes_be(&bytes);
        if !survives_trial_division(&candidate) {
            continue;
        }
        if !miller_rabin(&candidate, 40, rng) {
            continue;
        }
        if gcd(e.clone(), &candidate - &one) != one {
            continue;
        }
        return candidate;
    }
}

fn small_primes() -> &'static [u32] {
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let mut sieve = vec![true; 2000];
        let mut out = Vec::new();
        for i in 2..sieve.len() {
            if sieve[i] {
                out.push(i as u32);
                let mut j = i * i;
                while j < sieve.len() {
                    sieve[j] = false;
                    j += i;
                }
            }
        }
        out
    })
}

fn survives_trial_division(n: &BigUint) -> bool {
    for &p in small_primes() {
        let p = BigUint::from(p);
        if &p >= n {
            return true;
        }
        if (n % &p) == BigUint::ZERO {
            return false;
        }
    }
    true
}

/// Probabilistic primality test; error probability ≤ 4^-rounds.
fn miller_rabin(n: &BigUint, rounds: usize, rng: &mut dyn RngCore) -> bool {
    let one = BigUint::from(1u32);
    let two = BigUint::from(2u32);
    if *n < BigUint::from(4u32) {
        return *n == two || *n == BigUint::from(3u32);
    }
    if n % &two == BigUint::ZERO {
        return false;
    }
    let n_minus_1 = n - &one;
    let mut d = n_minus_1.clone();
    let mut r = 0u32;
    while &d % &two == BigUint::ZERO {
        d >>= 1;
        r += 1;
    }
    let span = n - &BigUint::from(3u32); // bases drawn from [2, n-2]
    'outer: for _ in 0..rounds {
        let mut bytes = vec![0u8; (n.bits() as usize).div_ceil(8)];
        rng.fill_bytes(&mut bytes);
        let a = BigUint::from_bytes_be(&bytes) % &span + &two;
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_1 {
            continue;
        }
        for _ in 0..r.saturating_sub(1) {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

fn gcd(mut a: BigUint, mut b: BigUint) -> BigUint {
    while b != BigUint::ZERO {
        let r = a % &b;
        a = b;
        b = r;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use sha2::{Digest, Sha256};

    // fixed 512-bit primes; the expected signature below was produced by an
    // independent big-integer implementation of the same padding
    const P_HEX: &str = "e0dfd2c2a288acebc705efab30e4447541a8c5a47a37185c5a9cb98389ce4de19199aa3069b404fd98c801568cb9170eb712bf10b4955ce9c9dc8ce6855c6123";
    const Q_HEX: &str = "ebe0fcf21866fd9a9f0d72f7994875a8d92e67aee4b515136b2a778a8048b149828aea30bd0ba34b977982a3d42168f594ca99f3981ddabfab2369f229640115";
    const SIG_HEX: &str = "90196e17b3bfa2924ec995594996fdfc51bb0a190fc2960c112c25e1adbecc574128cffcce0a4a74523d217d1011f860fb2165062a1696d0b724d833f6831ae4fe8dd0cfaaabf88f95f32bf3b24dc52bc4dfab3dda5c9eee2e330d62f0cf2a9895144916fefa1554cf54a9ecc3b8832ea54cdd28ff0d055a854ab84f1ab8d3cc";

    fn hex_bytes(s: &str) -> Vec<u8> {
        (0..s.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap())
            .collect()
    }

    fn fixed_key() -> SigningKey {
        SigningKey::from_primes(&hex_bytes(P_HEX), &hex_bytes(Q_HEX))
    }

    #[test]
    fn known_answer_signature() {
        let key = fixed_key();
        let digest: [u8; 32] = Sha256::digest(b"test").into();
        let sig = key.sign_digest(&digest);
        assert_eq!(sig, hex_bytes(SIG_HEX));
        let recovered = key.verify_key().verify_recover(&sig).unwrap();
        assert_eq!(recovered, digest);
    }

    #[test]
    fn signature_length_equals_modulus_length() {
        let key = fixed_key();
        assert_eq!(key.modulus_len(), 128);
        let sig = key.sign_digest(&[7u8; 32]);
        assert_eq!(sig.len(), 128);
    }

    #[test]
    fn signing_is_deterministic() {
        let key = fixed_key();
        assert_eq!(key.sign_digest(&[9u8; 32]), key.sign_digest(&[9u8; 32]));
    }

    #[test]
    fn keygen_is_seed_reproducible() {
        let a = generate(1024, &mut ChaCha20Rng::seed_from_u64(7));
        let b = generate(1024, &mut ChaCha20Rng::seed_from_u64(7));
        assert_eq!(a, b);
        let c = generate(1024, &mut ChaCha20Rng::seed_from_u64(8));
        assert_ne!(a.verify_key().modulus_be(), c.verify_key().modulus_be());
    }

    #[test]
    fn generated_key_round_trips() {
        let key = generate(1024, &mut ChaCha20Rng::seed_from_u64(42));
        let digest: [u8; 32] = Sha256::digest(b"hello").into();
        let sig = key.sign_digest(&digest);
        assert_eq!(sig.len(), key.modulus_len());
        assert_eq!(key.verify_key().verify_recover(&sig).unwrap(), digest);
    }

    #[test]
    fn tampered_signature_is_rejected() {
        let key = fixed_key();
        let mut sig = key.sign_digest(&[1u8; 32]);
        sig[10] ^= 0x40;
        assert_eq!(key.verify_key().verify_recover(&sig), Err(RsaError::BadSignature));
    }

    #[test]
    fn wrong_length_and_out_of_range_are_rejected() {
        let key = fixed_key().verify_key();
        assert_eq!(key.verify_recover(&[]), Err(RsaError::BadSignature));
        assert_eq!(key.verify_recover(&[0u8; 4]), Err(RsaError::BadSignature));
        let too_big = vec![0xff; key.modulus_len()];
        assert_eq!(key.verify_recover(&too_big), Err(RsaError::BadSignature));
    }

    #[test]
    fn cross_key_verification_fails() {
        let a = generate(1024, &mut ChaCha20Rng::seed_from_u64(1));
        let b = generate(1024, &mut ChaCha20Rng::seed_from_u64(2));
        let sig = a.sign_digest(&[5u8; 32]);
        assert_eq!(b.verify_key().verify_recover(&sig), Err(RsaError::BadSignature));
    }

    #[test]
    fn miller_rabin_agrees_on_known_values() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        // 2^89 - 1 is a Mersenne prime
        let m89 = (BigUint::from(1u32) << 89) - BigUint::from(1u32);
        assert!(miller_rabin(&m89, 40, &mut rng));
        // 561 is a Carmichael number
        assert!(!miller_rabin(&BigUint::from(561u32), 40, &mut rng));
        assert!(!miller_rabin(&BigUint::from(1000000u32), 40, &mut rng));
        assert!(miller_rabin(&BigUint::from(104729u32), 40, &mut rng));
    }
}
