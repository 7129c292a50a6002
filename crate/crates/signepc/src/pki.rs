//! Key lifecycle and the challenge protocol.
//!
//! The directory signs with a keypair whose public half is distributed to
//! repositories as a [`KeyBundle`]. Before trusting a freshly distributed
//! key, a repository can demand proof of possession: it issues a single-use
//! random challenge and the key holder signs the challenge digest. Keys
//! carry an inclusive `valid_until`; repositories refuse tokens from expired
//! keys even when the signature itself verifies.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::rsa::{self, SigningKey, VerifyKey};
use crate::token::SignatureTag;

/// Smallest modulus for production keys.
pub const MIN_MODULUS_BITS: usize = 2048;
/// Smallest modulus [`generate_keypair_allow_weak`] accepts; for tests and
/// benchmarks only.
pub const MIN_WEAK_MODULUS_BITS: usize = 1024;
/// Default challenge lifetime in seconds.
pub const DEFAULT_CHALLENGE_TTL: u64 = 300;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PkiError {
    #[error("requested {requested}-bit modulus, minimum is {minimum}")]
    WeakKeyRequested { requested: usize, minimum: usize },
    #[error("challenge expired")]
    ChallengeExpired,
    #[error("challenge already consumed or never issued")]
    ChallengeConsumed,
    #[error("bad key bundle: {0}")]
    BadBundle(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyStatus {
    Valid,
    Expired,
}

/// A signing keypair plus its identity and lifetime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPair {
    pub signing: SigningKey,
    pub verify: VerifyKey,
    /// Hex fingerprint of the public material.
    pub key_id: String,
    /// Inclusive UTC second after which the key is expired.
    pub valid_until: u64,
}

/// Fingerprint of public key material: first 8 bytes of
/// SHA-256(modulus || exponent), hex encoded.
pub fn key_id_for(key: &VerifyKey) -> String {
    let mut h = Sha256::new();
    h.update(key.modulus_be());
    h.update(key.exponent_be());
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn generate_with_floor(
    modulus_bits: usize,
    valid_until: u64,
    rng_seed: Option<u64>,
    floor: usize,
) -> Result<KeyPair, PkiError> {
    if modulus_bits < floor {
        return Err(PkiError::WeakKeyRequested {
            requested: modulus_bits,
            minimum: floor,
        });
    }
    let mut rng = match rng_seed {
        Some(seed) => ChaCha20Rng::seed_from_u64(seed),
        None => ChaCha20Rng::seed_from_u64(rand::random::<u64>()),
    };
    let signing = rsa::generate(modulus_bits, &mut rng);
    let verify = signing.verify_key();
    let key_id = key_id_for(&verify);
    Ok(KeyPair { signing, verify, key_id, valid_until })
}

/// Generate a production keypair (modulus ≥ 2048 bits). With `rng_seed` set,
/// generation is fully reproducible: same seed, same key, same key id.
pub fn generate_keypair(
    modulus_bits: usize,
    valid_until: u64,
    rng_seed: Option<u64>,
) -> Result<KeyPair, PkiError> {
    generate_with_floor(modulus_bits, valid_until, rng_seed, MIN_MODULUS_BITS)
}

/// Like [`generate_keypair`] but with the floor lowered to 1024 bits so test
/// suites stay fast. Never use the result outside tests or benchmarks.
pub fn generate_keypair_allow_weak(
    modulus_bits: usize,
    valid_until: u64,
    rng_seed: Option<u64>,
) -> Result<KeyPair, PkiError> {
    generate_with_floor(modulus_bits, valid_until, rng_seed, MIN_WEAK_MODULUS_BITS)
}

/// `Valid` through `valid_until` inclusive, `Expired` strictly after.
pub fn check_key_expiry(valid_until: u64, now: u64) -> KeyStatus {
    if now <= valid_until {
        KeyStatus::Valid
    } else {
        KeyStatus::Expired
    }
}

/// Distributable public-key record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyBundle {
    pub key_id: String,
    /// Base64 of the big-endian modulus bytes.
    pub modulus: String,
    /// Base64 of the big-endian public exponent bytes.
    pub exponent: String,
    pub valid_until: u64,
}

impl KeyBundle {
    pub fn from_keypair(kp: &KeyPair) -> Self {
        KeyBundle {
            key_id: kp.key_id.clone(),
            modulus: BASE64.encode(kp.verify.modulus_be()),
            exponent: BASE64.encode(kp.verify.exponent_be()),
            valid_until: kp.valid_until,
        }
    }

    /// Decode the public key, checking that the recorded key id actually
    /// fingerprints the material.
    pub fn verify_key(&self) -> Result<VerifyKey, PkiError> {
        let n = BASE64
            .decode(self.modulus.as_bytes())
            .map_err(|e| PkiError::BadBundle(format!("modulus base64: {e}")))?;
        let e = BASE64
            .decode(self.exponent.as_bytes())
            .map_err(|e| PkiError::BadBundle(format!("exponent base64: {e}")))?;
        let key = VerifyKey::from_components(&n, &e);
        let expect = key_id_for(&key);
        if expect != self.key_id {
            return Err(PkiError::BadBundle(format!(
                "key id {} does not match material (expected {expect})",
                self.key_id
            )));
        }
        Ok(key)
    }
}

/// Private-key file contents for the CLI; primes are enough to rebuild the
/// full key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivateKeyFile {
    pub key_id: String,
    pub prime_p: String,
    pub prime_q: String,
    pub valid_until: u64,
}

impl PrivateKeyFile {
    pub fn from_keypair(kp: &KeyPair) -> Self {
        let (p, q) = kp.signing.primes_be();
        PrivateKeyFile {
            key_id: kp.key_id.clone(),
            prime_p: BASE64.encode(p),
            prime_q: BASE64.encode(q),
            valid_until: kp.valid_until,
        }
    }

    pub fn keypair(&self) -> Result<KeyPair, PkiError> {
        let p = BASE64
            .decode(self.prime_p.as_bytes())
            .map_err(|e| PkiError::BadBundle(format!("prime base64: {e}")))?;
        let q = BASE64
            .decode(self.prime_q.as_bytes())
            .map_err(|e| PkiError::BadBundle(format!("prime base64: {e}")))?;
        let signing = SigningKey::from_primes(&p, &q);
        let verify = signing.verify_key();
        let key_id = key_id_for(&verify);
        if key_id != self.key_id {
            return Err(PkiError::BadBundle(format!(
                "key id {} does not match material (expected {key_id})",
                self.key_id
            )));
        }
        Ok(KeyPair {
            signing,
            verify,
            key_id,
            valid_until: self.valid_until,
        })
    }
}

/// A single-use proof-of-possession challenge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Challenge {
    pub nonce: [u8; 32],
    pub issued_at: u64,
}

/// What the verifier side remembers about challenges it issued. Every
/// verification attempt consumes the challenge, successful or not.
#[derive(Debug, Clone)]
pub struct ChallengeStore {
    ttl_seconds: u64,
    outstanding: BTreeMap<[u8; 32], u64>,
}

impl Default for ChallengeStore {
    fn default() -> Self {
        ChallengeStore::new(DEFAULT_CHALLENGE_TTL)
    }
}

impl ChallengeStore {
    pub fn new(ttl_seconds: u64) -> Self {
        ChallengeStore {
            ttl_seconds,
            outstanding: BTreeMap::new(),
        }
    }

    pub fn ttl_seconds(&self) -> u64 {
        self.ttl_seconds
    }

    pub fn issue(&mut self, rng: &mut dyn RngCore, now: u64) -> Challenge {
        let mut nonce = [0u8; 32];
        rng.fill_bytes(&mut nonce);
        self.outstanding.insert(nonce, now);
        Challenge { nonce, issued_at: now }
    }

    /// Check a response against the claimed public key. Consumes the
    /// challenge whatever happens; a second attempt reports
    /// [`PkiError::ChallengeConsumed`]. Returns `Ok(false)` for responses
    /// that are well-formed protocol-wise but cryptographically wrong.
    pub fn verify_response(
        &mut self,
        key: &VerifyKey,
        challenge: &Challenge,
        response: &SignatureTag,
        now: u64,
    ) -> Result<bool, PkiError> {
        let issued_at = self
            .outstanding
            .remove(&challenge.nonce)
            .ok_or(PkiError::ChallengeConsumed)?;
        if now.saturating_sub(issued_at) > self.ttl_seconds {
            return Err(PkiError::ChallengeExpired);
        }
        match key.verify_recover(&response.signature) {
            Ok(digest) => Ok(digest == challenge_digest(&challenge.nonce)),
            Err(_) => Ok(false),
        }
    }
}

/// Digest the holder signs: SHA-256 of the raw nonce bytes.
pub fn challenge_digest(nonce: &[u8; 32]) -> [u8; 32] {
    Sha256::digest(nonce).into()
}

/// Prove possession of the private half by signing the challenge digest.
pub fn respond_challenge(key: &KeyPair, challenge: &Challenge) -> SignatureTag {
    let digest = challenge_digest(&challenge.nonce);
    SignatureTag {
        signature: key.signing.sign_digest(&digest),
        key_id: key.key_id.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kp(seed: u64) -> KeyPair {
        generate_keypair_allow_weak(1024, 10_000, Some(seed)).unwrap()
    }

    #[test]
    fn weak_requests_are_refused() {
        let err = generate_keypair(1024, 0, Some(1)).unwrap_err();
        assert_eq!(err, PkiError::WeakKeyRequested { requested: 1024, minimum: 2048 });
        let err = generate_keypair_allow_weak(512, 0, Some(1)).unwrap_err();
        assert_eq!(err, PkiError::WeakKeyRequested { requested: 512, minimum: 1024 });
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let a = kp(3);
        let b = kp(3);
        assert_eq!(a.key_id, b.key_id);
        assert_eq!(a.verify.modulus_be(), b.verify.modulus_be());
        let c = kp(4);
        assert_ne!(a.key_id, c.key_id);
    }

    #[test]
    fn expiry_boundary_is_inclusive() {
        assert_eq!(check_key_expiry(100, 99), KeyStatus::Valid);
        assert_eq!(check_key_expiry(100, 100), KeyStatus::Valid);
        assert_eq!(check_key_expiry(100, 101), KeyStatus::Expired);
    }

    #[test]
    fn challenge_digest_known_answer() {
        // sha256 over the nonce 0x01..0x20, from an independent oracle
        let mut nonce = [0u8; 32];
        for (i, b) in nonce.iter_mut().enumerate() {
            *b = (i + 1) as u8;
        }
        let hex: String = challenge_digest(&nonce).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(hex, "ae216c2ef5247a3782c135efa279a3e4cdc61094270f5d2be58c6204b7a612c9");
    }

    #[test]
    fn honest_challenge_round_trip() {
        let key = kp(5);
        let mut store = ChallengeStore::default();
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(9);
        let ch = store.issue(&mut rng, 1000);
        let resp = respond_challenge(&key, &ch);
        assert_eq!(store.verify_response(&key.verify, &ch, &resp, 1002), Ok(true));
    }

    #[test]
    fn wrong_key_fails_cleanly() {
        let holder = kp(6);
        let claimed = kp(7);
        let mut store = ChallengeStore::default();
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(9);
        let ch = store.issue(&mut rng, 0);
        let resp = respond_challenge(&holder, &ch);
        assert_eq!(store.verify_response(&claimed.verify, &ch, &resp, 1), Ok(false));
    }

    #[test]
    fn tampered_response_fails() {
        let key = kp(8);
        let mut store = ChallengeStore::default();
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(9);
        let ch = store.issue(&mut rng, 0);
        let mut resp = respond_challenge(&key, &ch);
        resp.signature[0] ^= 1;
        assert_eq!(store.verify_response(&key.verify, &ch, &resp, 1), Ok(false));
    }

    #[test]
    fn challenges_are_single_use() {
        let key = kp(9);
        let mut store = ChallengeStore::default();
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(9);
        let ch = store.issue(&mut rng, 0);
        let resp = respond_challenge(&key, &ch);
        assert_eq!(store.verify_response(&key.verify, &ch, &resp, 1), Ok(true));
        assert_eq!(
            store.verify_response(&key.verify, &ch, &resp, 2),
            Err(PkiError::ChallengeConsumed)
        );
    }

    #[test]
    fn never_issued_counts_as_consumed() {
        let key = kp(10);
        let mut store = ChallengeStore::default();
        let ch = Challenge { nonce: [7; 32], issued_at: 0 };
        let resp = respond_challenge(&key, &ch);
        assert_eq!(
            store.verify_response(&key.verify, &ch, &resp, 1),
            Err(PkiError::ChallengeConsumed)
        );
    }

    #[test]
    fn ttl_boundary_is_inclusive() {
        let key = kp(11);
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(9);

        let mut store = ChallengeStore::default();
        let ch = store.issue(&mut rng, 1000);
        let resp = respond_challenge(&key, &ch);
        // exactly at ttl: still valid
        assert_eq!(store.verify_response(&key.verify, &ch, &resp, 1300), Ok(true));

        let mut store = ChallengeStore::default();
        let ch = store.issue(&mut rng, 1000);
        let resp = respond_challenge(&key, &ch);
        assert_eq!(
            store.verify_response(&key.verify, &ch, &resp, 1301),
            Err(PkiError::ChallengeExpired)
        );
    }

    #[test]
    fn nonces_differ_between_issues() {
        let mut store = ChallengeStore::default();
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(9);
        let a = store.issue(&mut rng, 0);
        let b = store.issue(&mut rng, 0);
        assert_ne!(a.nonce, b.nonce);
    }

    #[test]
    fn bundle_round_trip_and_integrity() {
        let key = kp(12);
        let bundle = KeyBundle::from_keypair(&key);
        let json = serde_json::to_string(&bundle).unwrap();
        let back: KeyBundle = serde_json::from_str(&json).unwrap();
        let vk = back.verify_key().unwrap();
        assert_eq!(vk.modulus_be(), key.verify.modulus_be());

        let mut forged = bundle.clone();
        forged.key_id = "0000000000000000".into();
        assert!(matches!(forged.verify_key(), Err(PkiError::BadBundle(_))));
    }

    #[test]
    fn private_key_file_round_trip() {
        let key = kp(13);
        let file = PrivateKeyFile::from_keypair(&key);
        let back = file.keypair().unwrap();
        assert_eq!(back.key_id, key.key_id);
        assert_eq!(back.signing, key.signing);
        assert_eq!(back.valid_until, key.valid_until);
    }
}
