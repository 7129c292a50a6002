//! Signed capability tokens.
//!
//! The directory signs a digest over canonically encoded claims: requesting
//! user, product code, repository URL, attribute scope, and an expiry label
//! derived from the issue time. A repository checks a presented token
//! entirely locally: it recovers the signed digest from the tag, rebuilds
//! the digest from the request it actually received and its *own* clock,
//! and accepts only when both match and the requester is the user named in
//! the rights. No callback to the directory is needed.
//!
//! The canonical encoding length-prefixes every field, so no two distinct
//! claim tuples serialize to the same bytes (a plain concatenation would let
//! `("ab", "c")` collide with `("a", "bc")`).

use std::collections::BTreeSet;
use std::fmt;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::model::{EpcCode, UserId};
use crate::pki::KeyPair;
use crate::rsa::VerifyKey;

/// Wire format version emitted and accepted by this implementation.
pub const TOKEN_FORMAT_VERSION: u64 = 1;

/// Seconds per day; the daily window gets a calendar-date label.
pub const DAILY_WINDOW_SECONDS: u64 = 86_400;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TokenError {
    #[error("no trusted key with id {0:?}")]
    UnknownKeyId(String),
    #[error("signature rejected")]
    BadSignature,
    #[error("malformed token: {0}")]
    Malformed(String),
    #[error("unsupported token version {0}")]
    UnsupportedVersion(u64),
    #[error("expiry window must be positive")]
    InvalidWindow,
}

/// The claims a token grants: `userid` may query `epcis_url` about `epc`,
/// seeing the attributes in `scope` (empty scope means all attributes).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRight {
    pub userid: UserId,
    pub epc: EpcCode,
    pub epcis_url: String,
    pub scope: BTreeSet<String>,
}

/// SHA-256 digest of the canonical claims encoding.
///
/// Serializes as lowercase hex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Digest(pub [u8; 32]);

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let hex = String::deserialize(d)?;
        if hex.len() != 64 {
            return Err(serde::de::Error::custom("digest must be 64 hex chars"));
        }
        let mut out = [0u8; 32];
        for (i, chunk) in out.iter_mut().enumerate() {
            *chunk = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16)
                .map_err(serde::de::Error::custom)?;
        }
        Ok(Digest(out))
    }
}

impl Digest {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// An RSA signature over a claims digest, tagged with the signer's key id so
/// the verifier can pick the right public key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureTag {
    pub signature: Vec<u8>,
    pub key_id: String,
}

/// Token lifetime policy. Issue and check times are bucketed into windows of
/// `window_seconds`; a token is valid exactly within the window it was issued
/// in, with no grace interval. The verifier recomputes the label from its own
/// clock, so the transported label never decides anything.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpiryWindow {
    window_seconds: u64,
}

impl ExpiryWindow {
    pub fn new(window_seconds: u64) -> Result<Self, TokenError> {
        if window_seconds == 0 {
            return Err(TokenError::InvalidWindow);
        }
        Ok(ExpiryWindow { window_seconds })
    }

    /// One calendar day.
    pub fn daily() -> Self {
        ExpiryWindow { window_seconds: DAILY_WINDOW_SECONDS }
    }

    pub fn window_seconds(&self) -> u64 {
        self.window_seconds
    }

    /// Label of the window containing UTC second `now`. Daily windows label
    /// as `YYYY-MM-DD`; any other width labels as the decimal window index.
    pub fn label_at(&self, now: u64) -> String {
        if self.window_seconds == DAILY_WINDOW_SECONDS {
            let dt = chrono::DateTime::from_timestamp(now as i64, 0)
                .expect("u64 seconds fit chrono range");
            dt.format("%Y-%m-%d").to_string()
        } else {
            (now / self.window_seconds).to_string()
        }
    }
}

/// Expiry label for a token issued at `now` under `window`.
pub fn compute_expiry(now: u64, window: &ExpiryWindow) -> String {
    window.label_at(now)
}

/// Canonical, injective encoding of a claims tuple.
///
/// Layout: each of userid, epc, and url as a 4-byte big-endian length followed
/// by the UTF-8 bytes; then a 4-byte entry count and each scope entry (sorted,
/// length-prefixed); then the length-prefixed expiry label.
pub fn canonical_claims_bytes(
    userid: &str,
    epc: &str,
    epcis_url: &str,
    scope: &BTreeSet<String>,
    expiry_label: &str,
) -> Vec<u8> {
    let mut out = Vec::new();
    let mut put = |s: &str| {
        out.extend_from_slice(&(s.len() as u32).to_be_bytes());
        out.extend_from_slice(s.as_bytes());
    };
    put(userid);
    put(epc);
    put(epcis_url);
    drop(put);
    out.extend_from_slice(&(scope.len() as u32).to_be_bytes());
    for entry in scope {
        out.extend_from_slice(&(entry.len() as u32).to_be_bytes());
        out.extend_from_slice(entry.as_bytes());
    }
    out.extend_from_slice(&(expiry_label.len() as u32).to_be_bytes());
    out.extend_from_slice(expiry_label.as_bytes());
    out
}

/// Digest of the claims for `userid` under `rights` and `expiry_label`.
///
/// The user identity hashed is the first argument, not `rights.userid`: the
/// issuer passes the requesting user (the same id it writes into the rights),
/// while the verifier passes the identity of whoever is actually querying, so
/// a token replayed by someone else hashes to a different digest.
pub fn make_digest(userid: &UserId, rights: &AccessRight, expiry_label: &str) -> Digest {
    let bytes = canonical_claims_bytes(
        userid.as_str(),
        rights.epc.as_str(),
        &rights.epcis_url,
        &rights.scope,
        expiry_label,
    );
    Digest(Sha256::digest(&bytes).into())
}

/// Sign a claims digest with the directory's key.
pub fn sign_tag(key: &KeyPair, digest: &Digest) -> SignatureTag {
    SignatureTag {
        signature: key.signing.sign_digest(digest.as_bytes()),
        key_id: key.key_id.clone(),
    }
}

/// Recover the digest a tag commits to, using an already-resolved public key.
pub fn verify_tag(key: &VerifyKey, tag: &SignatureTag) -> Result<Digest, TokenError> {
    key.verify_recover(&tag.signature)
        .map(Digest)
        .map_err(|_| TokenError::BadSignature)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    /// The tag does not verify under the trusted key.
    SignatureInvalid,
    /// The tag verifies but commits to different claims (tampered rights,
    /// another user's token, or an earlier expiry window).
    DigestMismatch,
    /// Claims digest matches but the requester is not the user the rights
    /// name; kept as an explicit second check for diagnostics.
    UseridMismatch,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::SignatureInvalid => "signature-invalid",
            RejectReason::DigestMismatch => "digest-mismatch",
            RejectReason::UseridMismatch => "userid-mismatch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckOutcome {
    Accept,
    Reject(RejectReason),
}

impl CheckOutcome {
    pub fn is_accept(&self) -> bool {
        matches!(self, CheckOutcome::Accept)
    }
}

/// The local acceptance decision a repository runs for a presented token.
///
/// Recovers the signed digest from the tag, rebuilds the expected digest from
/// the requesting user, the received rights, and the verifier's own clock,
/// then requires digest equality and `requester == rights.userid`. Checks run
/// in that order, so a tampered or replayed token reports `DigestMismatch`
/// and a structurally bad tag reports `SignatureInvalid`.
pub fn check_token(
    key: &VerifyKey,
    requester: &UserId,
    rights: &AccessRight,
    tag: &SignatureTag,
    now: u64,
    window: &ExpiryWindow,
) -> CheckOutcome {
    let recovered = match verify_tag(key, tag) {
        Ok(d) => d,
        Err(_) => return CheckOutcome::Reject(RejectReason::SignatureInvalid),
    };
    let expected = make_digest(requester, rights, &window.label_at(now));
    if recovered != expected {
        return CheckOutcome::Reject(RejectReason::DigestMismatch);
    }
    if requester != &rights.userid {
        return CheckOutcome::Reject(RejectReason::UseridMismatch);
    }
    CheckOutcome::Accept
}

/// Portable token encoding: what the directory hands to a user and the user
/// forwards to repositories.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenWire {
    pub version: u64,
    pub userid: String,
    pub epc: String,
    pub epcis_url: String,
    pub scope: Vec<String>,
    /// Informational; verifiers recompute the label from their own clock.
    pub expiry_label: String,
    pub key_id: String,
    /// Base64 of the raw signature bytes.
    pub signature: String,
}

/// Serialize a token to its JSON wire form.
pub fn encode_token(rights: &AccessRight, expiry_label: &str, tag: &SignatureTag) -> String {
    let wire = TokenWire {
        version: TOKEN_FORMAT_VERSION,
        userid: rights.userid.to_string(),
        epc: rights.epc.to_string(),
        epcis_url: rights.epcis_url.clone(),
        scope: rights.scope.iter().cloned().collect(),
        expiry_label: expiry_label.to_string(),
        key_id: tag.key_id.clone(),
        signature: BASE64.encode(&tag.signature),
    };
    serde_json::to_string_pretty(&wire).expect("token serializes")
}

/// Parse the JSON wire form back into typed claims.
pub fn decode_token(json: &str) -> Result<(AccessRight, String, SignatureTag), TokenError> {
    let wire: TokenWire =
        serde_json::from_str(json).map_err(|e| TokenError::Malformed(e.to_string()))?;
    if wire.version != TOKEN_FORMAT_VERSION {
        return Err(TokenError::UnsupportedVersion(wire.version));
    }
    let userid = UserId::new(wire.userid).map_err(|e| TokenError::Malformed(e.to_string()))?;
    let epc = EpcCode::parse(&wire.epc).map_err(|e| TokenError::Malformed(e.to_string()))?;
    let signature = BASE64
        .decode(wire.signature.as_bytes())
        .map_err(|e| TokenError::Malformed(format!("signature base64: {e}")))?;
    Ok((
        AccessRight {
            userid,
            epc,
            epcis_url: wire.epcis_url,
            scope: wire.scope.into_iter().collect(),
        },
        wire.expiry_label,
        SignatureTag { signature, key_id: wire.key_id },
    ))
}
