//! Message-level behavior of the network roles.
//!
//! Three deployment models share one message vocabulary:
//!
//! * `DirectoryOpen`: the directory answers every lookup with all repository
//!   URLs and repositories serve events unchecked. The insecure baseline.
//! * `SecureEpcds`: the directory checks policy at lookup time, and every
//!   repository query triggers a callback (`AccessCheckRequest`) to the
//!   directory, which re-checks policy per query.
//! * `SignEpc`: the directory checks policy once and issues a signed
//!   capability per grant; repositories verify tokens locally and never call
//!   back.
//!
//! Handlers never block: a remote interaction is an emitted message, and the
//! reply arrives as a later `handle` call. Each handler also reports the
//! operations it performed (lookups, policy checks, signs, verifies) so the
//! simulator can charge configured service times, and so op tallies land in
//! reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{CompanyId, EpcCode, EventRecord, PublishRegistry, UserId};
use crate::pki::{self, KeyPair};
use crate::policy;
use crate::rsa::VerifyKey;
use crate::token::{
    self, AccessRight, CheckOutcome, Digest, ExpiryWindow, RejectReason, SignatureTag,
};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeId {
    User(UserId),
    Epcds,
    Epcis(CompanyId),
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::User(u) => write!(f, "user:{u}"),
            NodeId::Epcds => write!(f, "epcds"),
            NodeId::Epcis(c) => write!(f, "epcis:{c}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    DirectoryOpen,
    SecureEpcds,
    SignEpc,
}

impl Model {
    pub fn as_str(&self) -> &'static str {
        match self {
            Model::DirectoryOpen => "directory-open",
            Model::SecureEpcds => "secure-epcds",
            Model::SignEpc => "sign-epc",
        }
    }
}

/// Simulated duration of each elementary operation, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceTimes {
    #[serde(default = "d_policy_check")]
    pub policy_check_us: u64,
    #[serde(default = "d_sign")]
    pub sign_us: u64,
    #[serde(default = "d_verify")]
    pub verify_us: u64,
    #[serde(default)]
    pub remote_check_roundtrip_us: u64,
    #[serde(default = "d_db_lookup")]
    pub db_lookup_us: u64,
}

fn d_policy_check() -> u64 {
    1_000
}
fn d_sign() -> u64 {
    5_000
}
fn d_verify() -> u64 {
    500
}
fn d_db_lookup() -> u64 {
    1_000
}

impl Default for ServiceTimes {
    fn default() -> Self {
        ServiceTimes {
            policy_check_us: d_policy_check(),
            sign_us: d_sign(),
            verify_us: d_verify(),
            remote_check_roundtrip_us: 0,
            db_lookup_us: d_db_lookup(),
        }
    }
}

/// Operations one handler invocation performed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub db_lookups: u64,
    pub policy_checks: u64,
    pub signs: u64,
    pub verifies: u64,
    pub remote_checks: u64,
}

impl OpCounts {
    pub fn demand_us(&self, st: &ServiceTimes) -> u64 {
        self.db_lookups * st.db_lookup_us
            + self.policy_checks * st.policy_check_us
            + self.signs * st.sign_us
            + self.verifies * st.verify_us
            + self.remote_checks * st.remote_check_roundtrip_us
    }

    pub fn add(&mut self, other: &OpCounts) {
        self.db_lookups += other.db_lookups;
        self.policy_checks += other.policy_checks;
        self.signs += other.signs;
        self.verifies += other.verifies;
        self.remote_checks += other.remote_checks;
    }
}

/// Stand-in for an RSA tag when the simulation models crypto instead of
/// running it: carries the actual claims digest plus a fingerprint of the
/// signing key, so tampering, replay, expiry, and forgery all misbehave
/// exactly as they would with real signatures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeledSeal {
    pub digest: Digest,
    pub key_id: String,
    pub signer_fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TagKind {
    Rsa(SignatureTag),
    Modeled(ModeledSeal),
}

impl TagKind {
    pub fn key_id(&self) -> &str {
        match self {
            TagKind::Rsa(t) => &t.key_id,
            TagKind::Modeled(s) => &s.key_id,
        }
    }
}

/// A capability as transported in messages: the claims plus the tag over
/// them. The expiry label is informational; verifiers use their own clock.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credential {
    pub rights: AccessRight,
    pub expiry_label: String,
    pub tag: TagKind,
}

/// One entry of a directory response: who has data and where to query it,
/// plus the signed capability when the model issues one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DsEntry {
    pub company: CompanyId,
    pub epcis_url: String,
    pub credential: Option<Credential>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuthReject {
    SignatureInvalid,
    DigestMismatch,
    UseridMismatch,
    SignerKeyExpired,
    MissingCredential,
    /// Token is valid but names a different repository URL.
    WrongRepository,
    /// The directory (or its callback) denied by policy.
    PolicyDenied,
}

impl AuthReject {
    pub fn as_str(&self) -> &'static str {
        match self {
            AuthReject::SignatureInvalid => "signature-invalid",
            AuthReject::DigestMismatch => "digest-mismatch",
            AuthReject::UseridMismatch => "userid-mismatch",
            AuthReject::SignerKeyExpired => "signer-key-expired",
            AuthReject::MissingCredential => "missing-credential",
            AuthReject::WrongRepository => "wrong-repository",
            AuthReject::PolicyDenied => "policy-denied",
        }
    }
}

impl From<RejectReason> for AuthReject {
    fn from(r: RejectReason) -> Self {
        match r {
            RejectReason::SignatureInvalid => AuthReject::SignatureInvalid,
            RejectReason::DigestMismatch => AuthReject::DigestMismatch,
            RejectReason::UseridMismatch => AuthReject::UseridMismatch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCode {
    UnknownEpc,
    NoGrant,
    AccessDenied(AuthReject),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageBody {
    UserQueryDs {
        user: UserId,
        epc: EpcCode,
    },
    DsResponse {
        epc: EpcCode,
        entries: Vec<DsEntry>,
    },
    UserQueryIs {
        user: UserId,
        epc: EpcCode,
        credential: Option<Credential>,
    },
    IsResponse {
        events: Vec<EventRecord>,
    },
    AccessCheckRequest {
        corr: u64,
        user: UserId,
        epc: EpcCode,
        owner: CompanyId,
    },
    AccessCheckResponse {
        corr: u64,
        granted: bool,
        scope: BTreeSet<String>,
    },
    ChallengeMsg {
        nonce: [u8; 32],
    },
    ChallengeResponseMsg {
        nonce: [u8; 32],
        reply: ChallengeReply,
    },
    ErrorResponse {
        code: ErrorCode,
        detail: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChallengeReply {
    Rsa(SignatureTag),
    Modeled { key_id: String, fingerprint: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MessageKind {
    UserQueryDs,
    DsResponse,
    UserQueryIs,
    IsResponse,
    AccessCheckRequest,
    AccessCheckResponse,
    Challenge,
    ChallengeResponse,
    ErrorResponse,
}

impl MessageKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MessageKind::UserQueryDs => "user-query-ds",
            MessageKind::DsResponse => "ds-response",
            MessageKind::UserQueryIs => "user-query-is",
            MessageKind::IsResponse => "is-response",
            MessageKind::AccessCheckRequest => "access-check-request",
            MessageKind::AccessCheckResponse => "access-check-response",
            MessageKind::Challenge => "challenge",
            MessageKind::ChallengeResponse => "challenge-response",
            MessageKind::ErrorResponse => "error-response",
        }
    }
}

impl MessageBody {
    pub fn kind(&self) -> MessageKind {
        match self {
            MessageBody::UserQueryDs { .. } => MessageKind::UserQueryDs,
            MessageBody::DsResponse { .. } => MessageKind::DsResponse,
            MessageBody::UserQueryIs { .. } => MessageKind::UserQueryIs,
            MessageBody::IsResponse { .. } => MessageKind::IsResponse,
            MessageBody::AccessCheckRequest { .. } => MessageKind::AccessCheckRequest,
            MessageBody::AccessCheckResponse { .. } => MessageKind::AccessCheckResponse,
            MessageBody::ChallengeMsg { .. } => MessageKind::Challenge,
            MessageBody::ChallengeResponseMsg { .. } => MessageKind::ChallengeResponse,
            MessageBody::ErrorResponse { .. } => MessageKind::ErrorResponse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub from: NodeId,
    pub to: NodeId,
    pub body: MessageBody,
}

/// Directory-side signing identity.
#[derive(Debug, Clone)]
pub enum SignerState {
    Rsa(KeyPair),
    Modeled {
        key_id: String,
        fingerprint: u64,
        valid_until: u64,
    },
}

impl SignerState {
    /// Deterministic modeled signer derived from a seed.
    pub fn modeled(seed: u64, valid_until: u64) -> Self {
        let fingerprint = modeled_fingerprint(seed);
        SignerState::Modeled {
            key_id: format!("model-{fingerprint:016x}"),
            fingerprint,
            valid_until,
        }
    }

    pub fn key_id(&self) -> &str {
        match self {
            SignerState::Rsa(kp) => &kp.key_id,
            SignerState::Modeled { key_id, .. } => key_id,
        }
    }

    pub fn valid_until(&self) -> u64 {
        match self {
            SignerState::Rsa(kp) => kp.valid_until,
            SignerState::Modeled { valid_until, .. } => *valid_until,
        }
    }

    fn tag_over(&self, digest: &Digest) -> TagKind {
        match self {
            SignerState::Rsa(kp) => TagKind::Rsa(token::sign_tag(kp, digest)),
            SignerState::Modeled { key_id, fingerprint, .. } => TagKind::Modeled(ModeledSeal {
                digest: *digest,
                key_id: key_id.clone(),
                signer_fingerprint: *fingerprint,
            }),
        }
    }

    fn challenge_reply(&self, nonce: &[u8; 32]) -> ChallengeReply {
        match self {
            SignerState::Rsa(kp) => ChallengeReply::Rsa(pki::respond_challenge(
                kp,
                &pki::Challenge { nonce: *nonce, issued_at: 0 },
            )),
            SignerState::Modeled { key_id, fingerprint, .. } => ChallengeReply::Modeled {
                key_id: key_id.clone(),
                fingerprint: *fingerprint,
            },
        }
    }

    /// The trust record a repository should hold for this signer.
    pub fn trust_record(&self) -> TrustedSigner {
        match self {
            SignerState::Rsa(kp) => TrustedSigner {
                key_id: kp.key_id.clone(),
                material: TrustMaterial::Rsa(kp.verify.clone()),
                valid_until: kp.valid_until,
            },
            SignerState::Modeled { key_id, fingerprint, valid_until } => TrustedSigner {
                key_id: key_id.clone(),
                material: TrustMaterial::Modeled { fingerprint: *fingerprint },
                valid_until: *valid_until,
            },
        }
    }
}

pub fn modeled_fingerprint(seed: u64) -> u64 {
    // splitmix64 step; good enough to keep distinct seeds distinct
    let mut z = seed.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Public-key (or modeled) trust anchor a repository holds for one key id.
#[derive(Debug, Clone)]
pub struct TrustedSigner {
    pub key_id: String,
    pub material: TrustMaterial,
    pub valid_until: u64,
}

#[derive(Debug, Clone)]
pub enum TrustMaterial {
    Rsa(VerifyKey),
    Modeled { fingerprint: u64 },
}

/// The directory node: registry, policies, and the signing key.
#[derive(Debug, Clone)]
pub struct EpcdsNode {
    pub model: Model,
    pub registry: PublishRegistry,
    pub window: ExpiryWindow,
    pub signer: SignerState,
}

impl EpcdsNode {
    pub fn new(
        model: Model,
        registry: PublishRegistry,
        window: ExpiryWindow,
        signer: SignerState,
    ) -> Self {
        EpcdsNode { model, registry, window, signer }
    }

    /// Answer a discovery query: which repositories may `user` consult about
    /// `epc`. In `SignEpc` mode each granted entry carries a signed
    /// capability. A user from the publishing company always gets its own
    /// record (full scope) without a policy evaluation.
    pub fn handle_query(
        &self,
        user: &UserId,
        epc: &EpcCode,
        now: u64,
    ) -> (Result<Vec<DsEntry>, ErrorCode>, OpCounts) {
        let mut ops = OpCounts { db_lookups: 1, ..OpCounts::default() };
        let records = self.registry.lookup(epc);
        if records.is_empty() {
            return (Err(ErrorCode::UnknownEpc), ops);
        }
        if self.model == Model::DirectoryOpen {
            let entries = records
                .iter()
                .map(|r| DsEntry {
                    company: r.company.clone(),
                    epcis_url: r.epcis_url.clone(),
                    credential: None,
                })
                .collect();
            return (Ok(entries), ops);
        }
        let requester_company = self.registry.company_of(user).cloned();
        let label = self.window.label_at(now);
        let mut entries = Vec::new();
        for record in records {
            ops.policy_checks += 1;
            let scope = if requester_company.as_ref() == Some(&record.company) {
                // publishing company sees its own data in full
                Some(BTreeSet::new())
            } else {
                match policy::evaluate(&self.registry, &record.policy, &record.company, epc, user)
                {
                    Ok(d) if d.granted => Some(d.scope),
                    _ => None,
                }
            };
            let Some(scope) = scope else { continue };
            let credential = match self.model {
                Model::SignEpc => {
                    let rights = AccessRight {
                        userid: user.clone(),
                        epc: epc.clone(),
                        epcis_url: record.epcis_url.clone(),
                        scope,
                    };
                    let digest = token::make_digest(user, &rights, &label);
                    ops.signs += 1;
                    Some(Credential {
                        rights,
                        expiry_label: label.clone(),
                        tag: self.signer.tag_over(&digest),
                    })
                }
                _ => None,
            };
            entries.push(DsEntry {
                company: record.company.clone(),
                epcis_url: record.epcis_url.clone(),
                credential,
            });
        }
        if entries.is_empty() {
            (Err(ErrorCode::NoGrant), ops)
        } else {
            (Ok(entries), ops)
        }
    }

    /// Per-query policy callback used by the `SecureEpcds` model. Returns the
    /// decision and, when granted, the attribute scope to filter by.
    pub fn handle_access_check(
        &self,
        user: &UserId,
        epc: &EpcCode,
        owner: &CompanyId,
        _now: u64,
    ) -> (bool, BTreeSet<String>, OpCounts) {
        let ops = OpCounts {
            db_lookups: 1,
            policy_checks: 1,
            ..OpCounts::default()
        };
        if self.registry.company_of(user) == Some(owner) {
            return (true, BTreeSet::new(), ops);
        }
        let Some(record) = self.registry.record_of(epc, owner) else {
            return (false, BTreeSet::new(), ops);
        };
        match policy::evaluate(&self.registry, &record.policy, owner, epc, user) {
            Ok(d) if d.granted => (true, d.scope, ops),
            _ => (false, BTreeSet::new(), ops),
        }
    }

    /// Dispatch one delivered message and produce replies.
    pub fn handle(&self, from: &NodeId, body: &MessageBody, now: u64) -> (Vec<Message>, OpCounts) {
        match body {
            MessageBody::UserQueryDs { user, epc } => {
                let (result, ops) = self.handle_query(user, epc, now);
                let reply = match result {
                    Ok(entries) => MessageBody::DsResponse { epc: epc.clone(), entries },
                    Err(code) => MessageBody::ErrorResponse {
                        detail: format!("discovery refused for {epc}"),
                        code,
                    },
                };
                (vec![Message { from: NodeId::Epcds, to: from.clone(), body: reply }], ops)
            }
            MessageBody::AccessCheckRequest { corr, user, epc, owner } => {
                let (granted, scope, ops) = self.handle_access_check(user, epc, owner, now);
                let reply = MessageBody::AccessCheckResponse { corr: *corr, granted, scope };
                (vec![Message { from: NodeId::Epcds, to: from.clone(), body: reply }], ops)
            }
            MessageBody::ChallengeMsg { nonce } => {
                let ops = OpCounts { signs: 1, ..OpCounts::default() };
                let reply = MessageBody::ChallengeResponseMsg {
                    nonce: *nonce,
                    reply: self.signer.challenge_reply(nonce),
                };
                (vec![Message { from: NodeId::Epcds, to: from.clone(), body: reply }], ops)
            }
            _ => (Vec::new(), OpCounts::default()),
        }
    }
}

/// Restrict an event to an attribute scope. An empty scope means everything;
/// otherwise `location` and `business_step` survive only if named, and the
/// attribute map is intersected with the scope.
pub fn filter_event(event: &EventRecord, scope: &BTreeSet<String>) -> EventRecord {
    if scope.is_empty() {
        return event.clone();
    }
    EventRecord {
        epc: event.epc.clone(),
        company: event.company.clone(),
        event_time: event.event_time,
        location: if scope.contains("location") {
            event.location.clone()
        } else {
            String::new()
        },
        business_step: if scope.contains("business_step") {
            event.business_step.clone()
        } else {
            String::new()
        },
        attributes: event
            .attributes
            .iter()
            .filter(|(k, _)| scope.contains(*k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect(),
    }
}

#[derive(Debug, Clone)]
struct PendingCheck {
    reply_to: NodeId,
    epc: EpcCode,
}

/// A repository node: its events, its trust in the directory key, and any
/// in-flight access checks (SecureEpcds only).
#[derive(Debug, Clone)]
pub struct EpcisNode {
    pub model: Model,
    pub company: CompanyId,
    pub epcis_url: String,
    pub window: ExpiryWindow,
    events: Vec<EventRecord>,
    trusted: BTreeMap<String, TrustedSigner>,
    /// Signer installed but not yet proven via challenge.
    candidate: Option<TrustedSigner>,
    outstanding_challenge: Option<[u8; 32]>,
    pending: BTreeMap<u64, PendingCheck>,
    next_corr: u64,
}

impl EpcisNode {
    pub fn new(
        model: Model,
        company: CompanyId,
        epcis_url: String,
        window: ExpiryWindow,
        events: Vec<EventRecord>,
    ) -> Self {
        EpcisNode {
            model,
            company,
            epcis_url,
            window,
            events,
            trusted: BTreeMap::new(),
            candidate: None,
            outstanding_challenge: None,
            pending: BTreeMap::new(),
            next_corr: 0,
        }
    }

    pub fn node_id(&self) -> NodeId {
        NodeId::Epcis(self.company.clone())
    }

    /// Install a signer as immediately trusted (key already proven).
    pub fn trust_signer(&mut self, signer: TrustedSigner) {
        self.trusted.insert(signer.key_id.clone(), signer);
    }

    /// Append an event to the repository's store (mid-run publishes).
    pub fn add_event(&mut self, event: EventRecord) {
        self.events.push(event);
    }

    /// Stage a signer that must first prove possession via challenge.
    pub fn stage_candidate(&mut self, signer: TrustedSigner) {
        self.candidate = Some(signer);
    }

    pub fn trusts(&self, key_id: &str) -> bool {
        self.trusted.contains_key(key_id)
    }

    /// Open a proof-of-possession round for the staged candidate.
    pub fn start_challenge(&mut self, nonce: [u8; 32]) -> MessageBody {
        self.outstanding_challenge = Some(nonce);
        MessageBody::ChallengeMsg { nonce }
    }

    fn handle_challenge_response(
        &mut self,
        nonce: &[u8; 32],
        reply: &ChallengeReply,
    ) -> OpCounts {
        let ops = OpCounts { verifies: 1, ..OpCounts::default() };
        if self.outstanding_challenge.take() != Some(*nonce) {
            return ops; // stale or never issued; candidate stays untrusted
        }
        let Some(candidate) = self.candidate.take() else {
            return ops;
        };
        let proven = match (&candidate.material, reply) {
            (TrustMaterial::Rsa(vk), ChallengeReply::Rsa(tag)) => vk
                .verify_recover(&tag.signature)
                .map(|d| d == pki::challenge_digest(nonce))
                .unwrap_or(false),
            (TrustMaterial::Modeled { fingerprint }, ChallengeReply::Modeled { fingerprint: f, .. }) => {
                fingerprint == f
            }
            _ => false,
        };
        if proven {
            self.trusted.insert(candidate.key_id.clone(), candidate);
        } else {
            self.candidate = Some(candidate); // keep staged; still untrusted
        }
        ops
    }

    fn events_for(&self, epc: &EpcCode, scope: &BTreeSet<String>) -> Vec<EventRecord> {
        self.events
            .iter()
            .filter(|e| &e.epc == epc)
            .map(|e| filter_event(e, scope))
            .collect()
    }

    /// Token acceptance for `SignEpc`: resolve the key, refuse expired
    /// signers, run the local check, and require the token to name this
    /// repository. Returns the granted scope.
    fn authorize(
        &self,
        user: &UserId,
        credential: Option<&Credential>,
        now: u64,
        ops: &mut OpCounts,
    ) -> Result<BTreeSet<String>, AuthReject> {
        let Some(cred) = credential else {
            return Err(AuthReject::MissingCredential);
        };
        let Some(signer) = self.trusted.get(cred.tag.key_id()) else {
            return Err(AuthReject::SignatureInvalid);
        };
        if pki::check_key_expiry(signer.valid_until, now) == pki::KeyStatus::Expired {
            return Err(AuthReject::SignerKeyExpired);
        }
        ops.verifies += 1;
        let outcome = match (&signer.material, &cred.tag) {
            (TrustMaterial::Rsa(vk), TagKind::Rsa(tag)) => {
                token::check_token(vk, user, &cred.rights, tag, now, &self.window)
            }
            (TrustMaterial::Modeled { fingerprint }, TagKind::Modeled(seal)) => {
                check_modeled(*fingerprint, user, &cred.rights, seal, now, &self.window)
            }
            _ => CheckOutcome::Reject(RejectReason::SignatureInvalid),
        };
        match outcome {
            CheckOutcome::Accept => {
                if cred.rights.epcis_url != self.epcis_url {
                    Err(AuthReject::WrongRepository)
                } else {
                    Ok(cred.rights.scope.clone())
                }
            }
            CheckOutcome::Reject(r) => Err(r.into()),
        }
    }

    /// Handle a user's event query under the node's model. The returned
    /// messages never include a directory-bound message in `SignEpc` mode;
    /// in `SecureEpcds` mode exactly one `AccessCheckRequest` is emitted.
    pub fn handle_user_query(
        &mut self,
        from: &NodeId,
        user: &UserId,
        epc: &EpcCode,
        credential: Option<&Credential>,
        now: u64,
    ) -> (Vec<Message>, OpCounts) {
        let me = self.node_id();
        match self.model {
            Model::DirectoryOpen => {
                let ops = OpCounts { db_lookups: 1, ..OpCounts::default() };
                let events = self.events_for(epc, &BTreeSet::new());
                (
                    vec![Message {
                        from: me,
                        to: from.clone(),
                        body: MessageBody::IsResponse { events },
                    }],
                    ops,
                )
            }
            Model::SecureEpcds => {
                let mut ops = OpCounts::default();
                ops.remote_checks += 1;
                let corr = self.next_corr;
                self.next_corr += 1;
                self.pending.insert(
                    corr,
                    PendingCheck { reply_to: from.clone(), epc: epc.clone() },
                );
                (
                    vec![Message {
                        from: me,
                        to: NodeId::Epcds,
                        body: MessageBody::AccessCheckRequest {
                            corr,
                            user: user.clone(),
                            epc: epc.clone(),
                            owner: self.company.clone(),
                        },
                    }],
                    ops,
                )
            }
            Model::SignEpc => {
                let mut ops = OpCounts::default();
                match self.authorize(user, credential, now, &mut ops) {
                    Ok(scope) => {
                        ops.db_lookups += 1;
                        let events = self.events_for(&credential.unwrap().rights.epc, &scope);
                        (
                            vec![Message {
                                from: me,
                                to: from.clone(),
                                body: MessageBody::IsResponse { events },
                            }],
                            ops,
                        )
                    }
                    Err(reason) => (
                        vec![Message {
                            from: me,
                            to: from.clone(),
                            body: MessageBody::ErrorResponse {
                                code: ErrorCode::AccessDenied(reason),
                                detail: format!("query for {epc} rejected"),
                            },
                        }],
                        ops,
                    ),
                }
            }
        }
    }

    /// Completion path for `SecureEpcds`: the directory's verdict arrives.
    pub fn handle_access_check_response(
        &mut self,
        corr: u64,
        granted: bool,
        scope: &BTreeSet<String>,
    ) -> (Vec<Message>, OpCounts) {
        let me = self.node_id();
        let Some(pending) = self.pending.remove(&corr) else {
            return (Vec::new(), OpCounts::default());
        };
        if granted {
            let ops = OpCounts { db_lookups: 1, ..OpCounts::default() };
            let events = self.events_for(&pending.epc, scope);
            (
                vec![Message {
                    from: me,
                    to: pending.reply_to,
                    body: MessageBody::IsResponse { events },
                }],
                ops,
            )
        } else {
            (
                vec![Message {
                    from: me,
                    to: pending.reply_to,
                    body: MessageBody::ErrorResponse {
                        code: ErrorCode::AccessDenied(AuthReject::PolicyDenied),
                        detail: format!("directory denied access to {}", pending.epc),
                    },
                }],
                OpCounts::default(),
            )
        }
    }

    /// Dispatch one delivered message.
    pub fn handle(&mut self, from: &NodeId, body: &MessageBody, now: u64) -> (Vec<Message>, OpCounts) {
        match body {
            MessageBody::UserQueryIs { user, epc, credential } => {
                self.handle_user_query(from, user, epc, credential.as_ref(), now)
            }
            MessageBody::AccessCheckResponse { corr, granted, scope } => {
                self.handle_access_check_response(*corr, *granted, scope)
            }
            MessageBody::ChallengeResponseMsg { nonce, reply } => {
                (Vec::new(), self.handle_challenge_response(nonce, reply))
            }
            _ => (Vec::new(), OpCounts::default()),
        }
    }
}

/// Modeled-tag counterpart of `token::check_token`, with identical reasons.
fn check_modeled(
    trusted_fingerprint: u64,
    requester: &UserId,
    rights: &AccessRight,
    seal: &ModeledSeal,
    now: u64,
    window: &ExpiryWindow,
) -> CheckOutcome {
    if seal.signer_fingerprint != trusted_fingerprint {
        return CheckOutcome::Reject(RejectReason::SignatureInvalid);
    }
    let expected = token::make_digest(requester, rights, &window.label_at(now));
    if seal.digest != expected {
        return CheckOutcome::Reject(RejectReason::DigestMismatch);
    }
    if requester != &rights.userid {
        return CheckOutcome::Reject(RejectReason::UseridMismatch);
    }
    CheckOutcome::Accept
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    /// Mutate one field of the captured rights, keep the tag.
    TamperRights,
    /// Present another user's capability under the attacker's own identity.
    ReplayAsSelf,
    /// Present one's own capability after the expiry window rolled.
    ReuseExpired,
    /// Craft fresh rights and sign them with a key that is not the
    /// directory's, spoofing the directory's key id.
    ForgeSignature,
}

pub const ALL_ATTACK_KINDS: [AttackKind; 4] = [
    AttackKind::TamperRights,
    AttackKind::ReplayAsSelf,
    AttackKind::ReuseExpired,
    AttackKind::ForgeSignature,
];

impl AttackKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttackKind::TamperRights => "tamper-rights",
            AttackKind::ReplayAsSelf => "replay-as-self",
            AttackKind::ReuseExpired => "reuse-expired",
            AttackKind::ForgeSignature => "forge-signature",
        }
    }
}

/// The rejection each attack class must produce.
///
/// Tampering, replay, and expired reuse all change an input of the digest the
/// verifier rebuilds (rights, requesting user, window label), so they surface
/// as `DigestMismatch`; a forged signature fails recovery outright.
pub fn expected_rejection(kind: AttackKind) -> AuthReject {
    match kind {
        AttackKind::TamperRights => AuthReject::DigestMismatch,
        AttackKind::ReplayAsSelf => AuthReject::DigestMismatch,
        AttackKind::ReuseExpired => AuthReject::DigestMismatch,
        AttackKind::ForgeSignature => AuthReject::SignatureInvalid,
    }
}

/// Build the repository query an attacker sends for a captured directory
/// response entry. `entry` must carry a credential. The attacker is a real,
/// authenticated participant: the query's `user` field is whatever identity
/// they can authenticate as (their own, except for `ReuseExpired` where the
/// original holder resends their stale token).
pub fn attacker_action(
    kind: AttackKind,
    entry: &DsEntry,
    attacker: &UserId,
    rogue: &SignerState,
    now: u64,
    window: &ExpiryWindow,
) -> MessageBody {
    let cred = entry.credential.as_ref().expect("captured entry has a credential");
    let (user, credential) = match kind {
        AttackKind::TamperRights => {
            let mut rights = cred.rights.clone();
            if rights.scope.is_empty() {
                rights.scope.insert("secret".to_string());
            } else {
                rights.scope.clear(); // widen a restricted grant to everything
            }
            (
                attacker.clone(),
                Credential {
                    rights,
                    expiry_label: cred.expiry_label.clone(),
                    tag: cred.tag.clone(),
                },
            )
        }
        AttackKind::ReplayAsSelf => (attacker.clone(), cred.clone()),
        AttackKind::ReuseExpired => (cred.rights.userid.clone(), cred.clone()),
        AttackKind::ForgeSignature => {
            let rights = AccessRight {
                userid: attacker.clone(),
                epc: cred.rights.epc.clone(),
                epcis_url: entry.epcis_url.clone(),
                scope: BTreeSet::new(),
            };
            let label = window.label_at(now);
            let digest = token::make_digest(attacker, &rights, &label);
            // sign with the rogue key but keep the directory's key id
            let tag = match rogue.tag_over(&digest) {
                TagKind::Rsa(mut t) => {
                    t.key_id = cred.tag.key_id().to_string();
                    TagKind::Rsa(t)
                }
                TagKind::Modeled(mut s) => {
                    s.key_id = cred.tag.key_id().to_string();
                    TagKind::Modeled(s)
                }
            };
            (
                attacker.clone(),
                Credential { rights, expiry_label: label, tag },
            )
        }
    };
    let epc = credential.rights.epc.clone();
    MessageBody::UserQueryIs { user, epc, credential: Some(credential) }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct AttackTally {
    pub attempts: u64,
    pub rejected_expected: u64,
    pub rejected_other: BTreeMap<String, u64>,
    pub accepted: u64,
}

/// Outcome of a randomized attack campaign plus its honest controls.
#[derive(Debug, Clone, Serialize)]
pub struct AttackSuiteReport {
    pub trials: u64,
    pub eligible_pairs: u64,
    pub honest_attempts: u64,
    pub honest_accepted: u64,
    pub attacks: BTreeMap<String, AttackTally>,
    /// True when there was nothing to attack (no trials or no grants).
    pub vacuous: bool,
    pub pass: bool,
}

/// Run `trials` randomized captures against a `SignEpc` network. Each trial
/// issues a fresh capability to a random victim, confirms the victim's own
/// query succeeds (honest control), then replays the four attack classes and
/// requires each to be rejected with its documented reason.
pub fn run_attack_suite(
    epcds: &EpcdsNode,
    epcis_nodes: &mut BTreeMap<CompanyId, EpcisNode>,
    attacker: &UserId,
    rogue: &SignerState,
    trials: u64,
    seed: u64,
    now: u64,
) -> AttackSuiteReport {
    use rand::Rng as _;
    use rand::SeedableRng as _;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);

    assert_eq!(epcds.model, Model::SignEpc, "attack suite runs against SignEpc");

    // victims: known users other than the attacker, paired with EPCs the
    // directory actually grants them
    let mut eligible: Vec<(UserId, EpcCode)> = Vec::new();
    let users: Vec<UserId> = epcds.registry.users().map(|(u, _)| u.clone()).collect();
    for user in &users {
        if user == attacker {
            continue;
        }
        for epc in epcds.registry.epcs() {
            if let (Ok(entries), _) = epcds.handle_query(user, &epc, now) {
                if entries.iter().any(|e| e.credential.is_some()) {
                    eligible.push((user.clone(), epc.clone()));
                }
            }
        }
    }

    let mut report = AttackSuiteReport {
        trials,
        eligible_pairs: eligible.len() as u64,
        honest_attempts: 0,
        honest_accepted: 0,
        attacks: ALL_ATTACK_KINDS
            .iter()
            .map(|k| (k.as_str().to_string(), AttackTally::default()))
            .collect(),
        vacuous: trials == 0 || eligible.is_empty(),
        pass: true,
    };
    if report.vacuous {
        return report;
    }

    let window_secs = epcds.window.window_seconds();
    for _ in 0..trials {
        let (victim, epc) = eligible[rng.random_range(0..eligible.len())].clone();
        let (entries, _) = epcds.handle_query(&victim, &epc, now);
        let entries = entries.expect("eligible pair still grants");
        let granted: Vec<&DsEntry> = entries.iter().filter(|e| e.credential.is_some()).collect();
        let entry = granted[rng.random_range(0..granted.len())].clone();

        let epcis = epcis_nodes
            .get_mut(&entry.company)
            .expect("granting company has a repository node");

        // honest control: the victim uses the capability as issued
        report.honest_attempts += 1;
        let from = NodeId::User(victim.clone());
        let (replies, _) = epcis.handle_user_query(
            &from,
            &victim,
            &epc,
            entry.credential.as_ref(),
            now,
        );
        if matches!(replies.first().map(|m| &m.body), Some(MessageBody::IsResponse { .. })) {
            report.honest_accepted += 1;
        } else {
            report.pass = false;
        }

        for kind in ALL_ATTACK_KINDS {
            let check_at = match kind {
                AttackKind::ReuseExpired => now + window_secs, // window has rolled
                _ => now,
            };
            let body = attacker_action(kind, &entry, attacker, rogue, now, &epcds.window);
            let MessageBody::UserQueryIs { user, epc, credential } = body else {
                unreachable!()
            };
            let sender = NodeId::User(user.clone());
            let (replies, _) =
                epcis.handle_user_query(&sender, &user, &epc, credential.as_ref(), check_at);
            let tally = report.attacks.get_mut(kind.as_str()).unwrap();
            tally.attempts += 1;
            match replies.first().map(|m| &m.body) {
                Some(MessageBody::ErrorResponse {
                    code: ErrorCode::AccessDenied(reason),
                    ..
                }) => {
                    if *reason == expected_rejection(kind) {
                        tally.rejected_expected += 1;
                    } else {
                        *tally
                            .rejected_other
                            .entry(reason.as_str().to_string())
                            .or_insert(0) += 1;
                        report.pass = false;
                    }
                }
                _ => {
                    tally.accepted += 1;
                    report.pass = false;
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PublishRecord;
    use crate::policy::{AccessPolicy, Visibility};

    fn epc() -> EpcCode {
        EpcCode::parse("urn:epc:id:sgtin:0614141.112345.400").unwrap()
    }

    fn user(s: &str) -> UserId {
        UserId::new(s).unwrap()
    }

    fn company(s: &str) -> CompanyId {
        CompanyId::new(s).unwrap()
    }

    fn url(c: &str) -> String {
        format!("https://epcis.{c}.example/q")
    }

    fn event(c: &str) -> EventRecord {
        EventRecord {
            epc: epc(),
            company: company(c),
            event_time: 1000,
            location: format!("site-{c}"),
            business_step: "receiving".into(),
            attributes: [
                ("quality".to_string(), "ok".to_string()),
                ("warehouse".to_string(), "w1".to_string()),
            ]
            .into(),
        }
    }

    /// acme@100 publishes open, globex@200 limited to downstream with scope
    /// {location}, initech@300 hides. One user per company plus an attacker
    /// from a non-publishing company.
    fn network(model: Model) -> (EpcdsNode, BTreeMap<CompanyId, EpcisNode>) {
        let mut registry = PublishRegistry::new();
        let policies: [(&str, u64, AccessPolicy); 3] = [
            ("acme", 100, AccessPolicy::open()),
            (
                "globex",
                200,
                AccessPolicy::limited(
                    Visibility::DownStream,
                    ["location".to_string()].into(),
                )
                .unwrap(),
            ),
            ("initech", 300, AccessPolicy::hidden()),
        ];
        for (c, t, p) in policies {
            registry
                .publish(PublishRecord {
                    epc: epc(),
                    company: company(c),
                    publish_time: t,
                    epcis_url: url(c),
                    policy: p,
                })
                .unwrap();
            registry.bind_user(user(&format!("u-{c}")), company(c));
        }
        registry.bind_user(user("u-mallory"), company("mallory-co"));

        let window = ExpiryWindow::daily();
        let signer = SignerState::modeled(7, u64::MAX);
        let trust = signer.trust_record();
        let epcds = EpcdsNode::new(model, registry, window, signer);

        let mut epcis_nodes = BTreeMap::new();
        for c in ["acme", "globex", "initech"] {
            let mut node = EpcisNode::new(
                model,
                company(c),
                url(c),
                window,
                vec![event(c)],
            );
            node.trust_signer(trust.clone());
            epcis_nodes.insert(company(c), node);
        }
        (epcds, epcis_nodes)
    }

    const NOW: u64 = 1_700_000_000;

    fn granted_companies(entries: &[DsEntry]) -> Vec<&str> {
        entries.iter().map(|e| e.company.as_str()).collect()
    }

    #[test]
    fn directory_open_lists_everyone_without_credentials() {
        let (epcds, _) = network(Model::DirectoryOpen);
        let (res, ops) = epcds.handle_query(&user("u-mallory"), &epc(), NOW);
        let entries = res.unwrap();
        assert_eq!(granted_companies(&entries), ["acme", "globex", "initech"]);
        assert!(entries.iter().all(|e| e.credential.is_none()));
        assert_eq!(ops.policy_checks, 0);
    }

    #[test]
    fn sign_epc_issues_one_credential_per_grant() {
        let (epcds, _) = network(Model::SignEpc);
        // initech's user: acme grants (open), globex grants (initech is
        // downstream of globex), initech grants (own record)
        let (res, ops) = epcds.handle_query(&user("u-initech"), &epc(), NOW);
        let entries = res.unwrap();
        assert_eq!(granted_companies(&entries), ["acme", "globex", "initech"]);
        assert!(entries.iter().all(|e| e.credential.is_some()));
        assert_eq!(ops.signs, 3);
        assert_eq!(ops.policy_checks, 3);
        assert_eq!(ops.db_lookups, 1);

        // the globex grant carries globex's restricted scope
        let globex = &entries[1];
        let cred = globex.credential.as_ref().unwrap();
        assert_eq!(cred.rights.scope, ["location".to_string()].into());
        // own-record grant has full scope
        let own = &entries[2];
        assert!(own.credential.as_ref().unwrap().rights.scope.is_empty());
    }

    #[test]
    fn upstream_user_is_filtered_by_policy() {
        let (epcds, _) = network(Model::SignEpc);
        // acme's user: own record only; globex limits to downstream (acme is
        // upstream), initech hides
        let (res, _) = epcds.handle_query(&user("u-acme"), &epc(), NOW);
        assert_eq!(granted_companies(&res.unwrap()), ["acme"]);
    }

    #[test]
    fn unknown_epc_and_no_grant_errors() {
        let (epcds, _) = network(Model::SignEpc);
        let other = EpcCode::parse("urn:epc:id:sgtin:1.2.3").unwrap();
        let (res, _) = epcds.handle_query(&user("u-acme"), &other, NOW);
        assert_eq!(res.unwrap_err(), ErrorCode::UnknownEpc);

        // a registry where the only record hides: outsiders get NoGrant
        let mut registry = PublishRegistry::new();
        registry
            .publish(PublishRecord {
                epc: epc(),
                company: company("initech"),
                publish_time: 1,
                epcis_url: url("initech"),
                policy: AccessPolicy::hidden(),
            })
            .unwrap();
        registry.bind_user(user("u-x"), company("x-co"));
        let epcds = EpcdsNode::new(
            Model::SignEpc,
            registry,
            ExpiryWindow::daily(),
            SignerState::modeled(1, u64::MAX),
        );
        let (res, _) = epcds.handle_query(&user("u-x"), &epc(), NOW);
        assert_eq!(res.unwrap_err(), ErrorCode::NoGrant);
    }

    #[test]
    fn sign_epc_repository_serves_scope_filtered_events_locally() {
        let (epcds, mut epcis) = network(Model::SignEpc);
        let requester = user("u-initech");
        let (res, _) = epcds.handle_query(&requester, &epc(), NOW);
        let entries = res.unwrap();
        let globex_entry = entries.iter().find(|e| e.company.as_str() == "globex").unwrap();

        let node = epcis.get_mut(&company("globex")).unwrap();
        let from = NodeId::User(requester.clone());
        let (replies, ops) = node.handle_user_query(
            &from,
            &requester,
            &epc(),
            globex_entry.credential.as_ref(),
            NOW,
        );

        // no directory-bound traffic, exactly one reply to the user
        assert!(replies.iter().all(|m| m.to != NodeId::Epcds));
        assert_eq!(replies.len(), 1);
        assert_eq!(ops.verifies, 1);
        assert_eq!(ops.db_lookups, 1);

        let MessageBody::IsResponse { events } = &replies[0].body else {
            panic!("expected events, got {:?}", replies[0].body);
        };
        assert_eq!(events.len(), 1);
        // scope {location}: location survives, quality/warehouse stripped
        assert_eq!(events[0].location, "site-globex");
        assert!(events[0].attributes.is_empty());
        assert!(events[0].business_step.is_empty());
    }

    #[test]
    fn secure_epcds_round_trips_through_the_directory() {
        let (epcds, mut epcis) = network(Model::SecureEpcds);
        let requester = user("u-initech");
        let node = epcis.get_mut(&company("globex")).unwrap();
        let from = NodeId::User(requester.clone());

        let (replies, ops) = node.handle_user_query(&from, &requester, &epc(), None, NOW);
        assert_eq!(replies.len(), 1);
        assert_eq!(ops.remote_checks, 1);
        let MessageBody::AccessCheckRequest { corr, .. } = replies[0].body else {
            panic!("expected access check, got {:?}", replies[0].body);
        };
        assert_eq!(replies[0].to, NodeId::Epcds);

        // directory evaluates and replies
        let (ds_replies, ds_ops) = epcds.handle(&replies[0].from, &replies[0].body, NOW);
        assert_eq!(ds_ops.policy_checks, 1);
        let MessageBody::AccessCheckResponse { granted, ref scope, .. } = ds_replies[0].body
        else {
            panic!("expected verdict");
        };
        assert!(granted);

        let (final_replies, _) = node.handle_access_check_response(corr, granted, scope);
        let MessageBody::IsResponse { ref events } = final_replies[0].body else {
            panic!("expected events");
        };
        assert_eq!(events[0].location, "site-globex");
        assert!(events[0].attributes.is_empty());
    }

    #[test]
    fn secure_epcds_denial_reaches_the_user() {
        let (epcds, mut epcis) = network(Model::SecureEpcds);
        let requester = user("u-mallory");
        let node = epcis.get_mut(&company("initech")).unwrap();
        let from = NodeId::User(requester.clone());
        let (replies, _) = node.handle_user_query(&from, &requester, &epc(), None, NOW);
        let (ds_replies, _) = epcds.handle(&replies[0].from, &replies[0].body, NOW);
        let MessageBody::AccessCheckResponse { corr, granted, ref scope } = ds_replies[0].body
        else {
            panic!("expected verdict");
        };
        assert!(!granted);
        let (final_replies, _) = node.handle_access_check_response(corr, granted, scope);
        assert!(matches!(
            final_replies[0].body,
            MessageBody::ErrorResponse { code: ErrorCode::AccessDenied(AuthReject::PolicyDenied), .. }
        ));
    }

    #[test]
    fn expired_signer_key_is_refused_even_with_valid_signature() {
        let (epcds, mut epcis) = network(Model::SignEpc);
        let requester = user("u-acme");
        let (res, _) = epcds.handle_query(&requester, &epc(), NOW);
        let entry = res.unwrap().remove(0);

        let node = epcis.get_mut(&company("acme")).unwrap();
        // shorten the trusted key's validity below NOW
        let mut stale = epcds.signer.trust_record();
        stale.valid_until = NOW - 1;
        node.trust_signer(stale);

        let from = NodeId::User(requester.clone());
        let (replies, ops) =
            node.handle_user_query(&from, &requester, &epc(), entry.credential.as_ref(), NOW);
        assert!(matches!(
            replies[0].body,
            MessageBody::ErrorResponse {
                code: ErrorCode::AccessDenied(AuthReject::SignerKeyExpired),
                ..
            }
        ));
        // expiry short-circuits before any verification work
        assert_eq!(ops.verifies, 0);
    }

    #[test]
    fn token_for_another_repository_is_refused() {
        let (epcds, mut epcis) = network(Model::SignEpc);
        let requester = user("u-initech");
        let (res, _) = epcds.handle_query(&requester, &epc(), NOW);
        let entries = res.unwrap();
        let acme_entry = entries.iter().find(|e| e.company.as_str() == "acme").unwrap();

        // present acme's token to globex
        let node = epcis.get_mut(&company("globex")).unwrap();
        let from = NodeId::User(requester.clone());
        let (replies, _) = node.handle_user_query(
            &from,
            &requester,
            &epc(),
            acme_entry.credential.as_ref(),
            NOW,
        );
        assert!(matches!(
            replies[0].body,
            MessageBody::ErrorResponse {
                code: ErrorCode::AccessDenied(AuthReject::WrongRepository),
                ..
            }
        ));
    }

    #[test]
    fn missing_credential_is_rejected_in_sign_epc_mode() {
        let (_, mut epcis) = network(Model::SignEpc);
        let requester = user("u-acme");
        let node = epcis.get_mut(&company("acme")).unwrap();
        let from = NodeId::User(requester.clone());
        let (replies, _) = node.handle_user_query(&from, &requester, &epc(), None, NOW);
        assert!(matches!(
            replies[0].body,
            MessageBody::ErrorResponse {
                code: ErrorCode::AccessDenied(AuthReject::MissingCredential),
                ..
            }
        ));
    }

    #[test]
    fn each_attack_kind_is_rejected_with_its_documented_reason() {
        let (epcds, mut epcis) = network(Model::SignEpc);
        let victim = user("u-initech");
        let attacker = user("u-mallory");
        let rogue = SignerState::modeled(999, u64::MAX);

        let (res, _) = epcds.handle_query(&victim, &epc(), NOW);
        let entries = res.unwrap();
        let entry = entries.iter().find(|e| e.company.as_str() == "globex").unwrap();

        for kind in ALL_ATTACK_KINDS {
            let check_at = match kind {
                AttackKind::ReuseExpired => NOW + 86_400,
                _ => NOW,
            };
            let body = attacker_action(kind, entry, &attacker, &rogue, NOW, &epcds.window);
            let MessageBody::UserQueryIs { user: sender, epc: qepc, credential } = body else {
                unreachable!()
            };
            let node = epcis.get_mut(&company("globex")).unwrap();
            let from = NodeId::User(sender.clone());
            let (replies, _) =
                node.handle_user_query(&from, &sender, &qepc, credential.as_ref(), check_at);
            let MessageBody::ErrorResponse { code: ErrorCode::AccessDenied(reason), .. } =
                &replies[0].body
            else {
                panic!("{:?} was not rejected: {:?}", kind, replies[0].body);
            };
            assert_eq!(*reason, expected_rejection(kind), "attack {kind:?}");
        }
    }

    #[test]
    fn attack_suite_passes_on_an_honest_network() {
        let (epcds, mut epcis) = network(Model::SignEpc);
        let attacker = user("u-mallory");
        let rogue = SignerState::modeled(999, u64::MAX);
        let report = run_attack_suite(&epcds, &mut epcis, &attacker, &rogue, 25, 42, NOW);
        assert!(report.pass);
        assert!(!report.vacuous);
        assert_eq!(report.honest_attempts, 25);
        assert_eq!(report.honest_accepted, 25);
        for (_, tally) in &report.attacks {
            assert_eq!(tally.attempts, 25);
            assert_eq!(tally.rejected_expected, 25);
            assert_eq!(tally.accepted, 0);
        }
    }

    #[test]
    fn attack_suite_flags_a_miswired_verifier() {
        let (epcds, mut epcis) = network(Model::SignEpc);
        // repositories trust the wrong key: honest controls must fail
        let wrong = SignerState::modeled(31337, u64::MAX);
        let mut record = wrong.trust_record();
        record.key_id = epcds.signer.key_id().to_string();
        for node in epcis.values_mut() {
            node.trust_signer(record.clone());
        }
        let attacker = user("u-mallory");
        let rogue = SignerState::modeled(999, u64::MAX);
        let report = run_attack_suite(&epcds, &mut epcis, &attacker, &rogue, 5, 42, NOW);
        assert!(!report.pass);
        assert_eq!(report.honest_accepted, 0);
    }

    #[test]
    fn attack_suite_with_zero_trials_is_vacuous() {
        let (epcds, mut epcis) = network(Model::SignEpc);
        let attacker = user("u-mallory");
        let rogue = SignerState::modeled(999, u64::MAX);
        let report = run_attack_suite(&epcds, &mut epcis, &attacker, &rogue, 0, 42, NOW);
        assert!(report.pass);
        assert!(report.vacuous);
    }

    #[test]
    fn challenge_handshake_installs_trust_only_on_proof() {
        let (epcds, _) = network(Model::SignEpc);
        let window = ExpiryWindow::daily();

        // candidate staged, not yet trusted
        let mut node = EpcisNode::new(
            Model::SignEpc,
            company("acme"),
            url("acme"),
            window,
            vec![event("acme")],
        );
        node.stage_candidate(epcds.signer.trust_record());
        assert!(!node.trusts(epcds.signer.key_id()));

        // honest proof
        let challenge = node.start_challenge([9u8; 32]);
        let (replies, ops) = epcds.handle(&node.node_id(), &challenge, NOW);
        assert_eq!(ops.signs, 1);
        let (_, vops) = node.handle(&NodeId::Epcds, &replies[0].body, NOW);
        assert_eq!(vops.verifies, 1);
        assert!(node.trusts(epcds.signer.key_id()));

        // an impostor fails the proof and trust is withheld
        let mut node2 = EpcisNode::new(
            Model::SignEpc,
            company("acme"),
            url("acme"),
            window,
            vec![],
        );
        node2.stage_candidate(epcds.signer.trust_record());
        let _ = node2.start_challenge([5u8; 32]);
        let impostor = SignerState::modeled(4242, u64::MAX);
        let reply = MessageBody::ChallengeResponseMsg {
            nonce: [5u8; 32],
            reply: impostor.challenge_reply(&[5u8; 32]),
        };
        node2.handle(&NodeId::Epcds, &reply, NOW);
        assert!(!node2.trusts(epcds.signer.key_id()));
    }

    #[test]
    fn rsa_and_modeled_modes_agree_on_outcomes() {
        // same network, one with real signatures; behaviors must match
        let (epcds_m, mut epcis_m) = network(Model::SignEpc);

        let kp = pki::generate_keypair_allow_weak(1024, u64::MAX, Some(77)).unwrap();
        let signer = SignerState::Rsa(kp);
        let trust = signer.trust_record();
        let mut epcds_r = epcds_m.clone();
        epcds_r.signer = signer;
        let mut epcis_r = epcis_m.clone();
        for node in epcis_r.values_mut() {
            node.trust_signer(trust.clone());
        }

        let attacker = user("u-mallory");
        let rogue_m = SignerState::modeled(999, u64::MAX);
        let rogue_r = SignerState::Rsa(
            pki::generate_keypair_allow_weak(1024, u64::MAX, Some(888)).unwrap(),
        );
        let rm = run_attack_suite(&epcds_m, &mut epcis_m, &attacker, &rogue_m, 10, 1, NOW);
        let rr = run_attack_suite(&epcds_r, &mut epcis_r, &attacker, &rogue_r, 10, 1, NOW);
        assert!(rm.pass && rr.pass);
        assert_eq!(rm.honest_accepted, rr.honest_accepted);
    }
}
