//! Product codes, publish records, and the discovery registry.
//!
//! The registry maps an EPC to the set of companies that published it, each
//! with the repository URL to query and the access policy that governs who
//! may see the published data. Publish order (by timestamp) defines the
//! up/down stream relations the policy layer evaluates.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::AccessPolicy;

/// URN prefix every product code must carry.
pub const EPC_URN_PREFIX: &str = "urn:epc:id:sgtin:";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("malformed EPC {input:?}: expected {EPC_URN_PREFIX}<digits>.<digits>.<digits>")]
    MalformedEpc { input: String },
    #[error("publish timestamp collision on {epc} at t={time}: {existing} vs {incoming}")]
    TimestampCollision {
        epc: String,
        time: u64,
        existing: String,
        incoming: String,
    },
    #[error("invalid {what}: {reason}")]
    InvalidIdentifier { what: &'static str, reason: String },
}

/// A normalized product code in URN form.
///
/// The prefix is matched case-insensitively and stored lowercased; the three
/// dot-separated item segments must be non-empty ASCII digit runs. Two codes
/// compare equal whenever their normalized forms do.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EpcCode(String);

impl EpcCode {
    pub fn parse(raw: &str) -> Result<Self, ModelError> {
        let malformed = || ModelError::MalformedEpc { input: raw.to_string() };
        let Some((prefix, rest)) = raw.split_at_checked(EPC_URN_PREFIX.len()) else {
            return Err(malformed());
        };
        if !prefix.eq_ignore_ascii_case(EPC_URN_PREFIX) {
            return Err(malformed());
        }
        let segments: Vec<&str> = rest.split('.').collect();
        if segments.len() != 3 {
            return Err(malformed());
        }
        for seg in &segments {
            if seg.is_empty() || !seg.bytes().all(|b| b.is_ascii_digit()) {
                return Err(malformed());
            }
        }
        Ok(EpcCode(format!("{EPC_URN_PREFIX}{rest}")))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EpcCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for EpcCode {
    type Error = ModelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        EpcCode::parse(&s)
    }
}

impl From<EpcCode> for String {
    fn from(e: EpcCode) -> String {
        e.0
    }
}

/// Identity of a querying user. Non-empty, no control characters.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct UserId(String);

impl UserId {
    pub fn new(s: impl Into<String>) -> Result<Self, ModelError> {
        let s = s.into();
        if s.is_empty() {
            return Err(ModelError::InvalidIdentifier {
                what: "user id",
                reason: "empty".into(),
            });
        }
        if s.chars().any(|c| c.is_control()) {
            return Err(ModelError::InvalidIdentifier {
                what: "user id",
                reason: "contains control characters".into(),
            });
        }
        Ok(UserId(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for UserId {
    type Error = ModelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        UserId::new(s)
    }
}

impl From<UserId> for String {
    fn from(u: UserId) -> String {
        u.0
    }
}

/// Identity of a publishing company. Opaque, non-empty.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CompanyId(String);

impl CompanyId {
    pub fn new(s: impl Into<String>) -> Result<Self, ModelError> {
        let s = s.into();
        if s.is_empty() {
            return Err(ModelError::InvalidIdentifier {
                what: "company id",
                reason: "empty".into(),
            });
        }
        Ok(CompanyId(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CompanyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for CompanyId {
    type Error = ModelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        CompanyId::new(s)
    }
}

impl From<CompanyId> for String {
    fn from(c: CompanyId) -> String {
        c.0
    }
}

/// One observation stored at a repository. `attributes` carries the business
/// payload (warehouse, quality, ...); the map keeps names unique and ordered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub epc: EpcCode,
    pub company: CompanyId,
    /// UTC seconds.
    pub event_time: u64,
    pub location: String,
    pub business_step: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

/// A company's claim, in the discovery registry, that it holds data for an
/// EPC: where to query it and under which policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublishRecord {
    pub epc: EpcCode,
    pub company: CompanyId,
    /// UTC seconds; defines the stream order between publishers of one EPC.
    pub publish_time: u64,
    pub epcis_url: String,
    pub policy: AccessPolicy,
}

/// The discovery service's view of the network: who published which EPC, and
/// which company each known user belongs to.
///
/// At most one record exists per (epc, company); a company re-publishing an
/// EPC replaces its record, which is how policies get updated. Publish times
/// for one EPC must be distinct across companies so the stream order is total.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublishRegistry {
    records: Vec<PublishRecord>,
    user_company: BTreeMap<UserId, CompanyId>,
}

impl PublishRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert or replace a publish record. Replacement happens only for the
    /// same (epc, company) pair; a second company publishing the same EPC at
    /// an already-taken timestamp is rejected, because the up/down stream
    /// relations need a strict order.
    pub fn publish(&mut self, record: PublishRecord) -> Result<(), ModelError> {
        if let Some(clash) = self.records.iter().find(|r| {
            r.epc == record.epc
                && r.company != record.company
                && r.publish_time == record.publish_time
        }) {
            return Err(ModelError::TimestampCollision {
                epc: record.epc.to_string(),
                time: record.publish_time,
                existing: clash.company.to_string(),
                incoming: record.company.to_string(),
            });
        }
        match self
            .records
            .iter_mut()
            .find(|r| r.epc == record.epc && r.company == record.company)
        {
            Some(slot) => *slot = record,
            None => self.records.push(record),
        }
        Ok(())
    }

    /// All publishers of an EPC, ordered by publish time ascending. Empty if
    /// nobody published it.
    pub fn lookup(&self, epc: &EpcCode) -> Vec<&PublishRecord> {
        let mut hits: Vec<&PublishRecord> = self.records.iter().filter(|r| &r.epc == epc).collect();
        hits.sort_by_key(|r| r.publish_time);
        hits
    }

    /// The record one company published for an EPC, if any.
    pub fn record_of(&self, epc: &EpcCode, company: &CompanyId) -> Option<&PublishRecord> {
        self.records
            .iter()
            .find(|r| &r.epc == epc && &r.company == company)
    }

    pub fn records(&self) -> &[PublishRecord] {
        &self.records
    }

    pub fn bind_user(&mut self, user: UserId, company: CompanyId) {
        self.user_company.insert(user, company);
    }

    /// Company a user belongs to; `None` for users this registry has never
    /// seen, which the policy layer treats as unknown.
    pub fn company_of(&self, user: &UserId) -> Option<&CompanyId> {
        self.user_company.get(user)
    }

    pub fn users(&self) -> impl Iterator<Item = (&UserId, &CompanyId)> {
        self.user_company.iter()
    }

    /// Distinct EPCs present in the registry, sorted.
    pub fn epcs(&self) -> Vec<EpcCode> {
        let mut out: Vec<EpcCode> = self.records.iter().map(|r| r.epc.clone()).collect();
        out.sort();
        out.dedup();
        out
    }
}
