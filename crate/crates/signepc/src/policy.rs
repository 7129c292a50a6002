//! Per-record access policies and their evaluation against the registry.
//!
//! A publisher attaches one policy to each record: `All` (anyone may query),
//! `Hide` (nobody may), or `Limited` (only companies that published the same
//! EPC, optionally restricted to those up- or down-stream of the owner in
//! publish order). The scope set names the event attributes a grant exposes;
//! an empty scope means all of them.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CompanyId, EpcCode, PublishRegistry, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    All,
    Limited,
    Hide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Visibility {
    UpStream,
    DownStream,
    WholeStream,
    /// Placeholder for rules that do not use stream direction.
    NotApplicable,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("company {owner} has not published {epc}")]
    OwnerNotPublished { owner: String, epc: String },
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
}

/// Policy attached to one publish record.
///
/// Invariant: `visibility` is `NotApplicable` exactly when `rule` is `All`
/// or `Hide`; direction only refines `Limited`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PolicyRepr", into = "PolicyRepr")]
pub struct AccessPolicy {
    pub rule: Rule,
    pub visibility: Visibility,
    /// Attribute names a grant exposes; empty means all attributes.
    pub scope: BTreeSet<String>,
}

impl AccessPolicy {
    pub fn new(
        rule: Rule,
        visibility: Visibility,
        scope: BTreeSet<String>,
    ) -> Result<Self, PolicyError> {
        let directional = matches!(
            visibility,
            Visibility::UpStream | Visibility::DownStream | Visibility::WholeStream
        );
        match rule {
            Rule::Limited if !directional => Err(PolicyError::InvalidPolicy(
                "limited rule needs a stream visibility".into(),
            )),
            Rule::All | Rule::Hide if directional => Err(PolicyError::InvalidPolicy(
                "visibility only applies to the limited rule".into(),
            )),
            _ => Ok(AccessPolicy { rule, visibility, scope }),
        }
    }

    /// `All` with full scope.
    pub fn open() -> Self {
        AccessPolicy {
            rule: Rule::All,
            visibility: Visibility::NotApplicable,
            scope: BTreeSet::new(),
        }
    }

    /// `Hide`.
    pub fn hidden() -> Self {
        AccessPolicy {
            rule: Rule::Hide,
            visibility: Visibility::NotApplicable,
            scope: BTreeSet::new(),
        }
    }

    /// `Limited` with the given direction and scope.
    pub fn limited(visibility: Visibility, scope: BTreeSet<String>) -> Result<Self, PolicyError> {
        AccessPolicy::new(Rule::Limited, visibility, scope)
    }
}

#[derive(Serialize, Deserialize)]
struct PolicyRepr {
    rule: Rule,
    #[serde(default = "default_visibility")]
    visibility: Visibility,
    #[serde(default)]
    scope: BTreeSet<String>,
}

fn default_visibility() -> Visibility {
    Visibility::NotApplicable
}

impl TryFrom<PolicyRepr> for AccessPolicy {
    type Error = PolicyError;
    fn try_from(r: PolicyRepr) -> Result<Self, Self::Error> {
        AccessPolicy::new(r.rule, r.visibility, r.scope)
    }
}

impl From<AccessPolicy> for PolicyRepr {
    fn from(p: AccessPolicy) -> PolicyRepr {
        PolicyRepr {
            rule: p.rule,
            visibility: p.visibility,
            scope: p.scope,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GrantReason {
    RuleAll,
    RuleLimitedMember,
    VisibilityMatch,
    DeniedHide,
    DeniedNotPartner,
    DeniedUnknownUser,
}

/// Outcome of evaluating one policy for one requester.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrantDecision {
    pub granted: bool,
    /// Attribute scope of the grant; empty set means all attributes when
    /// granted, and is meaningless when denied.
    pub scope: BTreeSet<String>,
    pub reason: GrantReason,
}

impl GrantDecision {
    fn grant(scope: BTreeSet<String>, reason: GrantReason) -> Self {
        GrantDecision { granted: true, scope, reason }
    }

    fn deny(reason: GrantReason) -> Self {
        GrantDecision {
            granted: false,
            scope: BTreeSet::new(),
            reason,
        }
    }
}

/// Companies that published `epc` strictly before `owner` did.
pub fn upstream_set(
    registry: &PublishRegistry,
    epc: &EpcCode,
    owner: &CompanyId,
) -> Result<BTreeSet<CompanyId>, PolicyError> {
    stream_set(registry, epc, owner, |t, pivot| t < pivot)
}

/// Companies that published `epc` strictly after `owner` did.
pub fn downstream_set(
    registry: &PublishRegistry,
    epc: &EpcCode,
    owner: &CompanyId,
) -> Result<BTreeSet<CompanyId>, PolicyError> {
    stream_set(registry, epc, owner, |t, pivot| t > pivot)
}

/// Every other company that published `epc`; equals upstream ∪ downstream.
pub fn whole_stream_set(
    registry: &PublishRegistry,
    epc: &EpcCode,
    owner: &CompanyId,
) -> Result<BTreeSet<CompanyId>, PolicyError> {
    stream_set(registry, epc, owner, |t, pivot| t != pivot)
}

fn stream_set(
    registry: &PublishRegistry,
    epc: &EpcCode,
    owner: &CompanyId,
    keep: impl Fn(u64, u64) -> bool,
) -> Result<BTreeSet<CompanyId>, PolicyError> {
    let pivot = registry
        .record_of(epc, owner)
        .ok_or_else(|| PolicyError::OwnerNotPublished {
            owner: owner.to_string(),
            epc: epc.to_string(),
        })?
        .publish_time;
    Ok(registry
        .lookup(epc)
        .into_iter()
        .filter(|r| &r.company != owner && keep(r.publish_time, pivot))
        .map(|r| r.company.clone())
        .collect())
}

/// Decide whether `requester` may see `owner`'s data for `epc` under `policy`.
///
/// `All` grants unconditionally (even to users the registry does not know);
/// `Hide` denies unconditionally. `Limited` requires the requester to belong
/// to a known company that itself published the EPC, on the side of the owner
/// the visibility names. Requesters from the owning company are not special-
/// cased here; callers that want implicit self-access handle it before
/// evaluating.
pub fn evaluate(
    registry: &PublishRegistry,
    policy: &AccessPolicy,
    owner: &CompanyId,
    epc: &EpcCode,
    requester: &UserId,
) -> Result<GrantDecision, PolicyError> {
    if registry.record_of(epc, owner).is_none() {
        return Err(PolicyError::OwnerNotPublished {
            owner: owner.to_string(),
            epc: epc.to_string(),
        });
    }
    match policy.rule {
        Rule::All => Ok(GrantDecision::grant(policy.scope.clone(), GrantReason::RuleAll)),
        Rule::Hide => Ok(GrantDecision::deny(GrantReason::DeniedHide)),
        Rule::Limited => {
            let company = match registry.company_of(requester) {
                Some(c) => c.clone(),
                None => return Ok(GrantDecision::deny(GrantReason::DeniedUnknownUser)),
            };
            let (members, reason) = match policy.visibility {
                Visibility::WholeStream => (
                    whole_stream_set(registry, epc, owner)?,
                    GrantReason::RuleLimitedMember,
                ),
                Visibility::UpStream => {
                    (upstream_set(registry, epc, owner)?, GrantReason::VisibilityMatch)
                }
                Visibility::DownStream => {
                    (downstream_set(registry, epc, owner)?, GrantReason::VisibilityMatch)
                }
                Visibility::NotApplicable => {
                    return Err(PolicyError::InvalidPolicy(
                        "limited rule evaluated without a stream visibility".into(),
                    ))
                }
            };
            if members.contains(&company) {
                Ok(GrantDecision::grant(policy.scope.clone(), reason))
            } else {
                Ok(GrantDecision::deny(GrantReason::DeniedNotPartner))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PublishRecord;

    fn epc() -> EpcCode {
        EpcCode::parse("urn:epc:id:sgtin:0614141.112345.400").unwrap()
    }

    fn company(s: &str) -> CompanyId {
        CompanyId::new(s).unwrap()
    }

    fn user(s: &str) -> UserId {
        UserId::new(s).unwrap()
    }

    /// Registry with publishers a@100, b@200, c@300 and one user per company.
    fn chain() -> PublishRegistry {
        let mut reg = PublishRegistry::new();
        for (name, t) in [("a", 100), ("b", 200), ("c", 300)] {
            reg.publish(PublishRecord {
                epc: epc(),
                company: company(name),
                publish_time: t,
                epcis_url: format!("https://epcis.{name}.example/q"),
                policy: AccessPolicy::open(),
            })
            .unwrap();
            reg.bind_user(user(&format!("u-{name}")), company(name));
        }
        reg
    }

    fn names(set: &BTreeSet<CompanyId>) -> Vec<&str> {
        set.iter().map(|c| c.as_str()).collect()
    }

    #[test]
    fn stream_sets_split_the_chain() {
        let reg = chain();
        let b = company("b");
        assert_eq!(names(&upstream_set(&reg, &epc(), &b).unwrap()), ["a"]);
        assert_eq!(names(&downstream_set(&reg, &epc(), &b).unwrap()), ["c"]);
        assert_eq!(names(&whole_stream_set(&reg, &epc(), &b).unwrap()), ["a", "c"]);

        let a = company("a");
        assert!(upstream_set(&reg, &epc(), &a).unwrap().is_empty());
        assert_eq!(names(&downstream_set(&reg, &epc(), &a).unwrap()), ["b", "c"]);
    }

    #[test]
    fn stream_sets_need_a_published_owner() {
        let reg = chain();
        let err = upstream_set(&reg, &epc(), &company("ghost")).unwrap_err();
        assert!(matches!(err, PolicyError::OwnerNotPublished { .. }));
    }

    #[test]
    fn rule_all_grants_everyone() {
        let reg = chain();
        let d = evaluate(&reg, &AccessPolicy::open(), &company("b"), &epc(), &user("u-a")).unwrap();
        assert!(d.granted);
        assert_eq!(d.reason, GrantReason::RuleAll);

        // even a user the registry has never seen
        let d = evaluate(&reg, &AccessPolicy::open(), &company("b"), &epc(), &user("stranger"))
            .unwrap();
        assert!(d.granted);
    }

    #[test]
    fn rule_hide_denies_everyone() {
        let reg = chain();
        for u in ["u-a", "u-b", "u-c", "stranger"] {
            let d =
                evaluate(&reg, &AccessPolicy::hidden(), &company("b"), &epc(), &user(u)).unwrap();
            assert!(!d.granted);
            assert_eq!(d.reason, GrantReason::DeniedHide);
            assert!(d.scope.is_empty());
        }
    }

    #[test]
    fn limited_upstream_grants_only_earlier_publishers() {
        let reg = chain();
        let policy = AccessPolicy::limited(Visibility::UpStream, BTreeSet::new()).unwrap();

        let d = evaluate(&reg, &policy, &company("b"), &epc(), &user("u-a")).unwrap();
        assert!(d.granted);
        assert_eq!(d.reason, GrantReason::VisibilityMatch);

        let d = evaluate(&reg, &policy, &company("b"), &epc(), &user("u-c")).unwrap();
        assert!(!d.granted);
        assert_eq!(d.reason, GrantReason::DeniedNotPartner);
    }

    #[test]
    fn limited_whole_stream_requires_publishing_the_same_epc() {
        let mut reg = chain();
        reg.bind_user(user("u-out"), company("outsider"));
        let policy = AccessPolicy::limited(Visibility::WholeStream, BTreeSet::new()).unwrap();

        let d = evaluate(&reg, &policy, &company("b"), &epc(), &user("u-a")).unwrap();
        assert!(d.granted);
        assert_eq!(d.reason, GrantReason::RuleLimitedMember);

        // outsider's company never published this EPC
        let d = evaluate(&reg, &policy, &company("b"), &epc(), &user("u-out")).unwrap();
        assert!(!d.granted);
        assert_eq!(d.reason, GrantReason::DeniedNotPartner);
    }

    #[test]
    fn unknown_user_is_denied_unless_rule_all() {
        let reg = chain();
        let policy = AccessPolicy::limited(Visibility::WholeStream, BTreeSet::new()).unwrap();
        let d = evaluate(&reg, &policy, &company("b"), &epc(), &user("stranger")).unwrap();
        assert!(!d.granted);
        assert_eq!(d.reason, GrantReason::DeniedUnknownUser);
    }

    #[test]
    fn granted_scope_mirrors_policy_scope() {
        let reg = chain();
        let scope: BTreeSet<String> = ["location".to_string()].into();
        let policy = AccessPolicy::limited(Visibility::WholeStream, scope.clone()).unwrap();
        let d = evaluate(&reg, &policy, &company("b"), &epc(), &user("u-a")).unwrap();
        assert_eq!(d.scope, scope);
    }

    #[test]
    fn policy_constructor_enforces_visibility_pairing() {
        assert!(AccessPolicy::new(Rule::All, Visibility::UpStream, BTreeSet::new()).is_err());
        assert!(AccessPolicy::new(Rule::Hide, Visibility::WholeStream, BTreeSet::new()).is_err());
        assert!(AccessPolicy::new(Rule::Limited, Visibility::NotApplicable, BTreeSet::new())
            .is_err());
        assert!(AccessPolicy::new(Rule::Limited, Visibility::DownStream, BTreeSet::new()).is_ok());
    }

    #[test]
    fn policy_json_round_trip_and_validation() {
        let p: AccessPolicy =
            serde_json::from_str(r#"{"rule":"limited","visibility":"down-stream","scope":["location"]}"#)
                .unwrap();
        assert_eq!(p.rule, Rule::Limited);
        let back = serde_json::to_string(&p).unwrap();
        let again: AccessPolicy = serde_json::from_str(&back).unwrap();
        assert_eq!(p, again);

        // visibility on an "all" rule is rejected at parse time
        assert!(serde_json::from_str::<AccessPolicy>(
            r#"{"rule":"all","visibility":"up-stream"}"#
        )
        .is_err());
        // "all" without visibility parses
        assert!(serde_json::from_str::<AccessPolicy>(r#"{"rule":"all"}"#).is_ok());
    }
}
