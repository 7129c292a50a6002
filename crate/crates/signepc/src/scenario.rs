//! Scenario files: the declarative input of the simulator.
//!
//! A scenario is a JSON document that fixes everything a run depends on:
//! deployment model, timing distributions, service costs, link latencies,
//! the company/user population, and the publish history. Identical scenario
//! plus identical seed must reproduce identical reports, so nothing here
//! consults wall clocks or ambient randomness.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CompanyId, EpcCode, EventRecord, PublishRecord, PublishRegistry, UserId};
use crate::nodes::{EpcdsNode, EpcisNode, Model, ServiceTimes, SignerState};
use crate::pki;
use crate::policy::AccessPolicy;
use crate::token::ExpiryWindow;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid scenario: {field}: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), reason: reason.into() }
}

/// How transaction start times are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Arrival {
    /// Exponential inter-arrival gaps with the given rate.
    Poisson { rate_per_second: f64 },
    /// A transaction every `interval_us` microseconds, starting at one
    /// interval past time zero.
    Fixed { interval_us: u64 },
}

/// One-way link delay between any two nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LatencyModel {
    Fixed { value_us: u64 },
    /// Each directed link gets a delay drawn once from `[min_us, max_us]`,
    /// derived deterministically from the scenario seed and the endpoint
    /// names.
    UniformPerLink { min_us: u64, max_us: u64 },
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel::Fixed { value_us: 10_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CryptoMode {
    /// Tags carry real digests plus a key fingerprint; no big-integer math.
    Modeled,
    /// Real RSA signing and verification on every token.
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CryptoConfig {
    pub mode: CryptoMode,
    #[serde(default = "d_modulus_bits")]
    pub modulus_bits: u32,
    #[serde(default)]
    pub allow_weak: bool,
}

fn d_modulus_bits() -> u32 {
    2048
}

impl Default for CryptoConfig {
    fn default() -> Self {
        CryptoConfig { mode: CryptoMode::Modeled, modulus_bits: d_modulus_bits(), allow_weak: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompanySpec {
    pub id: String,
    pub epcis_url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSpec {
    pub id: String,
    pub company: String,
    /// Relative probability of being the requester of a transaction.
    /// Zero keeps the user in the population without generating traffic.
    #[serde(default = "d_weight")]
    pub weight: f64,
}

fn d_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishSpec {
    pub epc: String,
    pub company: String,
    /// Epoch seconds. At or before `start_time` the record exists from the
    /// beginning; later times mutate the directory mid-run.
    pub publish_time: u64,
    #[serde(default = "AccessPolicy::open")]
    pub policy: AccessPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub format: u32,
    pub model: Model,
    pub seed: u64,
    /// Epoch seconds at simulated time zero.
    pub start_time: u64,
    pub duration_seconds: u64,
    #[serde(default = "d_window")]
    pub window_seconds: u64,
    pub arrival: Arrival,
    /// Stop generating transactions after this many (they still drain).
    #[serde(default)]
    pub max_transactions: Option<u64>,
    /// Repository queries issued per transaction, round-robin over the
    /// granted directory entries.
    pub epcis_per_transaction: u64,
    #[serde(default)]
    pub service_times_us: ServiceTimes,
    #[serde(default)]
    pub latency_us: LatencyModel,
    #[serde(default)]
    pub crypto: CryptoConfig,
    /// Repositories demand a proof-of-possession round before trusting the
    /// directory key.
    #[serde(default)]
    pub challenge_handshake: bool,
    pub companies: Vec<CompanySpec>,
    pub users: Vec<UserSpec>,
    pub publishes: Vec<PublishSpec>,
}

fn d_window() -> u64 {
    86_400
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.format != 1 {
            return Err(invalid("format", format!("unsupported value {}", self.format)));
        }
        if self.duration_seconds == 0 {
            return Err(invalid("duration_seconds", "must be positive"));
        }
        if self.window_seconds == 0 {
            return Err(invalid("window_seconds", "must be positive"));
        }
        if self.epcis_per_transaction == 0 {
            return Err(invalid("epcis_per_transaction", "must be at least 1"));
        }
        match self.arrival {
            Arrival::Poisson { rate_per_second } => {
                if !(rate_per_second > 0.0) || !rate_per_second.is_finite() {
                    return Err(invalid("arrival.rate_per_second", "must be a positive number"));
                }
            }
            Arrival::Fixed { interval_us } => {
                if interval_us == 0 {
                    return Err(invalid("arrival.interval_us", "must be positive"));
                }
            }
        }
        if let LatencyModel::UniformPerLink { min_us, max_us } = self.latency_us {
            if min_us > max_us {
                return Err(invalid("latency_us", "min_us exceeds max_us"));
            }
        }
        if self.crypto.mode == CryptoMode::Real
            && !self.crypto.allow_weak
            && self.crypto.modulus_bits < 2048
        {
            return Err(invalid(
                "crypto.modulus_bits",
                "below 2048; set allow_weak for test-strength keys",
            ));
        }

        if self.companies.is_empty() {
            return Err(invalid("companies", "at least one company is required"));
        }
        let mut company_ids = BTreeSet::new();
        let mut urls = BTreeSet::new();
        for (i, c) in self.companies.iter().enumerate() {
            CompanyId::new(&c.id)
                .map_err(|e| invalid(format!("companies[{i}].id"), e.to_string()))?;
            if !company_ids.insert(c.id.as_str()) {
                return Err(invalid(format!("companies[{i}].id"), format!("duplicate '{}'", c.id)));
            }
            if c.epcis_url.is_empty() {
                return Err(invalid(format!("companies[{i}].epcis_url"), "must not be empty"));
            }
            if !urls.insert(c.epcis_url.as_str()) {
                return Err(invalid(
                    format!("companies[{i}].epcis_url"),
                    format!("duplicate '{}'", c.epcis_url),
                ));
            }
        }

        if self.users.is_empty() {
            return Err(invalid("users", "at least one user is required"));
        }
        let mut user_ids = BTreeSet::new();
        let mut any_weight = false;
        for (i, u) in self.users.iter().enumerate() {
            UserId::new(&u.id).map_err(|e| invalid(format!("users[{i}].id"), e.to_string()))?;
            if !user_ids.insert(u.id.as_str()) {
                return Err(invalid(format!("users[{i}].id"), format!("duplicate '{}'", u.id)));
            }
            if !company_ids.contains(u.company.as_str()) {
                return Err(invalid(
                    format!("users[{i}].company"),
                    format!("unknown company '{}'", u.company),
                ));
            }
            if !(u.weight >= 0.0) || !u.weight.is_finite() {
                return Err(invalid(format!("users[{i}].weight"), "must be a finite value >= 0"));
            }
            any_weight |= u.weight > 0.0;
        }
        if !any_weight {
            return Err(invalid("users", "at least one user needs a positive weight"));
        }

        if self.publishes.is_empty() {
            return Err(invalid("publishes", "at least one publish is required"));
        }
        for (i, p) in self.publishes.iter().enumerate() {
            EpcCode::parse(&p.epc)
                .map_err(|e| invalid(format!("publishes[{i}].epc"), e.to_string()))?;
            if !company_ids.contains(p.company.as_str()) {
                return Err(invalid(
                    format!("publishes[{i}].company"),
                    format!("unknown company '{}'", p.company),
                ));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn window(&self) -> ExpiryWindow {
        ExpiryWindow::new(self.window_seconds).expect("validated non-zero window")
    }
}

/// The single synthesized event a publish contributes to its repository.
pub fn synthesized_event(record: &PublishRecord) -> EventRecord {
    EventRecord {
        epc: record.epc.clone(),
        company: record.company.clone(),
        event_time: record.publish_time,
        location: format!("site-{}", record.company),
        business_step: "receiving".into(),
        attributes: [
            ("quality".to_string(), "ok".to_string()),
            ("warehouse".to_string(), format!("w-{}", record.company)),
        ]
        .into(),
    }
}

/// A publish that fires during the run rather than existing from the start.
#[derive(Debug, Clone)]
pub struct PublishMutation {
    /// Simulated microseconds after time zero.
    pub fire_at_us: u64,
    pub record: PublishRecord,
}

/// Everything `run_scenario` needs, instantiated from a validated config.
pub struct BuiltNetwork {
    pub epcds: EpcdsNode,
    pub epcis: BTreeMap<CompanyId, EpcisNode>,
    /// Users that generate traffic, with their weights.
    pub traffic_users: Vec<(UserId, f64)>,
    pub epcs: Vec<EpcCode>,
    pub mutations: Vec<PublishMutation>,
}

fn record_for(spec: &PublishSpec, urls: &BTreeMap<String, String>) -> PublishRecord {
    PublishRecord {
        epc: EpcCode::parse(&spec.epc).expect("validated"),
        company: CompanyId::new(&spec.company).expect("validated"),
        publish_time: spec.publish_time,
        epcis_url: urls[&spec.company].clone(),
        policy: spec.policy.clone(),
    }
}

/// Instantiate nodes, registry, and key material for a validated scenario.
pub fn build_network(cfg: &ScenarioConfig) -> Result<BuiltNetwork, ScenarioError> {
    let window = cfg.window();
    let signer = match cfg.crypto.mode {
        CryptoMode::Modeled => SignerState::modeled(cfg.seed, u64::MAX),
        CryptoMode::Real => {
            let bits = cfg.crypto.modulus_bits as usize;
            let kp = if cfg.crypto.allow_weak {
                pki::generate_keypair_allow_weak(bits, u64::MAX, Some(cfg.seed))
            } else {
                pki::generate_keypair(bits, u64::MAX, Some(cfg.seed))
            }
            .map_err(|e| invalid("crypto.modulus_bits", e.to_string()))?;
            SignerState::Rsa(kp)
        }
    };

    let urls: BTreeMap<String, String> = cfg
        .companies
        .iter()
        .map(|c| (c.id.clone(), c.epcis_url.clone()))
        .collect();

    let mut registry = PublishRegistry::new();
    let mut mutations = Vec::new();
    for spec in &cfg.publishes {
        let record = record_for(spec, &urls);
        if spec.publish_time <= cfg.start_time {
            registry
                .publish(record)
                .map_err(|e| invalid("publishes", e.to_string()))?;
        } else {
            mutations.push(PublishMutation {
                fire_at_us: (spec.publish_time - cfg.start_time) * 1_000_000,
                record,
            });
        }
    }
    mutations.sort_by_key(|m| m.fire_at_us);

    for u in &cfg.users {
        registry.bind_user(
            UserId::new(&u.id).expect("validated"),
            CompanyId::new(&u.company).expect("validated"),
        );
    }

    let trust = signer.trust_record();
    let mut epcis = BTreeMap::new();
    for c in &cfg.companies {
        let company = CompanyId::new(&c.id).expect("validated");
        let events: Vec<EventRecord> = registry
            .records()
            .iter()
            .filter(|r| r.company == company)
            .map(synthesized_event)
            .collect();
        let mut node = EpcisNode::new(
            cfg.model,
            company.clone(),
            c.epcis_url.clone(),
            window,
            events,
        );
        if cfg.challenge_handshake {
            node.stage_candidate(trust.clone());
        } else {
            node.trust_signer(trust.clone());
        }
        epcis.insert(company, node);
    }

    let traffic_users = cfg
        .users
        .iter()
        .filter(|u| u.weight > 0.0)
        .map(|u| (UserId::new(&u.id).expect("validated"), u.weight))
        .collect();

    // the EPC universe users may ask about: every EPC the scenario ever
    // publishes, including ones that only appear mid-run
    let epcs: Vec<EpcCode> = cfg
        .publishes
        .iter()
        .map(|p| EpcCode::parse(&p.epc).expect("validated"))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    Ok(BuiltNetwork {
        epcds: EpcdsNode::new(cfg.model, registry, window, signer),
        epcis,
        traffic_users,
        epcs,
        mutations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_json() -> serde_json::Value {
        serde_json::json!({
            "format": 1,
            "model": "sign-epc",
            "seed": 42,
            "start_time": 1_700_000_000u64,
            "duration_seconds": 10,
            "arrival": {"kind": "fixed", "interval_us": 100_000},
            "epcis_per_transaction": 2,
            "companies": [
                {"id": "acme", "epcis_url": "https://epcis.acme.example/q"},
                {"id": "globex", "epcis_url": "https://epcis.globex.example/q"}
            ],
            "users": [
                {"id": "u-buyer", "company": "globex"}
            ],
            "publishes": [
                {"epc": "urn:epc:id:sgtin:0614141.112345.400", "company": "acme", "publish_time": 100}
            ]
        })
    }

    fn parse(v: serde_json::Value) -> Result<ScenarioConfig, ScenarioError> {
        ScenarioConfig::from_json(&v.to_string())
    }

    #[test]
    fn minimal_scenario_parses_with_defaults() {
        let cfg = parse(base_json()).unwrap();
        assert_eq!(cfg.window_seconds, 86_400);
        assert_eq!(cfg.service_times_us, ServiceTimes::default());
        assert_eq!(cfg.latency_us, LatencyModel::Fixed { value_us: 10_000 });
        assert_eq!(cfg.crypto.mode, CryptoMode::Modeled);
        assert!(!cfg.challenge_handshake);
        assert_eq!(cfg.publishes[0].policy, AccessPolicy::open());
    }

    #[test]
    fn validation_reports_the_failing_field() {
        let mut v = base_json();
        v["users"][0]["company"] = "nope".into();
        let err = parse(v).unwrap_err().to_string();
        assert!(err.contains("users[0].company"), "{err}");
        assert!(err.contains("nope"), "{err}");

        let mut v = base_json();
        v["epcis_per_transaction"] = 0.into();
        let err = parse(v).unwrap_err().to_string();
        assert!(err.contains("epcis_per_transaction"), "{err}");

        let mut v = base_json();
        v["format"] = 7.into();
        assert!(parse(v).is_err());

        let mut v = base_json();
        v["publishes"][0]["epc"] = "not-an-epc".into();
        let err = parse(v).unwrap_err().to_string();
        assert!(err.contains("publishes[0].epc"), "{err}");
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let mut v = base_json();
        v["companies"][1]["id"] = "acme".into();
        let err = parse(v).unwrap_err().to_string();
        assert!(err.contains("companies[1].id"), "{err}");
    }

    #[test]
    fn weak_real_crypto_needs_the_escape_hatch() {
        let mut v = base_json();
        v["crypto"] = serde_json::json!({"mode": "real", "modulus_bits": 1024});
        assert!(parse(v).is_err());

        let mut v = base_json();
        v["crypto"] =
            serde_json::json!({"mode": "real", "modulus_bits": 1024, "allow_weak": true});
        assert!(parse(v).is_ok());
    }

    #[test]
    fn build_separates_initial_records_from_mutations() {
        let mut v = base_json();
        v["publishes"] = serde_json::json!([
            {"epc": "urn:epc:id:sgtin:0614141.112345.400", "company": "acme", "publish_time": 100},
            {"epc": "urn:epc:id:sgtin:0614141.112345.400", "company": "globex",
             "publish_time": 1_700_000_003u64}
        ]);
        let cfg = parse(v).unwrap();
        let net = build_network(&cfg).unwrap();
        assert_eq!(net.epcds.registry.records().len(), 1);
        assert_eq!(net.mutations.len(), 1);
        assert_eq!(net.mutations[0].fire_at_us, 3_000_000);
        assert_eq!(net.epcs.len(), 1);
        assert_eq!(net.epcis.len(), 2);
        // the initial publish seeded one event at its repository
        assert_eq!(net.traffic_users.len(), 1);
    }

    #[test]
    fn handshake_flag_defers_trust() {
        let mut v = base_json();
        v["challenge_handshake"] = true.into();
        let cfg = parse(v).unwrap();
        let net = build_network(&cfg).unwrap();
        let key_id = net.epcds.signer.key_id().to_string();
        assert!(net.epcis.values().all(|n| !n.trusts(&key_id)));

        let cfg2 = parse(base_json()).unwrap();
        let net2 = build_network(&cfg2).unwrap();
        let key_id2 = net2.epcds.signer.key_id().to_string();
        assert!(net2.epcis.values().all(|n| n.trusts(&key_id2)));
    }
}
