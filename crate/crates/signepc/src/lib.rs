//! Signed-capability access control for a federated EPC discovery network,
//! plus a discrete-event simulator for comparing deployment models.
//!
//! The library has three layers:
//!
//! * **Protocol data**: EPC codes, publish records, and per-record access
//!   policies ([`model`], [`policy`]).
//! * **Credentials**: canonical claims encoding, windowed expiry labels,
//!   RSA-signed capability tags, and the challenge protocol for proving key
//!   possession ([`token`], [`pki`], [`rsa`]).
//! * **Network**: message-level node handlers for the directory (EPCDS) and
//!   repository (EPCIS) roles under three deployment models, and a seeded
//!   discrete-event simulator that measures their scaling behavior
//!   ([`nodes`], [`scenario`], [`sim`]).
//!
//! Everything is deterministic under a caller-supplied seed: key generation,
//! arrival processes, and report serialization.

pub mod model;
pub mod nodes;
pub mod pki;
pub mod policy;
pub mod rsa;
pub mod scenario;
pub mod sim;
pub mod token;

pub use model::{CompanyId, EpcCode, EventRecord, PublishRecord, PublishRegistry, UserId};
pub use policy::{AccessPolicy, GrantDecision, GrantReason, Rule, Visibility};
pub use token::{AccessRight, CheckOutcome, Digest, ExpiryWindow, RejectReason, SignatureTag};
