//! Discrete-event simulation of the discovery network.
//!
//! Time is simulated microseconds from scenario start. The directory is a
//! single-server FIFO queue (its handler runs when service starts, outputs
//! leave when service ends); repositories are infinite servers (each query
//! is delayed by its own service demand, never queued). Messages in flight
//! are delayed by the scenario's link-latency model.
//!
//! Reports are deterministic: identical scenario plus identical seed yields
//! a byte-identical JSON report, except for the optional wall-clock block
//! that appears when real cryptography is enabled.

use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::time::Instant;

use rand::Rng as _;
use rand::SeedableRng as _;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::model::{CompanyId, EpcCode, UserId};
use crate::nodes::{
    DsEntry, ErrorCode, Message, MessageBody, Model, NodeId, OpCounts,
};
use crate::scenario::{
    build_network, synthesized_event, Arrival, BuiltNetwork, CryptoMode, LatencyModel,
    PublishMutation, ScenarioConfig, ScenarioError,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("mid-run publish failed: {0}")]
    Mutation(#[from] crate::model::ModelError),
}

/// Summary statistics over a latency sample set, in microseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: u64,
    pub mean_us: f64,
    pub p95_us: u64,
    pub max_us: u64,
}

fn latency_stats(samples: &mut Vec<u64>) -> LatencyStats {
    if samples.is_empty() {
        return LatencyStats { count: 0, mean_us: 0.0, p95_us: 0, max_us: 0 };
    }
    samples.sort_unstable();
    let n = samples.len();
    let sum: u128 = samples.iter().map(|&v| v as u128).sum();
    let p95_idx = ((n as f64) * 0.95).ceil() as usize;
    LatencyStats {
        count: n as u64,
        mean_us: sum as f64 / n as f64,
        p95_us: samples[p95_idx.saturating_sub(1).min(n - 1)],
        max_us: samples[n - 1],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxnStats {
    pub initiated: u64,
    pub completed: u64,
    pub failed: u64,
    pub latency: LatencyStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsgStats {
    pub sent: u64,
    pub delivered: u64,
    /// Scheduled deliveries still in flight when the run ended.
    pub dropped_at_end: u64,
    pub delivered_by_kind: BTreeMap<String, u64>,
    pub epcds_inbound: u64,
    pub epcds_inbound_by_kind: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpcdsStats {
    pub jobs_started: u64,
    pub jobs_completed: u64,
    pub busy_us: u64,
    /// Fraction of the run the single server spent in service.
    pub utilization: f64,
    pub mean_wait_us: f64,
    /// Time-averaged number of jobs waiting (excluding the one in service).
    pub mean_queue_waiting: f64,
    /// Time-averaged number of jobs waiting or in service.
    pub mean_in_system: f64,
    /// Jobs in system sampled at 100 evenly spaced instants.
    pub queue_samples: Vec<u64>,
    pub queue_at_5pct: u64,
    pub queue_at_end: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthStats {
    pub accepts: u64,
    pub rejects: BTreeMap<String, u64>,
    /// Time from a repository receiving a query to its access decision.
    pub latency: LatencyStats,
}

/// Wall-clock cost of handler execution; present only with real crypto.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallStats {
    pub epcds_handler_ns: u64,
    pub epcis_handler_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub model: Model,
    pub seed: u64,
    pub duration_us: u64,
    pub transactions: TxnStats,
    pub messages: MsgStats,
    pub epcds: EpcdsStats,
    pub auth: AuthStats,
    /// Operation totals across all nodes.
    pub ops: OpCounts,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall: Option<WallStats>,
}

#[derive(Debug, Clone)]
struct Flight {
    txn: Option<u64>,
    msg: Message,
}

#[derive(Debug)]
enum Ev {
    Arrival { txn: u64 },
    Deliver { flight: Flight },
    EpcdsDone,
    Mutation { index: usize },
    Sample,
}

struct HeapEntry {
    time: u64,
    seq: u64,
    ev: Ev,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // min-heap on (time, seq)
        other.time.cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Txn {
    user: UserId,
    epc: EpcCode,
    started_us: u64,
    pending: u64,
    responded: bool,
    done: bool,
}

struct EpcdsJob {
    flight: Flight,
    enqueued_us: u64,
}

struct CurrentJob {
    replies: Vec<Flight>,
    demand_us: u64,
    started_us: u64,
}

pub struct Sim {
    cfg: ScenarioConfig,
    net: BuiltNetwork,
    duration_us: u64,
    rng: ChaCha20Rng,
    heap: BinaryHeap<HeapEntry>,
    seq: u64,
    now: u64,

    txns: BTreeMap<u64, Txn>,
    next_txn: u64,
    txn_latency: Vec<u64>,
    completed: u64,
    failed: u64,

    sent: u64,
    delivered: u64,
    delivered_by_kind: BTreeMap<String, u64>,
    epcds_inbound: u64,
    epcds_inbound_by_kind: BTreeMap<String, u64>,

    epcds_queue: VecDeque<EpcdsJob>,
    epcds_current: Option<CurrentJob>,
    busy_us: u64,
    jobs_started: u64,
    jobs_completed: u64,
    wait_samples: Vec<u64>,
    waiting_area: u128,
    system_area: u128,
    last_tick: u64,
    queue_samples: Vec<u64>,

    accepts: u64,
    rejects: BTreeMap<String, u64>,
    auth_samples: Vec<u64>,
    auth_start: BTreeMap<(CompanyId, u64), u64>,

    ops: OpCounts,
    wall_epcds_ns: u64,
    wall_epcis_ns: u64,
}

impl Sim {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let net = build_network(cfg)?;
        let duration_us = cfg.duration_seconds * 1_000_000;
        let mut sim = Sim {
            cfg: cfg.clone(),
            net,
            duration_us,
            rng: ChaCha20Rng::seed_from_u64(cfg.seed),
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0,
            txns: BTreeMap::new(),
            next_txn: 0,
            txn_latency: Vec::new(),
            completed: 0,
            failed: 0,
            sent: 0,
            delivered: 0,
            delivered_by_kind: BTreeMap::new(),
            epcds_inbound: 0,
            epcds_inbound_by_kind: BTreeMap::new(),
            epcds_queue: VecDeque::new(),
            epcds_current: None,
            busy_us: 0,
            jobs_started: 0,
            jobs_completed: 0,
            wait_samples: Vec::new(),
            waiting_area: 0,
            system_area: 0,
            last_tick: 0,
            queue_samples: Vec::new(),
            accepts: 0,
            rejects: BTreeMap::new(),
            auth_samples: Vec::new(),
            auth_start: BTreeMap::new(),
            ops: OpCounts::default(),
            wall_epcds_ns: 0,
            wall_epcis_ns: 0,
        };

        // sampling grid: 100 instants across the run
        let step = (duration_us / 100).max(1);
        for i in 1..=100u64 {
            let t = (i * step).min(duration_us);
            sim.push(t, Ev::Sample);
        }

        // mid-run directory mutations
        let fire_times: Vec<(usize, u64)> = sim
            .net
            .mutations
            .iter()
            .enumerate()
            .map(|(i, m)| (i, m.fire_at_us))
            .collect();
        for (index, fire_at_us) in fire_times {
            if fire_at_us <= duration_us {
                sim.push(fire_at_us, Ev::Mutation { index });
            }
        }

        // proof-of-possession rounds before any traffic
        if cfg.challenge_handshake {
            let companies: Vec<CompanyId> = sim.net.epcis.keys().cloned().collect();
            for company in companies {
                let nonce = handshake_nonce(cfg.seed, &company);
                let node = sim.net.epcis.get_mut(&company).unwrap();
                let body = node.start_challenge(nonce);
                let msg = Message { from: node.node_id(), to: NodeId::Epcds, body };
                sim.send(Flight { txn: None, msg }, 0);
            }
        }

        // first arrival
        if sim.cfg.max_transactions != Some(0) {
            let first = match sim.cfg.arrival {
                Arrival::Fixed { interval_us } => interval_us,
                Arrival::Poisson { rate_per_second } => sim.exp_gap_us(rate_per_second),
            };
            if first <= duration_us {
                sim.push(first, Ev::Arrival { txn: 0 });
            }
        }
        Ok(sim)
    }

    fn push(&mut self, time: u64, ev: Ev) {
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(HeapEntry { time, seq, ev });
    }

    fn exp_gap_us(&mut self, rate_per_second: f64) -> u64 {
        let u: f64 = self.rng.random();
        let gap = -(1.0 - u).ln() / rate_per_second;
        (gap * 1_000_000.0).round().max(1.0) as u64
    }

    fn latency_us(&self, from: &NodeId, to: &NodeId) -> u64 {
        match self.cfg.latency_us {
            LatencyModel::Fixed { value_us } => value_us,
            LatencyModel::UniformPerLink { min_us, max_us } => {
                let mut h = Sha256::new();
                h.update(self.cfg.seed.to_le_bytes());
                h.update(from.to_string().as_bytes());
                h.update([0u8]);
                h.update(to.to_string().as_bytes());
                let d = h.finalize();
                let raw = u64::from_le_bytes(d[..8].try_into().unwrap());
                min_us + raw % (max_us - min_us + 1)
            }
        }
    }

    fn send(&mut self, flight: Flight, now: u64) {
        self.sent += 1;
        let delay = self.latency_us(&flight.msg.from, &flight.msg.to);
        self.push(now + delay, Ev::Deliver { flight });
    }

    /// Epoch seconds the protocol handlers see at simulated time `now`.
    fn epoch_now(&self) -> u64 {
        self.cfg.start_time + self.now / 1_000_000
    }

    fn tick_integrals(&mut self, now: u64) {
        let dt = (now - self.last_tick) as u128;
        let waiting = self.epcds_queue.len() as u128;
        let in_service = self.epcds_current.is_some() as u128;
        self.waiting_area += waiting * dt;
        self.system_area += (waiting + in_service) * dt;
        self.last_tick = now;
    }

    fn in_system_now(&self) -> u64 {
        self.epcds_queue.len() as u64 + self.epcds_current.is_some() as u64
    }

    fn pick_user(&mut self) -> UserId {
        let total: f64 = self.net.traffic_users.iter().map(|(_, w)| w).sum();
        let x: f64 = self.rng.random::<f64>() * total;
        let mut acc = 0.0;
        for (u, w) in &self.net.traffic_users {
            acc += w;
            if x < acc {
                return u.clone();
            }
        }
        self.net.traffic_users.last().unwrap().0.clone()
    }

    fn pick_epc(&mut self) -> EpcCode {
        let i = self.rng.random_range(0..self.net.epcs.len());
        self.net.epcs[i].clone()
    }

    fn on_arrival(&mut self, txn_id: u64) {
        let user = self.pick_user();
        let epc = self.pick_epc();
        self.txns.insert(
            txn_id,
            Txn {
                user: user.clone(),
                epc: epc.clone(),
                started_us: self.now,
                pending: 0,
                responded: false,
                done: false,
            },
        );
        self.next_txn = txn_id + 1;
        let msg = Message {
            from: NodeId::User(user.clone()),
            to: NodeId::Epcds,
            body: MessageBody::UserQueryDs { user, epc },
        };
        self.send(Flight { txn: Some(txn_id), msg }, self.now);

        let under_cap = self
            .cfg
            .max_transactions
            .map(|m| txn_id + 1 < m)
            .unwrap_or(true);
        if under_cap {
            let gap = match self.cfg.arrival {
                Arrival::Fixed { interval_us } => interval_us,
                Arrival::Poisson { rate_per_second } => self.exp_gap_us(rate_per_second),
            };
            let t = self.now + gap;
            if t <= self.duration_us {
                self.push(t, Ev::Arrival { txn: txn_id + 1 });
            }
        }
    }

    fn epcds_start_service(&mut self) {
        let Some(job) = self.epcds_queue.pop_front() else { return };
        self.jobs_started += 1;
        self.wait_samples.push(self.now - job.enqueued_us);
        let epoch = self.epoch_now();
        let started = Instant::now();
        let (replies, ops) = self.net.epcds.handle(&job.flight.msg.from, &job.flight.msg.body, epoch);
        self.wall_epcds_ns += started.elapsed().as_nanos() as u64;
        self.ops.add(&ops);
        let demand_us = ops.demand_us(&self.cfg.service_times_us);
        let replies = replies
            .into_iter()
            .map(|msg| Flight { txn: job.flight.txn, msg })
            .collect();
        self.epcds_current = Some(CurrentJob { replies, demand_us, started_us: self.now });
        self.push(self.now + demand_us, Ev::EpcdsDone);
    }

    fn on_epcds_done(&mut self) {
        let cur = self.epcds_current.take().expect("service completion without a job");
        self.busy_us += cur.demand_us;
        self.jobs_completed += 1;
        for flight in cur.replies {
            self.send(flight, self.now);
        }
        if !self.epcds_queue.is_empty() {
            self.epcds_start_service();
        }
    }

    fn tally_auth_outcomes(&mut self, replies: &[Message]) {
        for m in replies {
            match &m.body {
                MessageBody::IsResponse { .. } => self.accepts += 1,
                MessageBody::ErrorResponse { code: ErrorCode::AccessDenied(reason), .. } => {
                    *self.rejects.entry(reason.as_str().to_string()).or_insert(0) += 1;
                }
                _ => {}
            }
        }
    }

    fn deliver_to_epcis(&mut self, company: CompanyId, flight: Flight) {
        let epoch = self.epoch_now();
        let is_user_query = matches!(flight.msg.body, MessageBody::UserQueryIs { .. });
        // close the remote-check span opened when the query arrived
        if let MessageBody::AccessCheckResponse { corr, .. } = flight.msg.body {
            if let Some(t0) = self.auth_start.remove(&(company.clone(), corr)) {
                self.auth_samples.push(self.now - t0);
            }
        }
        let node = self.net.epcis.get_mut(&company).expect("message to a known repository");
        let started = Instant::now();
        let (replies, ops) = node.handle(&flight.msg.from, &flight.msg.body, epoch);
        self.wall_epcis_ns += started.elapsed().as_nanos() as u64;
        self.ops.add(&ops);
        self.tally_auth_outcomes(&replies);

        if is_user_query {
            match self.cfg.model {
                // local decision: its cost is the decision latency
                Model::SignEpc => self
                    .auth_samples
                    .push(ops.verifies * self.cfg.service_times_us.verify_us),
                Model::DirectoryOpen => self.auth_samples.push(0),
                // decision completes when the directory's verdict returns
                Model::SecureEpcds => {
                    for m in &replies {
                        if let MessageBody::AccessCheckRequest { corr, .. } = m.body {
                            self.auth_start.insert((company.clone(), corr), self.now);
                        }
                    }
                }
            }
        }

        let demand_us = ops.demand_us(&self.cfg.service_times_us);
        for msg in replies {
            let flight = Flight { txn: flight.txn, msg };
            // infinite server: the reply leaves after this query's own demand
            self.sent += 1;
            let delay = demand_us + self.latency_us(&flight.msg.from, &flight.msg.to);
            self.push(self.now + delay, Ev::Deliver { flight });
        }
    }

    fn deliver_to_user(&mut self, flight: Flight) {
        let Some(txn_id) = flight.txn else { return };
        let Some(txn) = self.txns.get_mut(&txn_id) else { return };
        if txn.done {
            return;
        }
        match &flight.msg.body {
            MessageBody::DsResponse { entries, .. } => {
                txn.responded = true;
                txn.pending = self.cfg.epcis_per_transaction;
                let user = txn.user.clone();
                let epc = txn.epc.clone();
                let targets: Vec<DsEntry> = entries.clone();
                let k = self.cfg.epcis_per_transaction;
                for j in 0..k {
                    let entry = &targets[(j % targets.len() as u64) as usize];
                    let msg = Message {
                        from: NodeId::User(user.clone()),
                        to: NodeId::Epcis(entry.company.clone()),
                        body: MessageBody::UserQueryIs {
                            user: user.clone(),
                            epc: epc.clone(),
                            credential: entry.credential.clone(),
                        },
                    };
                    self.send(Flight { txn: Some(txn_id), msg }, self.now);
                }
            }
            MessageBody::ErrorResponse { .. } if flight.msg.from == NodeId::Epcds => {
                // discovery refused: the transaction ends here
                let txn = self.txns.get_mut(&txn_id).unwrap();
                txn.done = true;
                self.failed += 1;
            }
            MessageBody::IsResponse { .. } | MessageBody::ErrorResponse { .. } => {
                let txn = self.txns.get_mut(&txn_id).unwrap();
                txn.pending = txn.pending.saturating_sub(1);
                if txn.responded && txn.pending == 0 {
                    txn.done = true;
                    self.completed += 1;
                    self.txn_latency.push(self.now - txn.started_us);
                }
            }
            _ => {}
        }
    }

    fn on_deliver(&mut self, flight: Flight) {
        self.delivered += 1;
        let kind = flight.msg.body.kind().as_str().to_string();
        *self.delivered_by_kind.entry(kind.clone()).or_insert(0) += 1;
        match flight.msg.to.clone() {
            NodeId::Epcds => {
                self.epcds_inbound += 1;
                *self.epcds_inbound_by_kind.entry(kind).or_insert(0) += 1;
                self.epcds_queue.push_back(EpcdsJob { flight, enqueued_us: self.now });
                if self.epcds_current.is_none() {
                    self.epcds_start_service();
                }
            }
            NodeId::Epcis(company) => self.deliver_to_epcis(company, flight),
            NodeId::User(_) => self.deliver_to_user(flight),
        }
    }

    fn apply_mutation(&mut self, index: usize) -> Result<(), SimError> {
        let PublishMutation { record, .. } = self.net.mutations[index].clone();
        let event = synthesized_event(&record);
        self.net.epcds.registry.publish(record.clone())?;
        if let Some(node) = self.net.epcis.get_mut(&record.company) {
            node.add_event(event);
        }
        Ok(())
    }

    pub fn run(mut self) -> Result<SimReport, SimError> {
        let mut dropped = 0u64;
        while let Some(entry) = self.heap.pop() {
            if entry.time > self.duration_us {
                if let Ev::Deliver { .. } = entry.ev {
                    dropped += 1;
                }
                continue;
            }
            self.now = entry.time;
            self.tick_integrals(entry.time);
            match entry.ev {
                Ev::Arrival { txn } => self.on_arrival(txn),
                Ev::Deliver { flight } => self.on_deliver(flight),
                Ev::EpcdsDone => self.on_epcds_done(),
                Ev::Mutation { index } => self.apply_mutation(index)?,
                Ev::Sample => {
                    let n = self.in_system_now();
                    self.queue_samples.push(n);
                }
            }
        }
        self.tick_integrals(self.duration_us);
        // a job still in service at the cutoff was busy up to the cutoff
        if let Some(cur) = &self.epcds_current {
            self.busy_us += self.duration_us - cur.started_us;
        }

        let mut txn_latency = std::mem::take(&mut self.txn_latency);
        let mut auth_samples = std::mem::take(&mut self.auth_samples);
        let mut wait_samples = std::mem::take(&mut self.wait_samples);
        let wait_stats = latency_stats(&mut wait_samples);
        let queue_at_5pct = self.queue_samples.get(4).copied().unwrap_or(0);
        let queue_at_end = self.queue_samples.last().copied().unwrap_or(0);
        let elapsed = self.duration_us as f64;

        Ok(SimReport {
            model: self.cfg.model,
            seed: self.cfg.seed,
            duration_us: self.duration_us,
            transactions: TxnStats {
                initiated: self.next_txn,
                completed: self.completed,
                failed: self.failed,
                latency: latency_stats(&mut txn_latency),
            },
            messages: MsgStats {
                sent: self.sent,
                delivered: self.delivered,
                dropped_at_end: dropped,
                delivered_by_kind: self.delivered_by_kind,
                epcds_inbound: self.epcds_inbound,
                epcds_inbound_by_kind: self.epcds_inbound_by_kind,
            },
            epcds: EpcdsStats {
                jobs_started: self.jobs_started,
                jobs_completed: self.jobs_completed,
                busy_us: self.busy_us,
                utilization: self.busy_us as f64 / elapsed,
                mean_wait_us: wait_stats.mean_us,
                mean_queue_waiting: self.waiting_area as f64 / elapsed,
                mean_in_system: self.system_area as f64 / elapsed,
                queue_samples: self.queue_samples,
                queue_at_5pct,
                queue_at_end,
            },
            auth: AuthStats {
                accepts: self.accepts,
                rejects: self.rejects,
                latency: latency_stats(&mut auth_samples),
            },
            ops: self.ops,
            wall: match self.cfg.crypto.mode {
                CryptoMode::Real => Some(WallStats {
                    epcds_handler_ns: self.wall_epcds_ns,
                    epcis_handler_ns: self.wall_epcis_ns,
                }),
                CryptoMode::Modeled => None,
            },
        })
    }
}

fn handshake_nonce(seed: u64, company: &CompanyId) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"handshake-nonce");
    h.update(seed.to_le_bytes());
    h.update(company.as_str().as_bytes());
    h.finalize().into()
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimReport, SimError> {
    Sim::new(cfg)?.run()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub model: String,
    pub epcis_per_transaction: u64,
    pub utilization: f64,
    pub auth_latency_mean_us: f64,
    pub auth_latency_p95_us: u64,
    pub mean_in_system: f64,
    pub transactions_completed: u64,
    pub epcds_inbound: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "model,epcis_per_transaction,utilization,auth_latency_mean_us,auth_latency_p95_us,mean_in_system,transactions_completed,epcds_inbound\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6},{:.3},{},{:.6},{},{}\n",
                r.model,
                r.epcis_per_transaction,
                r.utilization,
                r.auth_latency_mean_us,
                r.auth_latency_p95_us,
                r.mean_in_system,
                r.transactions_completed,
                r.epcds_inbound,
            ));
        }
        out
    }
}

/// Run the same scenario for each model and fan-out degree, with the same
/// seed, and tabulate the load metrics side by side.
pub fn compare_models(
    base: &ScenarioConfig,
    models: &[Model],
    fanouts: &[u64],
) -> Result<CompareReport, SimError> {
    let mut rows = Vec::new();
    for &model in models {
        for &k in fanouts {
            let mut cfg = base.clone();
            cfg.model = model;
            cfg.epcis_per_transaction = k;
            let report = run_scenario(&cfg)?;
            rows.push(CompareRow {
                model: model.as_str().to_string(),
                epcis_per_transaction: k,
                utilization: report.epcds.utilization,
                auth_latency_mean_us: report.auth.latency.mean_us,
                auth_latency_p95_us: report.auth.latency.p95_us,
                mean_in_system: report.epcds.mean_in_system,
                transactions_completed: report.transactions.completed,
                epcds_inbound: report.messages.epcds_inbound,
            });
        }
    }
    Ok(CompareReport { rows })
}
