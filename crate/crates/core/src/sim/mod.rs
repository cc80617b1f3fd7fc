//! Deterministic in-process cluster: server and auditor state machines
//! exchanging messages over a virtual network with a virtual clock.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::client::{choose_row, cover_row, encode_row, share_row, RowValue, WriteBundle};
use crate::codec::RowContent;
use crate::error::{invalid, Result};
use crate::server::node::EpochState;
use crate::server::{Auditor, Context, Effect, EpochConfig, EpochReport, NodeId, Revealed, ServerNode, Snapshot, Variant};
use crate::wire::{Message, Status};

pub mod mutate;

pub use mutate::{malicious_shares, random_malicious, Mutation};

/// Simulated time budget per epoch before the run is declared stuck.
const EPOCH_TIME_LIMIT_MS: u64 = 24 * 3600 * 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub config: EpochConfig,
    /// Writers per epoch, honest and malicious together.
    #[serde(default)]
    pub clients: usize,
    #[serde(default)]
    pub malicious_fraction: f64,
    /// Fixed mutation for malicious clients; a random applicable one when
    /// unset.
    #[serde(default)]
    pub mutation: Option<Mutation>,
    /// Cover writes per epoch.
    #[serde(default)]
    pub cover: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// One-way link latency.
    #[serde(default)]
    pub latency_ms: u64,
    #[serde(default)]
    pub jitter_ms: u64,
    /// Submissions are spread uniformly over this window.
    #[serde(default = "default_spread")]
    pub spread_ms: u64,
    /// Honest message length; defaults to `min(capacity, 16)`.
    #[serde(default)]
    pub message_bytes: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_epochs() -> usize {
    1
}
fn default_spread() -> u64 {
    1000
}

impl SimSpec {
    pub fn new(config: EpochConfig, clients: usize, seed: u64) -> Self {
        SimSpec {
            config,
            clients,
            malicious_fraction: 0.0,
            mutation: None,
            cover: 0,
            epochs: 1,
            latency_ms: 0,
            jitter_ms: 0,
            spread_ms: default_spread(),
            message_bytes: None,
            seed,
        }
    }

    pub fn malicious(&self) -> usize {
        (self.clients as f64 * self.malicious_fraction).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Queued {
    at: u64,
    seq: u64,
    event: Event,
}

impl Ord for Queued {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(o.at, o.seq))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Event {
    Deliver { from: NodeId, to: NodeId, msg: Message },
    Tick(NodeId),
}

#[derive(Debug, Clone, Copy)]
pub enum Clock {
    Virtual,
    /// Milliseconds since the given instant; events run as soon as queued.
    Wall(Instant),
}

/// An in-memory cluster of servers (and the auditor, for two servers).
pub struct Cluster {
    pub ctx: Arc<Context>,
    servers: Vec<ServerNode>,
    auditor: Option<Auditor>,
    queue: BinaryHeap<Reverse<Queued>>,
    seq: u64,
    now: u64,
    clock: Clock,
    latency_ms: u64,
    jitter_ms: u64,
    net_rng: ChaCha20Rng,
    /// Latest scheduled delivery per link; links are FIFO like the TCP
    /// streams they model.
    link_at: BTreeMap<(NodeId, NodeId), u64>,
    acks: BTreeMap<u64, Vec<(u8, Status)>>,
    /// Reveals per server, in order.
    revealed: Vec<Vec<Revealed>>,
    snapshots: Vec<(u8, Snapshot)>,
    halted: Vec<String>,
    events: u64,
}

impl Cluster {
    pub fn new(ctx: Arc<Context>, seed: u64, clock: Clock) -> Result<Self> {
        let mut servers = Vec::new();
        for i in 0..ctx.servers() {
            let rng = ChaCha20Rng::seed_from_u64(seed ^ (0x5e4e_0000 + i as u64));
            servers.push(ServerNode::new(ctx.clone(), i as u8, rng, 0, 0)?);
        }
        let auditor = (ctx.config.variant == Variant::TwoServer).then(|| Auditor::new(ctx.config.audit_deadline_ms));
        let n = servers.len();
        Ok(Cluster {
            ctx,
            servers,
            auditor,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0,
            clock,
            latency_ms: 0,
            jitter_ms: 0,
            net_rng: ChaCha20Rng::seed_from_u64(seed ^ 0x4e45_5400),
            link_at: BTreeMap::new(),
            acks: BTreeMap::new(),
            revealed: vec![Vec::new(); n],
            snapshots: Vec::new(),
            halted: Vec::new(),
            events: 0,
        })
    }

    pub fn with_latency(mut self, latency_ms: u64, jitter_ms: u64) -> Self {
        self.latency_ms = latency_ms;
        self.jitter_ms = jitter_ms;
        self
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn server(&self, i: usize) -> &ServerNode {
        &self.servers[i]
    }

    pub fn server_mut(&mut self, i: usize) -> &mut ServerNode {
        &mut self.servers[i]
    }

    pub fn epoch(&self) -> u64 {
        self.servers[0].epoch()
    }

    pub fn acks(&self, client: u64) -> &[(u8, Status)] {
        self.acks.get(&client).map_or(&[], |v| v.as_slice())
    }

    /// Final status for `client` once every server answered: `Accepted`
    /// only if all did.
    pub fn outcome(&self, client: u64) -> Option<Status> {
        let a = self.acks(client);
        if a.len() < self.servers.len() {
            return None;
        }
        Some(a.iter().map(|(_, s)| *s).find(|s| *s != Status::Accepted).unwrap_or(Status::Accepted))
    }

    /// Clients whose servers answered differently.
    pub fn ack_disagreements(&self) -> usize {
        self.acks.values().filter(|v| v.iter().any(|(_, s)| (*s == Status::Accepted) != (v[0].1 == Status::Accepted))).count()
    }

    pub fn revealed(&self, server: usize) -> &[Revealed] {
        &self.revealed[server]
    }

    /// Snapshots written at close, with the writing server.
    pub fn snapshots(&self) -> &[(u8, Snapshot)] {
        &self.snapshots
    }

    pub fn halted(&self) -> &[String] {
        &self.halted
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn idle(&self) -> bool {
        self.queue.is_empty()
    }

    fn clock_now(&self) -> u64 {
        match self.clock {
            Clock::Virtual => self.now,
            Clock::Wall(t0) => t0.elapsed().as_millis() as u64,
        }
    }

    fn push(&mut self, at: u64, event: Event) {
        self.seq += 1;
        self.queue.push(Reverse(Queued { at, seq: self.seq, event }));
    }

    fn send(&mut self, from: NodeId, to: NodeId, msg: Message, at: u64) {
        let j = if self.jitter_ms > 0 { self.net_rng.gen_range(0..=self.jitter_ms) } else { 0 };
        let last = self.link_at.entry((from, to)).or_insert(0);
        let t = (at + self.latency_ms + j).max(*last);
        *last = t;
        self.push(t, Event::Deliver { from, to, msg });
    }

    /// Sends each server its frame of `bundle` at time `at`.
    pub fn submit(&mut self, client: u64, bundle: &WriteBundle, at: u64) {
        for (i, m) in bundle.messages.iter().enumerate() {
            self.send(NodeId::Client(client), NodeId::Server(i as u8), m.clone(), at);
        }
    }

    /// Sends a single message from a client to one server.
    pub fn submit_to(&mut self, client: u64, server: u8, msg: Message, at: u64) {
        self.send(NodeId::Client(client), NodeId::Server(server), msg, at);
    }

    /// Asks the closer to end the current epoch now.
    pub fn close_epoch(&mut self) {
        let now = self.clock_now().max(self.now);
        self.now = now;
        let eff = self.servers[0].request_close(now);
        self.route(NodeId::Server(0), eff);
    }

    fn route(&mut self, from: NodeId, effects: Vec<Effect>) {
        for e in effects {
            match e {
                Effect::Send { to: NodeId::Client(c), msg: Message::WriteAck { status, .. } } => {
                    let NodeId::Server(s) = from else { continue };
                    self.acks.entry(c).or_default().push((s, status));
                }
                Effect::Send { to: NodeId::Client(_), .. } => {}
                Effect::Send { to, msg } => self.send(from, to, msg, self.now),
                Effect::Closed(s) => {
                    if let NodeId::Server(i) = from {
                        self.snapshots.push((i, *s));
                    }
                }
                Effect::Revealed(r) => {
                    if let NodeId::Server(s) = from {
                        self.revealed[s as usize].push(*r);
                    }
                }
                Effect::Halted(why) => self.halted.push(why),
            }
        }
        self.schedule_tick(from);
    }

    fn schedule_tick(&mut self, node: NodeId) {
        let t = match node {
            NodeId::Server(i) => self.servers[i as usize].next_deadline(),
            NodeId::Auditor => self.auditor.as_ref().and_then(|a| a.next_deadline()),
            NodeId::Client(_) => None,
        };
        if let Some(t) = t {
            let at = t.max(self.now);
            let dup = self.queue.iter().any(|Reverse(q)| q.event == Event::Tick(node) && q.at <= at);
            if !dup {
                self.push(at, Event::Tick(node));
            }
        }
    }

    /// Processes one event; false when the queue is empty or the next
    /// event lies beyond `until`.
    pub fn step(&mut self, until: u64) -> bool {
        let Some(Reverse(q)) = self.queue.peek() else { return false };
        if q.at > until {
            return false;
        }
        let Reverse(q) = self.queue.pop().expect("peeked");
        self.now = match self.clock {
            Clock::Virtual => q.at,
            Clock::Wall(_) => self.clock_now().max(self.now),
        };
        self.events += 1;
        let now = self.now;
        match q.event {
            Event::Deliver { from, to, msg } => {
                let eff = match to {
                    NodeId::Server(i) => self.servers[i as usize].handle(now, from, msg),
                    NodeId::Auditor => match self.auditor.as_mut() {
                        Some(a) => a.handle(now, from, msg),
                        None => Vec::new(),
                    },
                    NodeId::Client(_) => Vec::new(),
                };
                self.route(to, eff);
            }
            Event::Tick(node) => {
                let eff = match node {
                    NodeId::Server(i) => self.servers[i as usize].tick(now),
                    NodeId::Auditor => match self.auditor.as_mut() {
                        Some(a) => a.tick(now),
                        None => Vec::new(),
                    },
                    NodeId::Client(_) => Vec::new(),
                };
                self.route(node, eff);
            }
        }
        true
    }

    /// Runs until `done` holds, the queue drains or time passes `until`.
    pub fn run_while(&mut self, until: u64, mut done: impl FnMut(&Cluster) -> bool) -> bool {
        loop {
            if done(self) {
                return true;
            }
            if !self.step(until) {
                return done(self);
            }
        }
    }

    pub fn run_until_idle(&mut self, until: u64) {
        while self.step(until) {}
    }

    pub fn state(&self, server: usize) -> EpochState {
        self.servers[server].state()
    }
}

/// Bookkeeping for one submitted request.
#[derive(Debug, Clone)]
struct Submitted {
    client: u64,
    kind: Kind,
    row: usize,
    value: RowValue,
    message: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Honest,
    Malicious,
    Cover,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: u64,
    pub honest: usize,
    pub malicious: usize,
    pub cover: usize,
    pub honest_accepted: usize,
    pub malicious_accepted: usize,
    pub cover_accepted: usize,
    /// Honest messages found at their row after reveal.
    pub recovered: usize,
    /// Rows (cover row included) holding anything nonzero.
    pub nonzero_rows: usize,
    /// Rows where the revealed table differs from applying the accepted
    /// honest and cover writes to a zero table.
    pub oracle_mismatch_rows: usize,
    pub mutations: BTreeMap<String, usize>,
    pub report: EpochReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub seed: u64,
    pub epochs: Vec<EpochStats>,
    /// Recovered honest messages over honest submissions.
    pub success_rate: f64,
    pub rejected_by_reason: BTreeMap<String, u64>,
    pub ack_disagreements: usize,
    pub halted: Vec<String>,
    pub virtual_ms: u64,
    pub events: u64,
}

impl SimReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn honest_message<R: RngCore>(rng: &mut R, len: usize) -> Vec<u8> {
    let mut m = vec![0u8; len];
    rng.fill_bytes(&mut m);
    if let Some(b) = m.last_mut() {
        *b |= 1;
    }
    m
}

/// Runs the epochs described by `spec` and returns what was revealed.
pub fn run_simulation(spec: &SimSpec) -> Result<SimReport> {
    if !(0.0..=1.0).contains(&spec.malicious_fraction) {
        return Err(invalid("malicious fraction must lie in [0, 1]"));
    }
    let ctx = Arc::new(Context::new(spec.config.clone())?);
    if ctx.config.variant == Variant::Toy {
        return Err(invalid("the simulator runs the validated variants only"));
    }
    let cap = ctx.format.capacity();
    let msg_len = spec.message_bytes.unwrap_or(cap.min(16));
    if msg_len == 0 || msg_len > cap {
        return Err(invalid(format!("message length must be in 1..={cap}")));
    }
    let mut cluster = Cluster::new(ctx.clone(), spec.seed, Clock::Virtual)?.with_latency(spec.latency_ms, spec.jitter_ms);
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let n_mal = spec.malicious();
    let mut next_client = 0u64;
    let mut stats = Vec::new();

    for _ in 0..spec.epochs {
        let epoch = cluster.epoch();
        let start = cluster.now();
        let mut subs = Vec::new();
        let mut mutations: BTreeMap<String, usize> = BTreeMap::new();
        let kinds = (0..spec.clients)
            .map(|i| if i < n_mal { Kind::Malicious } else { Kind::Honest })
            .chain((0..spec.cover).map(|_| Kind::Cover));
        for kind in kinds {
            let client = next_client;
            next_client += 1;
            let (row, value, message, shares) = match kind {
                Kind::Honest => {
                    let row = choose_row(&mut rng, ctx.geometry.rows)?;
                    let message = honest_message(&mut rng, msg_len);
                    let value = encode_row(&ctx, &message)?;
                    let shares = share_row(&mut rng, &ctx, epoch, row, value.clone())?;
                    (row, value, message, shares)
                }
                Kind::Cover => {
                    let value = cover_row(&mut rng, &ctx);
                    let shares = share_row(&mut rng, &ctx, epoch, 0, value.clone())?;
                    (0, value, Vec::new(), shares)
                }
                Kind::Malicious => {
                    let row = choose_row(&mut rng, ctx.geometry.rows)?;
                    let (m, shares) = random_malicious(&mut rng, &ctx, epoch, row, spec.mutation)?;
                    *mutations.entry(format!("{m:?}")).or_default() += 1;
                    (row, encode_row(&ctx, b"")?, Vec::new(), shares)
                }
            };
            let at = start + if spec.spread_ms > 0 { rng.gen_range(0..spec.spread_ms) } else { 0 };
            cluster.submit(client, &WriteBundle::from_shares(epoch, shares), at);
            subs.push(Submitted { client, kind, row, value, message });
        }

        let limit = start + EPOCH_TIME_LIMIT_MS;
        cluster.run_while(limit, |c| subs.iter().all(|s| c.outcome(s.client).is_some()) || !c.halted().is_empty());
        let revealed_before = cluster.revealed(0).len();
        if cluster.epoch() == epoch {
            cluster.close_epoch();
        }
        let servers = ctx.servers();
        let ok = cluster.run_while(limit, |c| {
            (0..servers).all(|i| c.revealed(i).len() > revealed_before) || !c.halted().is_empty()
        });
        if !ok || !cluster.halted().is_empty() {
            break;
        }
        let r = cluster.revealed(0).last().expect("checked").clone();
        stats.push(epoch_stats(&ctx, &cluster, &subs, &r, mutations)?);
    }

    let honest: usize = stats.iter().map(|s| s.honest).sum();
    let recovered: usize = stats.iter().map(|s| s.recovered).sum();
    let mut rejected_by_reason = BTreeMap::new();
    for s in &stats {
        for (k, v) in &s.report.rejected_by_reason {
            *rejected_by_reason.entry(k.clone()).or_default() += v;
        }
    }
    Ok(SimReport {
        seed: spec.seed,
        success_rate: if honest == 0 { 1.0 } else { recovered as f64 / honest as f64 },
        epochs: stats,
        rejected_by_reason,
        ack_disagreements: cluster.ack_disagreements(),
        halted: cluster.halted().to_vec(),
        virtual_ms: cluster.now(),
        events: cluster.events(),
    })
}

fn epoch_stats(
    ctx: &Context,
    cluster: &Cluster,
    subs: &[Submitted],
    r: &Revealed,
    mutations: BTreeMap<String, usize>,
) -> Result<EpochStats> {
    let g = ctx.geometry;
    let mut oracle = crate::server::TableData::zeros(ctx.table_kind(), g.table_elems());
    let count = |k: Kind| subs.iter().filter(|s| s.kind == k).count();
    let accepted = |s: &Submitted| cluster.outcome(s.client) == Some(Status::Accepted);
    let acc = |k: Kind| subs.iter().filter(|s| s.kind == k && accepted(s)).count();
    for s in subs.iter().filter(|s| s.kind != Kind::Malicious && accepted(s)) {
        oracle.add_row(s.row, &s.value)?;
    }
    let recovered = subs
        .iter()
        .filter(|s| s.kind == Kind::Honest)
        .filter(|s| match &r.rows[s.row] {
            RowContent::Single(m) => *m == s.message,
            RowContent::Pair(a, b) => *a == s.message || *b == s.message,
            _ => false,
        })
        .count();
    let nonzero_rows = (0..g.rows).filter(|&i| r.table.row_nonzero(i, g.row_elems)).count();
    let oracle_mismatch_rows = (0..g.rows)
        .filter(|&i| {
            let span = i * g.row_elems..(i + 1) * g.row_elems;
            !rows_equal(&r.table, &oracle, span)
        })
        .count();
    Ok(EpochStats {
        epoch: r.report.epoch,
        honest: count(Kind::Honest),
        malicious: count(Kind::Malicious),
        cover: count(Kind::Cover),
        honest_accepted: acc(Kind::Honest),
        malicious_accepted: acc(Kind::Malicious),
        cover_accepted: acc(Kind::Cover),
        recovered,
        nonzero_rows,
        oracle_mismatch_rows,
        mutations,
        report: r.report.clone(),
    })
}

fn rows_equal(a: &crate::server::TableData, b: &crate::server::TableData, span: std::ops::Range<usize>) -> bool {
    use crate::server::TableData::*;
    match (a, b) {
        (Xor(x), Xor(y)) => x[span.clone()] == y[span],
        (Fp(x), Fp(y)) => x[span.clone()] == y[span],
        (P256(x), P256(y)) => x[span.clone()] == y[span],
        (Schnorr64(x), Schnorr64(y)) => x[span.clone()] == y[span],
        _ => false,
    }
}

/// Nonce-free summary line per epoch, for logs.
pub fn summarize(report: &SimReport) -> String {
    let mut s = String::new();
    for e in &report.epochs {
        s.push_str(&format!(
            "epoch {}: honest {}/{} accepted, {} recovered, malicious {}/{} accepted, {} nonzero rows, {} oracle mismatches\n",
            e.epoch,
            e.honest_accepted,
            e.honest,
            e.recovered,
            e.malicious_accepted,
            e.malicious,
            e.nonzero_rows,
            e.oracle_mismatch_rows
        ));
    }
    s.push_str(&format!("success rate {:.4}\n", report.success_rate));
    s
}


#[cfg(test)]
mod mutation_tests {
    use super::*;
    use crate::group::GroupKind;

    fn each_mutation(config: EpochConfig) {
        let ctx = Context::new(config.clone()).unwrap();
        for m in Mutation::applicable(&ctx) {
            let mut s = SimSpec::new(config.clone(), 3, 40);
            s.malicious_fraction = 1.0;
            s.mutation = Some(*m);
            let r = run_simulation(&s).unwrap();
            let e = &r.epochs[0];
            assert_eq!(e.malicious_accepted, 0, "{m:?} accepted");
            assert_eq!(e.nonzero_rows, 0, "{m:?} left a trace");
            assert_eq!(r.ack_disagreements, 0, "{m:?}");
        }
    }

    #[test]
    fn two_server_rejects_every_mutation() {
        each_mutation(EpochConfig::two_server(48, 12, false));
        each_mutation(EpochConfig::two_server(48, 12, true));
    }

    #[test]
    fn many_server_rejects_every_mutation() {
        each_mutation(EpochConfig::many_server(12, 8, 3, GroupKind::Schnorr64));
        each_mutation(EpochConfig::many_server(8, 8, 2, GroupKind::P256));
    }
}
