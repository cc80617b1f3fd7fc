//! Sans-IO state machines for a database server and the auditor.
//!
//! Callers feed incoming messages and clock ticks in; the machines return
//! [`Effect`]s (messages to send, snapshots, reveals). Time is a plain
//! millisecond counter so the simulator can drive it virtually.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{
    nonce_set_digest, reveal, validate_zk, zk_nonce, Context, DatabaseShare, Revealed, ShareKey, Snapshot,
    ValidatedKey, Variant,
};
use crate::audit::{
    audit_decide, derive_nonce_ordered, prepare_half, share_hash, v_digest, CoinFlip, Contribution, Digest, Nonce,
    Phase, Tag,
};
use crate::error::{invalid, Result};
use crate::wire::{Message, Status, PHASE_VERDICT};

/// Close attempts before the closer gives up and halts.
pub const MAX_CLOSE_ATTEMPTS: u32 = 4;
const CLOSE_BACKOFF_MS: u64 = 500;
/// Peer messages for requests not seen yet are kept at most this many.
const EARLY_LIMIT: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeId {
    Server(u8),
    Auditor,
    Client(u64),
}

#[derive(Debug)]
pub enum Effect {
    Send { to: NodeId, msg: Message },
    /// The local share is final for this epoch; persist it.
    Closed(Box<Snapshot>),
    Revealed(Box<Revealed>),
    Halted(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpochState {
    Open,
    /// No new requests; draining in-flight ones and agreeing on counts.
    Closing,
    /// Counts agreed, shares being exchanged.
    Exchanging,
    Halted,
}

struct Pending {
    client: NodeId,
    key: ShareKey,
    arrived: u64,
    deadline: u64,
    contribution: Contribution,
    own_v: Digest,
    peer_commit: Option<(Digest, Digest)>,
    submitted: bool,
    phases_ok: [bool; 2],
    /// Servers (self included) that reported a valid proof.
    verdicts: BTreeSet<u8>,
}

#[derive(Default)]
struct CloseState {
    /// Closer: the close has been decided on.
    initiated: bool,
    sent: bool,
    attempts: u32,
    retry_at: Option<u64>,
    acks: BTreeMap<u8, (u64, Digest, Status)>,
    /// Peer: count announced by the closer.
    requested: Option<u64>,
    acked: bool,
    snapshot_taken: bool,
}

/// One database server.
pub struct ServerNode {
    index: u8,
    ctx: Arc<Context>,
    rng: ChaCha20Rng,
    epoch: u64,
    state: EpochState,
    share: DatabaseShare,
    opened_at: u64,
    seen: HashSet<Nonce>,
    accepted: Vec<Nonce>,
    rejected: BTreeMap<Status, u64>,
    pending: BTreeMap<Nonce, Pending>,
    early: BTreeMap<Nonce, (u64, Vec<(NodeId, Message)>)>,
    close: CloseState,
    xfer: BTreeMap<u8, DatabaseShare>,
    latencies: Vec<u64>,
}

impl ServerNode {
    pub fn new(ctx: Arc<Context>, index: u8, rng: ChaCha20Rng, epoch: u64, now: u64) -> Result<Self> {
        if ctx.config.variant == Variant::Toy {
            return Err(invalid("the toy variant has no validation and cannot run as a service"));
        }
        if index as usize >= ctx.servers() {
            return Err(invalid(format!("server index {index} out of range")));
        }
        let share = DatabaseShare::new(&ctx, epoch);
        Ok(ServerNode {
            index,
            ctx,
            rng,
            epoch,
            state: EpochState::Open,
            share,
            opened_at: now,
            seen: HashSet::new(),
            accepted: Vec::new(),
            rejected: BTreeMap::new(),
            pending: BTreeMap::new(),
            early: BTreeMap::new(),
            close: CloseState::default(),
            xfer: BTreeMap::new(),
            latencies: Vec::new(),
        })
    }

    pub fn index(&self) -> u8 {
        self.index
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn state(&self) -> EpochState {
        self.state
    }

    pub fn context(&self) -> &Arc<Context> {
        &self.ctx
    }

    pub fn share(&self) -> &DatabaseShare {
        &self.share
    }

    pub fn accepted_count(&self) -> u64 {
        self.share.applied
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    pub fn rejected(&self) -> &BTreeMap<Status, u64> {
        &self.rejected
    }

    /// Arrival-to-decision times of accepted requests since the last call.
    pub fn take_latencies(&mut self) -> Vec<u64> {
        std::mem::take(&mut self.latencies)
    }

    fn peers(&self) -> impl Iterator<Item = u8> + '_ {
        (0..self.ctx.servers() as u8).filter(move |&i| i != self.index)
    }

    fn is_peer(&self, from: NodeId) -> Option<u8> {
        match from {
            NodeId::Server(p) if p != self.index && (p as usize) < self.ctx.servers() => Some(p),
            _ => None,
        }
    }

    /// Earliest time at which [`tick`](Self::tick) has work to do.
    pub fn next_deadline(&self) -> Option<u64> {
        let mut t = self.pending.values().map(|p| p.deadline).min();
        let mut fold = |x: Option<u64>| {
            if let Some(x) = x {
                t = Some(t.map_or(x, |t| t.min(x)));
            }
        };
        fold(self.early.values().map(|(d, _)| *d).min());
        fold(self.close.retry_at);
        if self.index == 0 && self.state == EpochState::Open {
            fold(self.ctx.config.policy.duration_ms.map(|d| self.opened_at + d));
        }
        t
    }

    pub fn handle(&mut self, now: u64, from: NodeId, msg: Message) -> Vec<Effect> {
        let mut out = Vec::new();
        self.dispatch(now, from, msg, &mut out);
        self.progress(now, &mut out);
        out
    }

    pub fn tick(&mut self, now: u64) -> Vec<Effect> {
        let mut out = Vec::new();
        if self.state == EpochState::Halted {
            return out;
        }
        let expired: Vec<Nonce> = self.pending.iter().filter(|(_, p)| p.deadline <= now).map(|(n, _)| *n).collect();
        for n in expired {
            self.reject(&n, Status::Timeout, true, &mut out);
        }
        self.early.retain(|_, (d, _)| *d > now);
        if let Some(t) = self.close.retry_at {
            if t <= now {
                self.close.retry_at = None;
                self.close.sent = false;
            }
        }
        self.progress(now, &mut out);
        out
    }

    /// Closer only: end the epoch regardless of the policy.
    pub fn request_close(&mut self, now: u64) -> Vec<Effect> {
        let mut out = Vec::new();
        if self.index == 0 && self.state == EpochState::Open {
            self.state = EpochState::Closing;
            self.close.initiated = true;
        }
        self.progress(now, &mut out);
        out
    }

    fn dispatch(&mut self, now: u64, from: NodeId, msg: Message, out: &mut Vec<Effect>) {
        let many = self.ctx.config.variant == Variant::ManyServer;
        match (from, msg) {
            (NodeId::Client(_), Message::WriteShare { epoch, server_index, key, share_hashes }) if !many => {
                self.on_write(now, from, epoch, server_index, key, share_hashes, None, out)
            }
            (NodeId::Client(_), Message::ZkBundle { epoch, server_index, key, share_hashes, common, opening })
                if many =>
            {
                self.on_write(now, from, epoch, server_index, key, share_hashes, Some((common, opening)), out)
            }
            (NodeId::Client(_), m) => {
                self.count(Status::Parse);
                let epoch = m.epoch().unwrap_or(self.epoch);
                out.push(ack(from, epoch, [0; 16], Status::Parse));
            }
            (NodeId::Auditor, Message::AuditResp { nonce, phase, accept }) if !many => {
                self.on_audit_verdict(now, nonce, phase, accept, out)
            }
            (f, m) => {
                let Some(p) = self.is_peer(f) else { return };
                match m {
                    Message::CoinflipCommit { nonce, commitment, v_digest } if !many => {
                        self.on_commit(now, f, p, nonce, commitment, v_digest, out)
                    }
                    Message::CoinflipReveal { nonce, contribution } if !many => {
                        self.on_reveal(now, f, p, nonce, Contribution(contribution), out)
                    }
                    Message::AuditResp { nonce, phase: PHASE_VERDICT, accept } => {
                        self.on_peer_verdict(now, f, p, nonce, accept, out)
                    }
                    Message::Close { epoch, count } if p == 0 => self.on_close(epoch, count),
                    Message::CloseAck { epoch, count, nonce_digest, status } if self.index == 0 => {
                        self.on_close_ack(now, p, epoch, count, nonce_digest, status, out)
                    }
                    Message::ShareXfer { epoch, server_index, share } if server_index == p => {
                        self.on_xfer(now, p, epoch, &share, out)
                    }
                    _ => {}
                }
            }
        }
    }

    fn count(&mut self, s: Status) {
        *self.rejected.entry(s).or_default() += 1;
    }

    fn broadcast_verdict(&self, nonce: &Nonce, accept: bool, out: &mut Vec<Effect>) {
        for p in self.peers() {
            out.push(Effect::Send {
                to: NodeId::Server(p),
                msg: Message::AuditResp { nonce: *nonce, phase: PHASE_VERDICT, accept },
            });
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn on_write(
        &mut self,
        now: u64,
        client: NodeId,
        epoch: u64,
        server_index: u8,
        key: Vec<u8>,
        hashes: Vec<Digest>,
        zk: Option<(Vec<u8>, Vec<u8>)>,
        out: &mut Vec<Effect>,
    ) {
        if self.state == EpochState::Halted {
            out.push(ack(client, epoch, [0; 16], Status::EpochClosed));
            return;
        }
        if epoch != self.epoch {
            self.count(Status::Epoch);
            out.push(ack(client, epoch, [0; 16], Status::Epoch));
            return;
        }
        let me = self.index as usize;
        if server_index != self.index || hashes.len() != self.ctx.servers() || hashes[me] != share_hash(&key) {
            self.count(Status::Parse);
            out.push(ack(client, epoch, [0; 16], Status::Parse));
            return;
        }
        let nonce = match &zk {
            Some((common, _)) => zk_nonce(epoch, &hashes, common),
            None => derive_nonce_ordered(epoch, &hashes),
        };
        if self.state != EpochState::Open {
            self.count(Status::EpochClosed);
            out.push(ack(client, epoch, nonce, Status::EpochClosed));
            self.broadcast_verdict(&nonce, false, out);
            return;
        }
        if !self.seen.insert(nonce) {
            self.count(Status::Replay);
            out.push(ack(client, epoch, nonce, Status::Replay));
            return;
        }
        let key = match self.ctx.parse_key(&key, me) {
            Ok(k) => k,
            Err(_) => {
                self.count(Status::Parse);
                out.push(ack(client, epoch, nonce, Status::Parse));
                self.broadcast_verdict(&nonce, false, out);
                return;
            }
        };
        let deadline = now + self.ctx.config.audit_deadline_ms;
        let contribution = Contribution::random(&mut self.rng);
        let mut pending = Pending {
            client,
            key,
            arrived: now,
            deadline,
            contribution,
            own_v: [0; 32],
            peer_commit: None,
            submitted: false,
            phases_ok: [false; 2],
            verdicts: BTreeSet::new(),
        };
        match zk {
            None => {
                pending.own_v = match &pending.key {
                    ShareKey::Xor(k, _) => v_digest(&nonce, k),
                    ShareKey::Fp(k, _) => v_digest(&nonce, k),
                    _ => unreachable!("two-server context parses two-server keys"),
                };
                let peer = 1 - self.index;
                out.push(Effect::Send {
                    to: NodeId::Server(peer),
                    msg: Message::CoinflipCommit {
                        nonce,
                        commitment: contribution.commitment(&nonce),
                        v_digest: pending.own_v,
                    },
                });
                self.pending.insert(nonce, pending);
            }
            Some((common, opening)) => {
                let key = pending.key.clone();
                match validate_zk(&self.ctx, epoch, me, key, &common, &opening) {
                    Ok(_) => {
                        pending.verdicts.insert(self.index);
                        self.pending.insert(nonce, pending);
                        self.broadcast_verdict(&nonce, true, out);
                    }
                    Err(_) => {
                        self.count(Status::Proof);
                        out.push(ack(client, epoch, nonce, Status::Proof));
                        self.broadcast_verdict(&nonce, false, out);
                        return;
                    }
                }
            }
        }
        if let Some((_, msgs)) = self.early.remove(&nonce) {
            for (f, m) in msgs {
                self.dispatch(now, f, m, out);
            }
        }
        self.maybe_apply_zk(now, &nonce, out);
    }

    /// Buffers a peer message that arrived before the client's share.
    fn buffer_early(&mut self, now: u64, from: NodeId, nonce: Nonce, msg: Message) {
        if self.seen.contains(&nonce) || self.early.len() >= EARLY_LIMIT {
            return;
        }
        let deadline = now + self.ctx.config.audit_deadline_ms;
        self.early.entry(nonce).or_insert_with(|| (deadline, Vec::new())).1.push((from, msg));
    }

    #[allow(clippy::too_many_arguments)]
    fn on_commit(
        &mut self,
        now: u64,
        from: NodeId,
        peer: u8,
        nonce: Nonce,
        commitment: Digest,
        vd: Digest,
        out: &mut Vec<Effect>,
    ) {
        let Some(p) = self.pending.get_mut(&nonce) else {
            self.buffer_early(now, from, nonce, Message::CoinflipCommit { nonce, commitment, v_digest: vd });
            return;
        };
        if p.peer_commit.is_some() {
            self.reject(&nonce, Status::ProtocolViolation, true, out);
            return;
        }
        p.peer_commit = Some((commitment, vd));
        out.push(Effect::Send {
            to: NodeId::Server(peer),
            msg: Message::CoinflipReveal { nonce, contribution: p.contribution.0 },
        });
    }

    fn on_reveal(&mut self, now: u64, from: NodeId, _peer: u8, nonce: Nonce, theirs: Contribution, out: &mut Vec<Effect>) {
        let Some(p) = self.pending.get(&nonce) else {
            self.buffer_early(now, from, nonce, Message::CoinflipReveal { nonce, contribution: theirs.0 });
            return;
        };
        let Some((commitment, peer_v)) = p.peer_commit else {
            self.reject(&nonce, Status::ProtocolViolation, true, out);
            return;
        };
        if p.submitted || theirs.check_opening(&nonce, &commitment).is_err() {
            self.reject(&nonce, Status::ProtocolViolation, true, out);
            return;
        }
        if peer_v != p.own_v {
            self.reject(&nonce, Status::Audit, true, out);
            return;
        }
        let cf = if self.index == 0 {
            CoinFlip::from_contributions(&p.contribution, &theirs, &nonce)
        } else {
            CoinFlip::from_contributions(&theirs, &p.contribution, &nonce)
        };
        let half = match &p.key {
            ShareKey::Xor(k, _) => prepare_half(k, &nonce, &cf),
            ShareKey::Fp(k, _) => prepare_half(k, &nonce, &cf),
            _ => unreachable!("two-server context parses two-server keys"),
        };
        for (phase, tags) in [(Phase::T, half.t), (Phase::U, half.u)] {
            out.push(Effect::Send { to: NodeId::Auditor, msg: Message::AuditReq { nonce, phase: phase as u8, tags } });
        }
        let hard = now + 3 * self.ctx.config.audit_deadline_ms;
        let p = self.pending.get_mut(&nonce).expect("checked above");
        p.submitted = true;
        p.deadline = hard;
    }

    fn on_audit_verdict(&mut self, now: u64, nonce: Nonce, phase: u8, accept: bool, out: &mut Vec<Effect>) {
        let Some(ph) = Phase::from_byte(phase) else { return };
        let Some(p) = self.pending.get_mut(&nonce) else { return };
        if !p.submitted {
            return;
        }
        if !accept {
            self.reject(&nonce, Status::Audit, false, out);
            return;
        }
        p.phases_ok[(ph == Phase::U) as usize] = true;
        if p.phases_ok == [true, true] {
            self.apply(now, &nonce, out);
        }
    }

    fn on_peer_verdict(&mut self, now: u64, from: NodeId, peer: u8, nonce: Nonce, accept: bool, out: &mut Vec<Effect>) {
        let many = self.ctx.config.variant == Variant::ManyServer;
        let Some(p) = self.pending.get_mut(&nonce) else {
            self.buffer_early(now, from, nonce, Message::AuditResp { nonce, phase: PHASE_VERDICT, accept });
            return;
        };
        if !accept {
            let s = if many { Status::Proof } else { Status::Audit };
            self.reject(&nonce, s, false, out);
            return;
        }
        if many {
            p.verdicts.insert(peer);
            self.maybe_apply_zk(now, &nonce, out);
        }
    }

    fn maybe_apply_zk(&mut self, now: u64, nonce: &Nonce, out: &mut Vec<Effect>) {
        if self.ctx.config.variant != Variant::ManyServer {
            return;
        }
        if self.pending.get(nonce).is_some_and(|p| p.verdicts.len() == self.ctx.servers()) {
            self.apply(now, nonce, out);
        }
    }

    fn apply(&mut self, now: u64, nonce: &Nonce, out: &mut Vec<Effect>) {
        let Some(p) = self.pending.remove(nonce) else { return };
        let vk = ValidatedKey::new(p.key, self.epoch);
        match self.share.update(&self.ctx, &vk) {
            Ok(()) => {
                self.accepted.push(*nonce);
                self.latencies.push(now - p.arrived);
                out.push(ack(p.client, self.epoch, *nonce, Status::Accepted));
            }
            Err(_) => {
                self.count(Status::ProtocolViolation);
                out.push(ack(p.client, self.epoch, *nonce, Status::ProtocolViolation));
            }
        }
    }

    fn reject(&mut self, nonce: &Nonce, status: Status, notify: bool, out: &mut Vec<Effect>) {
        let Some(p) = self.pending.remove(nonce) else { return };
        self.count(status);
        out.push(ack(p.client, self.epoch, *nonce, status));
        if notify {
            self.broadcast_verdict(nonce, false, out);
        }
    }

    fn policy_met(&self, now: u64) -> bool {
        let p = self.ctx.config.policy;
        p.max_requests.is_some_and(|m| self.share.applied >= m) || p.duration_ms.is_some_and(|d| now >= self.opened_at + d)
    }

    fn snapshot(&mut self, out: &mut Vec<Effect>) {
        if self.close.snapshot_taken {
            return;
        }
        self.close.snapshot_taken = true;
        self.share.close();
        let mut nonces: Vec<Nonce> = self.seen.iter().copied().collect();
        nonces.sort();
        out.push(Effect::Closed(Box::new(Snapshot {
            config: self.ctx.config.clone(),
            share: self.share.clone(),
            nonces,
        })));
    }

    /// Moves the epoch state machine forward after any input.
    fn progress(&mut self, now: u64, out: &mut Vec<Effect>) {
        if self.state == EpochState::Open && self.index == 0 && self.policy_met(now) {
            self.state = EpochState::Closing;
            self.close.initiated = true;
        }
        if self.state != EpochState::Closing || !self.pending.is_empty() {
            return;
        }
        let count = self.share.applied;
        if self.index == 0 {
            if !self.close.sent && self.close.retry_at.is_none() {
                self.snapshot(out);
                self.close.sent = true;
                self.close.acks.clear();
                for p in self.peers().collect::<Vec<_>>() {
                    out.push(Effect::Send { to: NodeId::Server(p), msg: Message::Close { epoch: self.epoch, count } });
                }
            }
        } else if let Some(want) = self.close.requested {
            if !self.close.acked {
                self.snapshot(out);
                self.close.acked = true;
                let status = if want == count { Status::Accepted } else { Status::ProtocolViolation };
                out.push(Effect::Send {
                    to: NodeId::Server(0),
                    msg: Message::CloseAck {
                        epoch: self.epoch,
                        count,
                        nonce_digest: nonce_set_digest(&self.accepted),
                        status,
                    },
                });
            }
        }
    }

    fn on_close(&mut self, epoch: u64, count: u64) {
        if epoch != self.epoch || !matches!(self.state, EpochState::Open | EpochState::Closing) {
            return;
        }
        self.state = EpochState::Closing;
        self.close.requested = Some(count);
        self.close.acked = false;
    }

    #[allow(clippy::too_many_arguments)]
    fn on_close_ack(
        &mut self,
        now: u64,
        peer: u8,
        epoch: u64,
        count: u64,
        digest: Digest,
        status: Status,
        out: &mut Vec<Effect>,
    ) {
        if epoch != self.epoch || self.state != EpochState::Closing || !self.close.sent {
            return;
        }
        self.close.acks.insert(peer, (count, digest, status));
        if self.close.acks.len() + 1 < self.ctx.servers() {
            return;
        }
        let mine = (self.share.applied, nonce_set_digest(&self.accepted));
        let agreed = self.close.acks.values().all(|(c, d, s)| *s == Status::Accepted && (*c, *d) == mine);
        if agreed {
            self.state = EpochState::Exchanging;
            self.send_share(out);
            self.try_reveal(now, out);
            return;
        }
        self.close.attempts += 1;
        if self.close.attempts >= MAX_CLOSE_ATTEMPTS {
            let detail: Vec<String> =
                self.close.acks.iter().map(|(p, (c, _, s))| format!("server {p}: {c} accepted ({s})")).collect();
            self.halt(
                format!("epoch {} close diverged: closer has {} accepted; {}", self.epoch, mine.0, detail.join(", ")),
                out,
            );
            return;
        }
        self.close.retry_at = Some(now + (CLOSE_BACKOFF_MS << self.close.attempts));
    }

    fn send_share(&mut self, out: &mut Vec<Effect>) {
        let bytes = self.share.to_bytes();
        for p in self.peers().collect::<Vec<_>>() {
            out.push(Effect::Send {
                to: NodeId::Server(p),
                msg: Message::ShareXfer { epoch: self.epoch, server_index: self.index, share: bytes.clone() },
            });
        }
        self.xfer.insert(self.index, self.share.clone());
    }

    fn on_xfer(&mut self, now: u64, peer: u8, epoch: u64, bytes: &[u8], out: &mut Vec<Effect>) {
        if epoch != self.epoch || !matches!(self.state, EpochState::Closing | EpochState::Exchanging) {
            return;
        }
        let share = match DatabaseShare::from_bytes(&self.ctx, bytes) {
            Ok(s) if s.epoch == self.epoch => s,
            _ => {
                self.halt(format!("server {peer} sent an unusable share for epoch {epoch}"), out);
                return;
            }
        };
        self.xfer.insert(peer, share);
        if peer == 0 && self.state == EpochState::Closing && self.close.acked {
            self.state = EpochState::Exchanging;
            self.send_share(out);
        }
        self.try_reveal(now, out);
    }

    fn try_reveal(&mut self, now: u64, out: &mut Vec<Effect>) {
        if self.state != EpochState::Exchanging || self.xfer.len() != self.ctx.servers() {
            return;
        }
        let shares: Vec<DatabaseShare> = std::mem::take(&mut self.xfer).into_values().collect();
        match reveal(&self.ctx, &shares, &self.rejected) {
            Ok(r) => out.push(Effect::Revealed(Box::new(r))),
            Err(e) => {
                self.halt(format!("reveal of epoch {} failed: {e}", self.epoch), out);
                return;
            }
        }
        self.open_next(now);
    }

    fn open_next(&mut self, now: u64) {
        self.epoch += 1;
        self.state = EpochState::Open;
        self.share = DatabaseShare::new(&self.ctx, self.epoch);
        self.opened_at = now;
        self.seen.clear();
        self.accepted.clear();
        self.rejected.clear();
        self.close = CloseState::default();
    }

    fn halt(&mut self, why: String, out: &mut Vec<Effect>) {
        self.state = EpochState::Halted;
        out.push(Effect::Halted(why));
    }
}

fn ack(to: NodeId, epoch: u64, nonce: Nonce, status: Status) -> Effect {
    Effect::Send { to, msg: Message::WriteAck { epoch, nonce, status } }
}

struct AuditEntry {
    from: u8,
    tags: Vec<Tag>,
    deadline: u64,
}

/// The third party of the two-server audit. It sees only masked, rotated
/// tag vectors.
pub struct Auditor {
    deadline_ms: u64,
    pending: BTreeMap<(Nonce, u8), AuditEntry>,
    decided: u64,
    rejected: u64,
}

impl Auditor {
    pub fn new(deadline_ms: u64) -> Self {
        Auditor { deadline_ms, pending: BTreeMap::new(), decided: 0, rejected: 0 }
    }

    /// `(decisions, rejections)` so far.
    pub fn stats(&self) -> (u64, u64) {
        (self.decided, self.rejected)
    }

    pub fn next_deadline(&self) -> Option<u64> {
        self.pending.values().map(|e| e.deadline).min()
    }

    fn verdict(nonce: Nonce, phase: u8, accept: bool, out: &mut Vec<Effect>) {
        for s in 0..2 {
            out.push(Effect::Send { to: NodeId::Server(s), msg: Message::AuditResp { nonce, phase, accept } });
        }
    }

    pub fn handle(&mut self, now: u64, from: NodeId, msg: Message) -> Vec<Effect> {
        let mut out = Vec::new();
        let (NodeId::Server(s @ (0 | 1)), Message::AuditReq { nonce, phase, tags }) = (from, msg) else {
            return out;
        };
        if Phase::from_byte(phase).is_none() {
            return out;
        }
        let key = (nonce, phase);
        match self.pending.remove(&key) {
            Some(e) if e.from == s => {
                self.pending.insert(key, e);
            }
            Some(e) => {
                let (a, b) = if s == 1 { (&e.tags, &tags) } else { (&tags, &e.tags) };
                let accept = audit_decide(a, b).is_ok();
                self.decided += 1;
                self.rejected += (!accept) as u64;
                Self::verdict(nonce, phase, accept, &mut out);
            }
            None => {
                self.pending.insert(key, AuditEntry { from: s, tags, deadline: now + self.deadline_ms });
            }
        }
        out
    }

    pub fn tick(&mut self, now: u64) -> Vec<Effect> {
        let mut out = Vec::new();
        let expired: Vec<(Nonce, u8)> =
            self.pending.iter().filter(|(_, e)| e.deadline <= now).map(|(k, _)| *k).collect();
        for k in expired {
            self.pending.remove(&k);
            self.decided += 1;
            self.rejected += 1;
            Self::verdict(k.0, k.1, false, &mut out);
        }
        out
    }
}
