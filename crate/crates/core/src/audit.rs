//! Three-party validity audit for two-server write requests.
//!
//! Each server turns its key into two vectors: `t` (bit and seed per
//! column) and `u` (sum of all column expansions plus `popcount(b) v`).
//! A well-formed pair differs in exactly one position of each. The servers
//! hash every position under one-time Poly1305 keys from a jointly flipped
//! coin, rotate by a shared secret shift, and the auditor only checks that
//! exactly one tag differs.

use poly1305::universal_hash::KeyInit;
use poly1305::Poly1305;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use crate::dpf::{Dpf2Key, Role};
use crate::error::{Error, Result};
use crate::hash::sha256;
use crate::payload::{Payload, SeededPayload};
use crate::prg::{prg_expand, SEED_BYTES};

pub const NONCE_BYTES: usize = 16;
pub const TAG_BYTES: usize = 16;
pub const T_ELEM_BYTES: usize = 1 + SEED_BYTES;

pub type Nonce = [u8; NONCE_BYTES];
pub type Tag = [u8; TAG_BYTES];
pub type Digest = [u8; 32];

/// Default time a half-finished audit may wait for its counterpart.
pub const DEFAULT_DEADLINE_MS: u64 = 30_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Phase {
    T = b't',
    U = b'u',
}

impl Phase {
    pub const ALL: [Phase; 2] = [Phase::T, Phase::U];

    pub fn from_byte(b: u8) -> Option<Phase> {
        match b {
            b't' => Some(Phase::T),
            b'u' => Some(Phase::U),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Accept,
    Reject,
}

/// Why a server-side audit failed. Logged, never revealed on the board.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuditFailure {
    LengthMismatch,
    Differences(usize),
    RowMismatch,
    CoinFlip,
    Timeout,
}

/// Digest of a serialized key share, sent to the other server(s).
pub fn share_hash(share: &[u8]) -> Digest {
    sha256(&[b"riposte/share", share])
}

/// Nonce over all share hashes in server-index order, so every server
/// derives the same value.
pub fn derive_nonce_ordered(epoch: u64, hashes: &[Digest]) -> Nonce {
    let mut parts: Vec<&[u8]> = Vec::with_capacity(hashes.len() + 2);
    let e = epoch.to_be_bytes();
    parts.push(b"riposte/nonce");
    parts.push(&e);
    for h in hashes {
        parts.push(h);
    }
    let d = sha256(&parts);
    d[..NONCE_BYTES].try_into().expect("16 bytes")
}

pub fn derive_nonce(epoch: u64, own: &Digest, peer: &Digest, role: Role) -> Nonce {
    match role {
        Role::A => derive_nonce_ordered(epoch, &[*own, *peer]),
        Role::B => derive_nonce_ordered(epoch, &[*peer, *own]),
    }
}

/// One server's secret input to the coin flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Contribution(pub [u8; 32]);

impl Contribution {
    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut c = [0u8; 32];
        rng.fill_bytes(&mut c);
        Contribution(c)
    }

    pub fn commitment(&self, nonce: &Nonce) -> Digest {
        sha256(&[b"riposte/coin", nonce, &self.0])
    }

    pub fn check_opening(&self, nonce: &Nonce, commitment: &Digest) -> Result<()> {
        if self.commitment(nonce) != *commitment {
            return Err(Error::ProtocolViolation("coin-flip opening does not match commitment".into()));
        }
        Ok(())
    }
}

/// Shared per-request randomness `kappa`; shifts and hash keys derive from
/// it with per-phase labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoinFlip {
    pub kappa: Digest,
}

impl CoinFlip {
    pub fn from_contributions(a: &Contribution, b: &Contribution, nonce: &Nonce) -> Self {
        CoinFlip { kappa: sha256(&[&a.0, &b.0, nonce]) }
    }

    /// Rotation `f` in `[0, n)` for `phase`.
    pub fn shift(&self, phase: Phase, n: usize) -> usize {
        if n == 0 {
            return 0;
        }
        let h = sha256(&[&self.kappa, b"shift", &[phase as u8]]);
        (u64::from_be_bytes(h[..8].try_into().expect("8 bytes")) % n as u64) as usize
    }

    fn hash_keys(&self, phase: Phase, n: usize) -> Vec<u8> {
        let h = sha256(&[b"riposte/audit/keys", &self.kappa, &[phase as u8]]);
        let seed: [u8; SEED_BYTES] = h[..SEED_BYTES].try_into().expect("16 bytes");
        prg_expand(&seed, 32 * n)
    }
}

/// `t[i] = b[i] || s[i]`, flattened.
pub fn build_t_vector<P: SeededPayload>(k: &Dpf2Key<P>) -> Vec<u8> {
    let mut out = Vec::with_capacity(k.s.len() * T_ELEM_BYTES);
    for (b, s) in k.b.iter().zip(&k.s) {
        out.push(*b as u8);
        out.extend_from_slice(s);
    }
    out
}

/// `u = sum_i G(s[i]) + popcount(b) v`, `y * row_elems` elements.
///
/// This equals the column-sum of the server's unsigned evaluation, so
/// `u_A - u_B` is exactly what the pair writes into its differing column.
/// For XOR payloads it reduces to the familiar "B adds v" form because the
/// two popcounts have opposite parity.
pub fn build_u_vector<P: SeededPayload>(k: &Dpf2Key<P>) -> Vec<P::Elem> {
    let n = k.geometry.v_elems();
    let mut u = vec![P::zero(); n];
    for s in &k.s {
        P::expand_add_into(s, &mut u, false);
    }
    let ones = k.b.iter().filter(|b| **b).count();
    // popcount(b) v by doubling keeps this O(log x) additions per element
    let mut acc = vec![P::zero(); n];
    let mut base = k.v.clone();
    let mut c = ones;
    while c > 0 {
        if c & 1 == 1 {
            P::add_into(&mut acc, &base);
        }
        let cur = base.clone();
        P::add_into(&mut base, &cur);
        c >>= 1;
    }
    P::add_into(&mut u, &acc);
    u
}

/// Encodes `u` as `y` rows of bytes.
pub fn u_vector_bytes<P: Payload>(u: &[P::Elem]) -> Vec<u8> {
    let mut out = Vec::with_capacity(u.len() * P::ELEM_BYTES);
    P::encode_slice(u, &mut out);
    out
}

/// Binds the shared row vector `v` so the servers can confirm they hold
/// the same one.
pub fn v_digest<P: SeededPayload>(nonce: &Nonce, k: &Dpf2Key<P>) -> Digest {
    let mut bytes = Vec::with_capacity(k.v.len() * P::ELEM_BYTES);
    P::encode_slice(&k.v, &mut bytes);
    sha256(&[b"riposte/v", nonce, &bytes])
}

/// Masked, rotated tags for one AlmostEqual instance. `elems` holds `n`
/// equal-width entries back to back.
pub fn mask_and_rotate(elems: &[u8], width: usize, cf: &CoinFlip, phase: Phase) -> Vec<Tag> {
    assert!(width > 0 && elems.len().is_multiple_of(width), "ragged audit vector");
    let n = elems.len() / width;
    let keys = cf.hash_keys(phase, n);
    let tags: Vec<Tag> = elems
        .chunks_exact(width)
        .zip(keys.chunks_exact(32))
        .map(|(e, k)| {
            let mac = Poly1305::new(k.into());
            mac.compute_unpadded(e).into()
        })
        .collect();
    rotate_left(&tags, cf.shift(phase, n))
}

pub fn rotate_left<T: Clone>(v: &[T], f: usize) -> Vec<T> {
    if v.is_empty() {
        return Vec::new();
    }
    let f = f % v.len();
    v[f..].iter().chain(&v[..f]).cloned().collect()
}

/// Positions where the two tag vectors differ.
pub fn differing_positions(a: &[Tag], b: &[Tag]) -> Vec<usize> {
    a.iter().zip(b).enumerate().filter(|(_, (x, y))| x != y).map(|(i, _)| i).collect()
}

/// Accepts iff the vectors have equal length and differ in exactly one
/// position.
pub fn audit_decide(a: &[Tag], b: &[Tag]) -> std::result::Result<(), AuditFailure> {
    if a.len() != b.len() {
        return Err(AuditFailure::LengthMismatch);
    }
    match differing_positions(a, b).len() {
        1 => Ok(()),
        d => Err(AuditFailure::Differences(d)),
    }
}

/// One server's view of an audit: both masked vectors plus the row digest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditHalf {
    pub t: Vec<Tag>,
    pub u: Vec<Tag>,
    pub v_digest: Digest,
}

/// Server-side preparation once the coin is flipped.
pub fn prepare_half<P: SeededPayload>(k: &Dpf2Key<P>, nonce: &Nonce, cf: &CoinFlip) -> AuditHalf {
    let t = mask_and_rotate(&build_t_vector(k), T_ELEM_BYTES, cf, Phase::T);
    let u_bytes = u_vector_bytes::<P>(&build_u_vector(k));
    let u = mask_and_rotate(&u_bytes, k.geometry.row_elems * P::ELEM_BYTES, cf, Phase::U);
    AuditHalf { t, u, v_digest: v_digest(nonce, k) }
}

/// Runs the whole audit in-process: coin flip, masking and both auditor
/// decisions.
pub fn run_audit<P: SeededPayload, R: RngCore + CryptoRng>(
    rng: &mut R,
    nonce: &Nonce,
    key_a: &Dpf2Key<P>,
    key_b: &Dpf2Key<P>,
) -> std::result::Result<(), AuditFailure> {
    if key_a.geometry != key_b.geometry {
        return Err(AuditFailure::LengthMismatch);
    }
    let ca = Contribution::random(rng);
    let cb = Contribution::random(rng);
    let cf = CoinFlip::from_contributions(&ca, &cb, nonce);
    let ha = prepare_half(key_a, nonce, &cf);
    let hb = prepare_half(key_b, nonce, &cf);
    if ha.v_digest != hb.v_digest {
        return Err(AuditFailure::RowMismatch);
    }
    audit_decide(&ha.t, &hb.t)?;
    audit_decide(&ha.u, &hb.u)
}
