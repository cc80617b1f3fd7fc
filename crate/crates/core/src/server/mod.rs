//! Per-epoch database shares, key dispatch by variant, reveal and the
//! epoch report. The networked state machine lives in [`node`].

use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use crate::audit::{run_audit, share_hash, AuditFailure, Digest, Nonce, NONCE_BYTES};
use crate::client::RowValue;
use crate::codec::{decode_fp_row, decode_group_row, decode_xor_row, RowContent, RowFormat};
use crate::dpf::{
    dpf2_eval_full_into, dpfs_eval_full_into, Dpf2Key, DpfSKey, Geometry, KeyVariant, Role, ToyKey,
};
use crate::error::{decode_err, invalid, Error, Result};
use crate::field::Fp;
use crate::group::{GroupKind, P256Point, PedersenParams, PrimeGroup, Schnorr64};
use crate::hash::sha256;
use crate::payload::{FpPayload, GroupPayload, Payload, Xor};
use crate::wire::Status;
use crate::zk::{verify_write_share, Opening, ZkCommon, ZkReject};

pub mod node;

pub use node::{Auditor, Effect, NodeId, ServerNode};

/// Seed bits per column for the two-server key (one extra bit for `b`).
pub const ALPHA_TWO_SERVER: u64 = 128;
/// Two 256-bit scalars per column for the many-server key.
pub const ALPHA_MANY_SERVER: u64 = 511;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Full-length sharing with no validation. Only usable in-process.
    Toy,
    /// Two servers plus an auditor.
    TwoServer,
    /// `s` servers with zero-knowledge validity proofs.
    ManyServer,
}

/// When the closer ends an epoch. At least one limit must be set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct EpochPolicy {
    #[serde(default)]
    pub max_requests: Option<u64>,
    #[serde(default)]
    pub duration_ms: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochConfig {
    pub rows: usize,
    #[serde(default = "default_row_bytes")]
    pub row_bytes: usize,
    pub variant: Variant,
    #[serde(default = "default_servers")]
    pub servers: usize,
    #[serde(default = "default_group")]
    pub group: GroupKind,
    #[serde(default)]
    pub recovery: bool,
    /// Overrides the size-optimal matrix shape.
    #[serde(default)]
    pub shape: Option<Shape>,
    pub policy: EpochPolicy,
    #[serde(default = "default_deadline")]
    pub audit_deadline_ms: u64,
}

fn default_row_bytes() -> usize {
    crate::row::DEFAULT_ROW_BYTES
}
fn default_servers() -> usize {
    2
}
fn default_group() -> GroupKind {
    GroupKind::P256
}
fn default_deadline() -> u64 {
    crate::audit::DEFAULT_DEADLINE_MS
}

impl EpochConfig {
    pub fn two_server(rows: usize, row_bytes: usize, recovery: bool) -> Self {
        EpochConfig {
            rows,
            row_bytes,
            variant: Variant::TwoServer,
            servers: 2,
            group: GroupKind::P256,
            recovery,
            shape: None,
            policy: EpochPolicy { max_requests: Some(1024), duration_ms: None },
            audit_deadline_ms: default_deadline(),
        }
    }

    pub fn many_server(rows: usize, row_bytes: usize, servers: usize, group: GroupKind) -> Self {
        EpochConfig { variant: Variant::ManyServer, servers, group, ..Self::two_server(rows, row_bytes, false) }
    }

    pub fn toy(rows: usize, row_bytes: usize, servers: usize, recovery: bool) -> Self {
        EpochConfig { variant: Variant::Toy, servers, ..Self::two_server(rows, row_bytes, recovery) }
    }

    pub fn with_policy(mut self, policy: EpochPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 {
            return Err(invalid("table needs at least two rows (row 0 is the cover sink)"));
        }
        if self.row_bytes < 2 {
            return Err(invalid("rows must hold at least two bytes"));
        }
        if self.servers < 2 || self.servers > u8::MAX as usize {
            return Err(invalid("server count must be between 2 and 255"));
        }
        match self.variant {
            Variant::TwoServer if self.servers != 2 => return Err(invalid("two-server variant needs exactly two servers")),
            Variant::ManyServer if self.recovery => {
                return Err(invalid("collision-recovery coding is only available over F_p"))
            }
            _ => {}
        }
        let p = self.policy;
        if p.max_requests.is_none() && p.duration_ms.is_none() {
            return Err(invalid("epoch policy needs a request threshold or a duration"));
        }
        if p.max_requests == Some(0) || p.duration_ms == Some(0) {
            return Err(invalid("epoch policy limits must be at least 1"));
        }
        if self.audit_deadline_ms == 0 {
            return Err(invalid("audit deadline must be positive"));
        }
        Ok(())
    }

    pub fn format(&self) -> RowFormat {
        match (self.variant, self.recovery) {
            (Variant::ManyServer, _) => match self.group {
                GroupKind::P256 => RowFormat::group::<P256Point>(self.row_bytes),
                GroupKind::Schnorr64 => RowFormat::group::<Schnorr64>(self.row_bytes),
            },
            (_, false) => RowFormat::xor(self.row_bytes),
            (_, true) => RowFormat::coded(self.row_bytes),
        }
    }

    pub fn table_kind(&self) -> TableKind {
        match (self.variant, self.recovery, self.group) {
            (Variant::ManyServer, _, GroupKind::P256) => TableKind::P256,
            (Variant::ManyServer, _, GroupKind::Schnorr64) => TableKind::Schnorr64,
            (_, false, _) => TableKind::Xor,
            (_, true, _) => TableKind::Fp,
        }
    }

    pub fn geometry(&self) -> Result<Geometry> {
        let format = self.format();
        let row_elems = format.row_elems();
        if let Some(s) = self.shape {
            return Geometry::new(self.rows, s.x, s.y, row_elems);
        }
        let kind = self.table_kind();
        let beta = (row_elems * kind.elem_bytes() * 8) as u64;
        Ok(match self.variant {
            Variant::Toy => Geometry::new(self.rows, self.rows, 1, row_elems)?,
            Variant::TwoServer => Geometry::optimized(self.rows, row_elems, ALPHA_TWO_SERVER, beta),
            Variant::ManyServer => Geometry::optimized(self.rows, row_elems, ALPHA_MANY_SERVER, beta),
        })
    }

    pub fn key_variant(&self) -> KeyVariant {
        match (self.variant, self.table_kind()) {
            (Variant::Toy, TableKind::Fp) => KeyVariant::ToyFp,
            (Variant::Toy, _) => KeyVariant::ToyXor,
            (_, TableKind::Xor) => KeyVariant::TwoServerXor,
            (_, TableKind::Fp) => KeyVariant::TwoServerFp,
            (_, TableKind::P256) => KeyVariant::ManyServerP256,
            (_, TableKind::Schnorr64) => KeyVariant::ManyServerSchnorr64,
        }
    }
}

/// Element type of a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum TableKind {
    Xor = 1,
    Fp = 2,
    P256 = 3,
    Schnorr64 = 4,
}

impl TableKind {
    pub fn elem_bytes(self) -> usize {
        match self {
            TableKind::Xor => Xor::ELEM_BYTES,
            TableKind::Fp => FpPayload::ELEM_BYTES,
            TableKind::P256 => P256Point::ENCODED_BYTES,
            TableKind::Schnorr64 => Schnorr64::ENCODED_BYTES,
        }
    }
}

pub enum ZkParams {
    None,
    P256(PedersenParams<P256Point>),
    Schnorr64(PedersenParams<Schnorr64>),
}

/// Everything derived once from an [`EpochConfig`].
pub struct Context {
    pub config: EpochConfig,
    pub geometry: Geometry,
    pub format: RowFormat,
    pub zk: ZkParams,
}

impl Context {
    pub fn new(config: EpochConfig) -> Result<Context> {
        config.validate()?;
        let geometry = config.geometry()?;
        let format = config.format();
        let zk = match config.table_kind() {
            TableKind::P256 => ZkParams::P256(PedersenParams::derive(geometry.v_elems())),
            TableKind::Schnorr64 => ZkParams::Schnorr64(PedersenParams::derive(geometry.v_elems())),
            _ => ZkParams::None,
        };
        Ok(Context { config, geometry, format, zk })
    }

    pub fn servers(&self) -> usize {
        self.config.servers
    }

    pub fn table_kind(&self) -> TableKind {
        self.config.table_kind()
    }

    /// Serialized length of one key share.
    pub fn key_len(&self) -> usize {
        let g = &self.geometry;
        match self.config.key_variant() {
            KeyVariant::ToyXor | KeyVariant::ToyFp => {
                crate::dpf::HEADER_BYTES + g.table_elems() * self.table_kind().elem_bytes()
            }
            KeyVariant::TwoServerXor => Dpf2Key::<Xor>::serialized_len(g),
            KeyVariant::TwoServerFp => Dpf2Key::<FpPayload>::serialized_len(g),
            KeyVariant::ManyServerP256 => DpfSKey::<P256Point>::serialized_len(g),
            KeyVariant::ManyServerSchnorr64 => DpfSKey::<Schnorr64>::serialized_len(g),
        }
    }

    pub fn parse_key(&self, bytes: &[u8], server_index: usize) -> Result<ShareKey> {
        if server_index >= self.servers() {
            return Err(invalid(format!("server index {server_index} out of range")));
        }
        let g = &self.geometry;
        Ok(match self.config.key_variant() {
            KeyVariant::ToyXor => ShareKey::ToyXor(ToyKey::from_bytes(bytes, g)?),
            KeyVariant::ToyFp => ShareKey::ToyFp(ToyKey::from_bytes(bytes, g)?),
            KeyVariant::TwoServerXor => ShareKey::Xor(Dpf2Key::from_bytes(bytes, g)?, Role::from_index(server_index)?),
            KeyVariant::TwoServerFp => ShareKey::Fp(Dpf2Key::from_bytes(bytes, g)?, Role::from_index(server_index)?),
            KeyVariant::ManyServerP256 => ShareKey::P256(DpfSKey::from_bytes(bytes, g)?),
            KeyVariant::ManyServerSchnorr64 => ShareKey::Schnorr64(DpfSKey::from_bytes(bytes, g)?),
        })
    }
}

/// A parsed key share of any variant.
#[derive(Debug, Clone, PartialEq)]
pub enum ShareKey {
    ToyXor(ToyKey<Xor>),
    ToyFp(ToyKey<FpPayload>),
    Xor(Dpf2Key<Xor>, Role),
    Fp(Dpf2Key<FpPayload>, Role),
    P256(DpfSKey<P256Point>),
    Schnorr64(DpfSKey<Schnorr64>),
}

impl ShareKey {
    pub fn is_toy(&self) -> bool {
        matches!(self, ShareKey::ToyXor(_) | ShareKey::ToyFp(_))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            ShareKey::ToyXor(k) => k.to_bytes(),
            ShareKey::ToyFp(k) => k.to_bytes(),
            ShareKey::Xor(k, _) => k.to_bytes(),
            ShareKey::Fp(k, _) => k.to_bytes(),
            ShareKey::P256(k) => k.to_bytes(),
            ShareKey::Schnorr64(k) => k.to_bytes(),
        }
    }
}

/// A key that passed validation for one epoch. Only the constructors below
/// produce one.
#[derive(Debug, Clone)]
pub struct ValidatedKey {
    key: ShareKey,
    epoch: u64,
}

impl ValidatedKey {
    pub(crate) fn new(key: ShareKey, epoch: u64) -> Self {
        ValidatedKey { key, epoch }
    }

    /// Straw-man keys carry no validity evidence at all; accepting them is
    /// the caller's explicit choice.
    pub fn straw_man(key: ShareKey, epoch: u64) -> Result<Self> {
        if !key.is_toy() {
            return Err(invalid("only toy keys skip validation"));
        }
        Ok(ValidatedKey { key, epoch })
    }

    pub fn key(&self) -> &ShareKey {
        &self.key
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }
}

/// Runs the full three-party audit in-process on a two-server key pair.
pub fn validate_pair<R: RngCore + CryptoRng>(
    rng: &mut R,
    epoch: u64,
    nonce: &Nonce,
    a: ShareKey,
    b: ShareKey,
) -> std::result::Result<(ValidatedKey, ValidatedKey), AuditFailure> {
    let ok = match (&a, &b) {
        (ShareKey::Xor(ka, Role::A), ShareKey::Xor(kb, Role::B)) => run_audit(rng, nonce, ka, kb),
        (ShareKey::Fp(ka, Role::A), ShareKey::Fp(kb, Role::B)) => run_audit(rng, nonce, ka, kb),
        _ => Err(AuditFailure::LengthMismatch),
    };
    ok.map(|()| (ValidatedKey::new(a, epoch), ValidatedKey::new(b, epoch)))
}

/// Checks one many-server share against its proof.
pub fn validate_zk(
    ctx: &Context,
    epoch: u64,
    server_index: usize,
    key: ShareKey,
    common: &[u8],
    opening: &[u8],
) -> std::result::Result<ValidatedKey, ZkReject> {
    fn check<G: PrimeGroup>(
        params: &PedersenParams<G>,
        g: &Geometry,
        servers: usize,
        epoch: u64,
        idx: usize,
        key: &DpfSKey<G>,
        common: &[u8],
        opening: &[u8],
    ) -> std::result::Result<(), ZkReject> {
        let common = ZkCommon::<G>::from_bytes(common, g, servers).map_err(|_| ZkReject::Malformed)?;
        let opening = Opening::from_bytes(opening, g.x).map_err(|_| ZkReject::Malformed)?;
        if common.statement.epoch != epoch {
            return Err(ZkReject::Malformed);
        }
        verify_write_share(params, idx, key, &common, &opening)
    }
    let (g, s) = (&ctx.geometry, ctx.servers());
    let r = match (&ctx.zk, &key) {
        (ZkParams::P256(p), ShareKey::P256(k)) => check(p, g, s, epoch, server_index, k, common, opening),
        (ZkParams::Schnorr64(p), ShareKey::Schnorr64(k)) => check(p, g, s, epoch, server_index, k, common, opening),
        _ => Err(ZkReject::Malformed),
    };
    r.map(|()| ValidatedKey::new(key, epoch))
}

/// Accumulated table contents.
#[derive(Debug, Clone, PartialEq)]
pub enum TableData {
    Xor(Vec<u8>),
    Fp(Vec<Fp>),
    P256(Vec<P256Point>),
    Schnorr64(Vec<Schnorr64>),
}

impl TableData {
    pub fn zeros(kind: TableKind, elems: usize) -> Self {
        match kind {
            TableKind::Xor => TableData::Xor(vec![0; elems]),
            TableKind::Fp => TableData::Fp(vec![Fp::ZERO; elems]),
            TableKind::P256 => TableData::P256(vec![P256Point::identity(); elems]),
            TableKind::Schnorr64 => TableData::Schnorr64(vec![Schnorr64::identity(); elems]),
        }
    }

    pub fn kind(&self) -> TableKind {
        match self {
            TableData::Xor(_) => TableKind::Xor,
            TableData::Fp(_) => TableKind::Fp,
            TableData::P256(_) => TableKind::P256,
            TableData::Schnorr64(_) => TableKind::Schnorr64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TableData::Xor(v) => v.len(),
            TableData::Fp(v) => v.len(),
            TableData::P256(v) => v.len(),
            TableData::Schnorr64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `self += other`; kinds and lengths must match.
    pub fn add_assign(&mut self, other: &TableData) -> Result<()> {
        if self.len() != other.len() {
            return Err(invalid("table lengths differ"));
        }
        match (self, other) {
            (TableData::Xor(a), TableData::Xor(b)) => Xor::add_into(a, b),
            (TableData::Fp(a), TableData::Fp(b)) => FpPayload::add_into(a, b),
            (TableData::P256(a), TableData::P256(b)) => GroupPayload::<P256Point>::add_into(a, b),
            (TableData::Schnorr64(a), TableData::Schnorr64(b)) => GroupPayload::<Schnorr64>::add_into(a, b),
            _ => return Err(invalid("table kinds differ")),
        }
        Ok(())
    }

    fn encode(&self, out: &mut Vec<u8>) {
        match self {
            TableData::Xor(v) => out.extend_from_slice(v),
            TableData::Fp(v) => FpPayload::encode_slice(v, out),
            TableData::P256(v) => GroupPayload::<P256Point>::encode_slice(v, out),
            TableData::Schnorr64(v) => GroupPayload::<Schnorr64>::encode_slice(v, out),
        }
    }

    fn decode(kind: TableKind, bytes: &[u8]) -> Result<Self> {
        Ok(match kind {
            TableKind::Xor => TableData::Xor(bytes.to_vec()),
            TableKind::Fp => TableData::Fp(FpPayload::decode_slice(bytes)?),
            TableKind::P256 => TableData::P256(GroupPayload::<P256Point>::decode_slice(bytes)?),
            TableKind::Schnorr64 => TableData::Schnorr64(GroupPayload::<Schnorr64>::decode_slice(bytes)?),
        })
    }

    /// Adds `value` into row `r`.
    pub fn add_row(&mut self, r: usize, value: &RowValue) -> Result<()> {
        fn add<P: Payload>(t: &mut [P::Elem], r: usize, v: &[P::Elem]) -> Result<()> {
            let n = v.len();
            let dst = t.get_mut(r * n..(r + 1) * n).ok_or_else(|| invalid("row outside table"))?;
            P::add_into(dst, v);
            Ok(())
        }
        match (self, value) {
            (TableData::Xor(t), RowValue::Xor(v)) => add::<Xor>(t, r, v),
            (TableData::Fp(t), RowValue::Fp(v)) => add::<FpPayload>(t, r, v),
            (TableData::P256(t), RowValue::P256(v)) => add::<GroupPayload<P256Point>>(t, r, v),
            (TableData::Schnorr64(t), RowValue::Schnorr64(v)) => add::<GroupPayload<Schnorr64>>(t, r, v),
            _ => Err(invalid("row value kind does not match table")),
        }
    }

    /// Whether any element of row `r` is nonzero.
    pub fn row_nonzero(&self, r: usize, row_elems: usize) -> bool {
        let span = r * row_elems..(r + 1) * row_elems;
        match self {
            TableData::Xor(v) => v[span].iter().any(|b| *b != 0),
            TableData::Fp(v) => v[span].iter().any(|e| !e.is_zero()),
            TableData::P256(v) => v[span].iter().any(|e| !e.is_identity()),
            TableData::Schnorr64(v) => v[span].iter().any(|e| !e.is_identity()),
        }
    }

    /// Decodes row `r` under `format`.
    pub fn decode_row(&self, r: usize, row_elems: usize) -> RowContent {
        let span = r * row_elems..(r + 1) * row_elems;
        match self {
            TableData::Xor(v) => decode_xor_row(&v[span]),
            TableData::Fp(v) => decode_fp_row(&v[span]),
            TableData::P256(v) => decode_group_row(&v[span]),
            TableData::Schnorr64(v) => decode_group_row(&v[span]),
        }
    }
}

const SHARE_MAGIC: &[u8; 4] = b"RPDS";

/// One server's additive share of the table for one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct DatabaseShare {
    pub epoch: u64,
    pub geometry: Geometry,
    pub data: TableData,
    pub applied: u64,
    pub closed: bool,
}

impl DatabaseShare {
    pub fn new(ctx: &Context, epoch: u64) -> Self {
        DatabaseShare {
            epoch,
            geometry: ctx.geometry,
            data: TableData::zeros(ctx.table_kind(), ctx.geometry.table_elems()),
            applied: 0,
            closed: false,
        }
    }

    /// Adds the key's full evaluation into the table.
    pub fn update(&mut self, ctx: &Context, vk: &ValidatedKey) -> Result<()> {
        if self.closed {
            return Err(Error::EpochClosed);
        }
        if vk.epoch != self.epoch {
            return Err(Error::NotValidated);
        }
        let g = self.geometry;
        let mismatch = || invalid("key does not match the table variant or shape");
        match (&mut self.data, &vk.key) {
            (TableData::Xor(t), ShareKey::ToyXor(k)) if k.cells.len() == t.len() => Xor::add_into(t, &k.cells),
            (TableData::Fp(t), ShareKey::ToyFp(k)) if k.cells.len() == t.len() => FpPayload::add_into(t, &k.cells),
            (TableData::Xor(t), ShareKey::Xor(k, role)) if k.geometry == g => dpf2_eval_full_into(k, *role, t),
            (TableData::Fp(t), ShareKey::Fp(k, role)) if k.geometry == g => dpf2_eval_full_into(k, *role, t),
            (TableData::P256(t), ShareKey::P256(k)) if k.geometry == g => match &ctx.zk {
                ZkParams::P256(p) => dpfs_eval_full_into(p, k, t),
                _ => return Err(mismatch()),
            },
            (TableData::Schnorr64(t), ShareKey::Schnorr64(k)) if k.geometry == g => match &ctx.zk {
                ZkParams::Schnorr64(p) => dpfs_eval_full_into(p, k, t),
                _ => return Err(mismatch()),
            },
            _ => return Err(mismatch()),
        }
        self.applied += 1;
        Ok(())
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    /// `"RPDS"`, kind, epoch, rows, x, y, row_elems, applied, elements.
    pub fn to_bytes(&self) -> Vec<u8> {
        let g = &self.geometry;
        let mut out = Vec::with_capacity(45 + self.data.len() * self.data.kind().elem_bytes());
        out.extend_from_slice(SHARE_MAGIC);
        out.push(self.data.kind() as u8);
        out.extend_from_slice(&self.epoch.to_le_bytes());
        for d in [g.rows, g.x, g.y, g.row_elems] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.applied.to_le_bytes());
        self.data.encode(&mut out);
        out
    }

    /// Parses a share and checks it against `ctx`. The result is closed.
    pub fn from_bytes(ctx: &Context, bytes: &[u8]) -> Result<Self> {
        const HEAD: usize = 4 + 1 + 8 + 16 + 8;
        if bytes.len() < HEAD || &bytes[..4] != SHARE_MAGIC {
            return Err(decode_err("not a database share"));
        }
        if bytes[4] != ctx.table_kind() as u8 {
            return Err(decode_err("share table kind does not match configuration"));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
        let epoch = u64::from_le_bytes(bytes[5..13].try_into().expect("8 bytes"));
        let geometry = Geometry { rows: u32_at(13), x: u32_at(17), y: u32_at(21), row_elems: u32_at(25) };
        if geometry != ctx.geometry {
            return Err(decode_err("share geometry does not match configuration"));
        }
        let applied = u64::from_le_bytes(bytes[29..37].try_into().expect("8 bytes"));
        let body = &bytes[HEAD..];
        if body.len() != geometry.table_elems() * ctx.table_kind().elem_bytes() {
            return Err(decode_err("share body length mismatch"));
        }
        let data = TableData::decode(ctx.table_kind(), body)?;
        Ok(DatabaseShare { epoch, geometry, data, applied, closed: true })
    }
}

/// One record of the revealed board.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoardEntry {
    pub row: usize,
    pub status: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: u64,
    pub rows: usize,
    pub accepted: u64,
    pub rejected: u64,
    pub rejected_by_reason: BTreeMap<String, u64>,
    pub empty: usize,
    pub single: usize,
    pub pair: usize,
    pub unrecoverable: usize,
    /// Status of the cover-traffic row, which is not counted above.
    pub cover_row: String,
    pub board: Vec<BoardEntry>,
}

impl EpochReport {
    /// Messages recovered from rows `>= 1`.
    pub fn messages(&self) -> Vec<Vec<u8>> {
        self.board
            .iter()
            .filter(|e| e.status != "unrecoverable")
            .map(|e| hex::decode(&e.message).expect("board entries are hex"))
            .collect()
    }

    /// One JSON record per line: `{row, status, message}`.
    pub fn board_ndjson(&self) -> String {
        let mut s = String::new();
        for e in &self.board {
            s.push_str(&serde_json::to_string(e).expect("plain struct serializes"));
            s.push('\n');
        }
        s
    }
}

/// Output of [`reveal`].
#[derive(Debug, Clone, PartialEq)]
pub struct Revealed {
    pub table: TableData,
    pub rows: Vec<RowContent>,
    pub report: EpochReport,
}

/// Combines all servers' shares and decodes every row.
pub fn reveal(ctx: &Context, shares: &[DatabaseShare], rejected: &BTreeMap<Status, u64>) -> Result<Revealed> {
    let first = shares.first().ok_or_else(|| invalid("no shares to reveal"))?;
    if shares.len() != ctx.servers() {
        return Err(invalid(format!("need {} shares, got {}", ctx.servers(), shares.len())));
    }
    for s in shares {
        if s.epoch != first.epoch || s.geometry != ctx.geometry || s.data.kind() != ctx.table_kind() {
            return Err(invalid("shares disagree on epoch or geometry"));
        }
    }
    let mut table = first.data.clone();
    for s in &shares[1..] {
        table.add_assign(&s.data)?;
    }
    let g = ctx.geometry;
    let rows: Vec<RowContent> = (0..g.rows).map(|r| table.decode_row(r, g.row_elems)).collect();

    let mut report = EpochReport {
        epoch: first.epoch,
        rows: g.rows,
        accepted: first.applied,
        rejected: rejected.values().sum(),
        rejected_by_reason: rejected.iter().map(|(k, v)| (format!("{k:?}").to_lowercase(), *v)).collect(),
        empty: 0,
        single: 0,
        pair: 0,
        unrecoverable: 0,
        cover_row: rows[0].status().to_string(),
        board: Vec::new(),
    };
    for (r, c) in rows.iter().enumerate().skip(1) {
        match c {
            RowContent::Empty => report.empty += 1,
            RowContent::Single(_) => report.single += 1,
            RowContent::Pair(..) => report.pair += 1,
            RowContent::Unrecoverable => report.unrecoverable += 1,
        }
        let status = c.status().to_string();
        match c {
            RowContent::Empty => {}
            RowContent::Unrecoverable => report.board.push(BoardEntry { row: r, status, message: String::new() }),
            _ => {
                for m in c.messages() {
                    report.board.push(BoardEntry { row: r, status: status.clone(), message: hex::encode(m) });
                }
            }
        }
    }
    Ok(Revealed { table, rows, report })
}

/// Digest over a set of nonces in sorted order.
pub fn nonce_set_digest<'a>(nonces: impl IntoIterator<Item = &'a Nonce>) -> Digest {
    let mut v: Vec<&Nonce> = nonces.into_iter().collect();
    v.sort();
    let mut flat = Vec::with_capacity(v.len() * NONCE_BYTES);
    for n in v {
        flat.extend_from_slice(n);
    }
    sha256(&[b"riposte/nonce-set", &flat])
}

/// Nonce for a many-server request: the share hashes plus the hash of the
/// common proof bundle.
pub fn zk_nonce(epoch: u64, share_hashes: &[Digest], common: &[u8]) -> Nonce {
    let mut all = share_hashes.to_vec();
    all.push(share_hash(common));
    crate::audit::derive_nonce_ordered(epoch, &all)
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"RPSNAP01";

/// What a server persists when an epoch closes.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub config: EpochConfig,
    pub share: DatabaseShare,
    pub nonces: Vec<Nonce>,
}

impl Snapshot {
    /// Magic, config as JSON, share, then the sorted nonce set; lengths
    /// are u32 little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = serde_json::to_vec(&self.config).expect("config serializes");
        let share = self.share.to_bytes();
        let mut nonces = self.nonces.clone();
        nonces.sort();
        let mut out = SNAPSHOT_MAGIC.to_vec();
        out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        out.extend_from_slice(&cfg);
        out.extend_from_slice(&(share.len() as u32).to_le_bytes());
        out.extend_from_slice(&share);
        out.extend_from_slice(&(nonces.len() as u32).to_le_bytes());
        for n in &nonces {
            out.extend_from_slice(n);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut at = SNAPSHOT_MAGIC.len();
        if bytes.len() < at || &bytes[..at] != SNAPSHOT_MAGIC {
            return Err(decode_err("not a snapshot"));
        }
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(at..at + n).ok_or_else(|| decode_err("truncated snapshot"))?;
            at += n;
            Ok(s)
        };
        let n = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        let config: EpochConfig =
            serde_json::from_slice(take(n)?).map_err(|e| decode_err(format!("snapshot config: {e}")))?;
        let ctx = Context::new(config.clone())?;
        let n = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        let share = DatabaseShare::from_bytes(&ctx, take(n)?)?;
        let n = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        let body = take(n.checked_mul(NONCE_BYTES).ok_or_else(|| decode_err("nonce count overflow"))?)?;
        let nonces = body.chunks_exact(NONCE_BYTES).map(|c| c.try_into().expect("16 bytes")).collect();
        if at != bytes.len() {
            return Err(decode_err("trailing bytes in snapshot"));
        }
        Ok(Snapshot { config, share, nonces })
    }
}
