//! Framed binary protocol shared by clients, servers and the auditor.
//!
//! Frame: `"RPST"`, version `1`, message type, payload length (u32
//! big-endian), payload. Integer fields inside payloads are little-endian.

use serde::{Deserialize, Serialize};

use crate::audit::{Digest, Nonce, Tag, NONCE_BYTES, TAG_BYTES};
use crate::error::{decode_err, Result};

pub const MAGIC: &[u8; 4] = b"RPST";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;
/// Frames above this size are refused before allocation.
pub const MAX_PAYLOAD: usize = 256 << 20;

pub mod msg_type {
    pub const WRITE_SHARE: u8 = 0x01;
    pub const WRITE_ACK: u8 = 0x02;
    pub const AUDIT_REQ: u8 = 0x10;
    pub const AUDIT_RESP: u8 = 0x11;
    pub const COINFLIP_COMMIT: u8 = 0x20;
    pub const COINFLIP_REVEAL: u8 = 0x21;
    pub const CLOSE: u8 = 0x30;
    pub const CLOSE_ACK: u8 = 0x31;
    pub const SHARE_XFER: u8 = 0x40;
    pub const ZK_BUNDLE: u8 = 0x50;
}

/// Outcome codes carried in acknowledgements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Status {
    Accepted = 0,
    Parse = 1,
    Epoch = 2,
    Replay = 3,
    Audit = 4,
    Proof = 5,
    Timeout = 6,
    EpochClosed = 7,
    ProtocolViolation = 8,
}

impl Status {
    pub fn from_byte(b: u8) -> Result<Status> {
        Ok(match b {
            0 => Status::Accepted,
            1 => Status::Parse,
            2 => Status::Epoch,
            3 => Status::Replay,
            4 => Status::Audit,
            5 => Status::Proof,
            6 => Status::Timeout,
            7 => Status::EpochClosed,
            8 => Status::ProtocolViolation,
            _ => return Err(decode_err(format!("unknown status code {b}"))),
        })
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?} ({})", self, self.code())
    }
}

/// Verdict phase byte: the two audit phases plus `'z'`, a server-to-server
/// verdict on a whole request.
pub const PHASE_VERDICT: u8 = b'z';

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    WriteShare { epoch: u64, server_index: u8, key: Vec<u8>, share_hashes: Vec<Digest> },
    WriteAck { epoch: u64, nonce: Nonce, status: Status },
    AuditReq { nonce: Nonce, phase: u8, tags: Vec<Tag> },
    AuditResp { nonce: Nonce, phase: u8, accept: bool },
    CoinflipCommit { nonce: Nonce, commitment: Digest, v_digest: Digest },
    CoinflipReveal { nonce: Nonce, contribution: [u8; 32] },
    Close { epoch: u64, count: u64 },
    CloseAck { epoch: u64, count: u64, nonce_digest: Digest, status: Status },
    ShareXfer { epoch: u64, server_index: u8, share: Vec<u8> },
    ZkBundle {
        epoch: u64,
        server_index: u8,
        key: Vec<u8>,
        share_hashes: Vec<Digest>,
        common: Vec<u8>,
        opening: Vec<u8>,
    },
}

struct W(Vec<u8>);

impl W {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn raw(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.raw(b);
    }
    fn digests(&mut self, d: &[Digest]) {
        self.u8(d.len() as u8);
        for x in d {
            self.raw(x);
        }
    }
}

struct R<'a> {
    b: &'a [u8],
    at: usize,
}

impl<'a> R<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.b.len() - self.at < n {
            return Err(decode_err("truncated message"));
        }
        let s = &self.b[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
    fn arr<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.arr()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.arr()?))
    }
    fn bytes(&mut self) -> Result<Vec<u8>> {
        let n = self.u32()? as usize;
        Ok(self.take(n)?.to_vec())
    }
    fn digests(&mut self) -> Result<Vec<Digest>> {
        let n = self.u8()? as usize;
        (0..n).map(|_| self.arr()).collect()
    }
    fn done(&self) -> Result<()> {
        if self.at != self.b.len() {
            return Err(decode_err("trailing bytes in message"));
        }
        Ok(())
    }
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        use msg_type::*;
        match self {
            Message::WriteShare { .. } => WRITE_SHARE,
            Message::WriteAck { .. } => WRITE_ACK,
            Message::AuditReq { .. } => AUDIT_REQ,
            Message::AuditResp { .. } => AUDIT_RESP,
            Message::CoinflipCommit { .. } => COINFLIP_COMMIT,
            Message::CoinflipReveal { .. } => COINFLIP_REVEAL,
            Message::Close { .. } => CLOSE,
            Message::CloseAck { .. } => CLOSE_ACK,
            Message::ShareXfer { .. } => SHARE_XFER,
            Message::ZkBundle { .. } => ZK_BUNDLE,
        }
    }

    pub fn payload(&self) -> Vec<u8> {
        let mut w = W(Vec::new());
        match self {
            Message::WriteShare { epoch, server_index, key, share_hashes } => {
                w.u64(*epoch);
                w.u8(*server_index);
                w.bytes(key);
                w.digests(share_hashes);
            }
            Message::WriteAck { epoch, nonce, status } => {
                w.u64(*epoch);
                w.raw(nonce);
                w.u8(status.code());
            }
            Message::AuditReq { nonce, phase, tags } => {
                w.raw(nonce);
                w.u8(*phase);
                w.u32(tags.len() as u32);
                for t in tags {
                    w.raw(t);
                }
            }
            Message::AuditResp { nonce, phase, accept } => {
                w.raw(nonce);
                w.u8(*phase);
                w.u8(if *accept { 1 } else { 0 });
            }
            Message::CoinflipCommit { nonce, commitment, v_digest } => {
                w.raw(nonce);
                w.raw(commitment);
                w.raw(v_digest);
            }
            Message::CoinflipReveal { nonce, contribution } => {
                w.raw(nonce);
                w.raw(contribution);
            }
            Message::Close { epoch, count } => {
                w.u64(*epoch);
                w.u64(*count);
            }
            Message::CloseAck { epoch, count, nonce_digest, status } => {
                w.u64(*epoch);
                w.u64(*count);
                w.raw(nonce_digest);
                w.u8(status.code());
            }
            Message::ShareXfer { epoch, server_index, share } => {
                w.u64(*epoch);
                w.u8(*server_index);
                w.bytes(share);
            }
            Message::ZkBundle { epoch, server_index, key, share_hashes, common, opening } => {
                w.u64(*epoch);
                w.u8(*server_index);
                w.bytes(key);
                w.digests(share_hashes);
                w.bytes(common);
                w.bytes(opening);
            }
        }
        w.0
    }

    /// Complete frame, header included.
    pub fn to_frame(&self) -> Vec<u8> {
        let payload = self.payload();
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.msg_type());
        out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&payload);
        out
    }

    pub fn decode(msg_type: u8, payload: &[u8]) -> Result<Message> {
        use msg_type::*;
        let mut r = R { b: payload, at: 0 };
        let m = match msg_type {
            WRITE_SHARE => Message::WriteShare {
                epoch: r.u64()?,
                server_index: r.u8()?,
                key: r.bytes()?,
                share_hashes: r.digests()?,
            },
            WRITE_ACK => Message::WriteAck { epoch: r.u64()?, nonce: r.arr()?, status: Status::from_byte(r.u8()?)? },
            AUDIT_REQ => {
                let nonce = r.arr::<NONCE_BYTES>()?;
                let phase = r.u8()?;
                let n = r.u32()? as usize;
                if n > payload.len() / TAG_BYTES {
                    return Err(decode_err("tag count exceeds payload"));
                }
                let tags = (0..n).map(|_| r.arr()).collect::<Result<_>>()?;
                Message::AuditReq { nonce, phase, tags }
            }
            AUDIT_RESP => {
                let nonce = r.arr()?;
                let phase = r.u8()?;
                let accept = match r.u8()? {
                    0 => false,
                    1 => true,
                    v => return Err(decode_err(format!("bad verdict byte {v}"))),
                };
                Message::AuditResp { nonce, phase, accept }
            }
            COINFLIP_COMMIT => Message::CoinflipCommit { nonce: r.arr()?, commitment: r.arr()?, v_digest: r.arr()? },
            COINFLIP_REVEAL => Message::CoinflipReveal { nonce: r.arr()?, contribution: r.arr()? },
            CLOSE => Message::Close { epoch: r.u64()?, count: r.u64()? },
            CLOSE_ACK => Message::CloseAck {
                epoch: r.u64()?,
                count: r.u64()?,
                nonce_digest: r.arr()?,
                status: Status::from_byte(r.u8()?)?,
            },
            SHARE_XFER => Message::ShareXfer { epoch: r.u64()?, server_index: r.u8()?, share: r.bytes()? },
            ZK_BUNDLE => Message::ZkBundle {
                epoch: r.u64()?,
                server_index: r.u8()?,
                key: r.bytes()?,
                share_hashes: r.digests()?,
                common: r.bytes()?,
                opening: r.bytes()?,
            },
            t => return Err(decode_err(format!("unknown message type 0x{t:02x}"))),
        };
        r.done()?;
        Ok(m)
    }

    /// Epoch carried by client-originated messages.
    pub fn epoch(&self) -> Option<u64> {
        match self {
            Message::WriteShare { epoch, .. }
            | Message::WriteAck { epoch, .. }
            | Message::Close { epoch, .. }
            | Message::CloseAck { epoch, .. }
            | Message::ShareXfer { epoch, .. }
            | Message::ZkBundle { epoch, .. } => Some(*epoch),
            _ => None,
        }
    }
}

/// Validates a frame header and returns `(msg_type, payload_len)`.
pub fn parse_header(h: &[u8; HEADER_LEN]) -> Result<(u8, usize)> {
    if &h[..4] != MAGIC {
        return Err(decode_err("bad frame magic"));
    }
    if h[4] != VERSION {
        return Err(decode_err(format!("unsupported protocol version {}", h[4])));
    }
    let len = u32::from_be_bytes(h[6..10].try_into().expect("4 bytes")) as usize;
    if len > MAX_PAYLOAD {
        return Err(decode_err("frame too large"));
    }
    Ok((h[5], len))
}

/// Decodes one complete frame; `bytes` must hold exactly one frame.
pub fn decode_frame(bytes: &[u8]) -> Result<Message> {
    if bytes.len() < HEADER_LEN {
        return Err(decode_err("short frame"));
    }
    let (t, len) = parse_header(bytes[..HEADER_LEN].try_into().expect("header"))?;
    if bytes.len() != HEADER_LEN + len {
        return Err(decode_err("frame length mismatch"));
    }
    Message::decode(t, &bytes[HEADER_LEN..])
}
