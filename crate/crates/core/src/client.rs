//! Building write requests and cover writes.

use rand::{CryptoRng, Rng, RngCore};

use crate::audit::{derive_nonce_ordered, share_hash, Digest, Nonce};
use crate::codec::{
    cover_fp_row, cover_group_row, cover_xor_row, encode_fp_row, encode_group_row, encode_xor_row, RowFormat,
};
use crate::dpf::{dpf2_gen, dpfs_gen, toy_gen, Geometry, PointFunction};
use crate::error::{invalid, Result};
use crate::field::Fp;
use crate::payload::{FpPayload, Xor};
use crate::group::{P256Point, PedersenParams, PrimeGroup, Schnorr64};
use crate::server::{zk_nonce, Context, TableKind, Variant, ZkParams};
use crate::wire::Message;
use crate::zk::prove_write_valid;

/// One row's worth of payload elements, before sharing.
#[derive(Debug, Clone, PartialEq)]
pub enum RowValue {
    Xor(Vec<u8>),
    Fp(Vec<Fp>),
    P256(Vec<P256Point>),
    Schnorr64(Vec<Schnorr64>),
}

/// Per-server pieces of one write, before framing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shares {
    pub keys: Vec<Vec<u8>>,
    /// Common proof bundle and per-server openings (many-server only).
    pub zk: Option<(Vec<u8>, Vec<Vec<u8>>)>,
}

impl Shares {
    pub fn hashes(&self) -> Vec<Digest> {
        self.keys.iter().map(|k| share_hash(k)).collect()
    }

    pub fn nonce(&self, epoch: u64) -> Nonce {
        match &self.zk {
            Some((common, _)) => zk_nonce(epoch, &self.hashes(), common),
            None => derive_nonce_ordered(epoch, &self.hashes()),
        }
    }
}

/// Frames ready to send, `messages[i]` to server `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WriteBundle {
    pub epoch: u64,
    pub nonce: Nonce,
    pub messages: Vec<Message>,
}

impl WriteBundle {
    pub fn from_shares(epoch: u64, shares: Shares) -> Self {
        let nonce = shares.nonce(epoch);
        let share_hashes = shares.hashes();
        let messages = match shares.zk {
            None => shares
                .keys
                .into_iter()
                .enumerate()
                .map(|(i, key)| Message::WriteShare {
                    epoch,
                    server_index: i as u8,
                    key,
                    share_hashes: share_hashes.clone(),
                })
                .collect(),
            Some((common, openings)) => shares
                .keys
                .into_iter()
                .zip(openings)
                .enumerate()
                .map(|(i, (key, opening))| Message::ZkBundle {
                    epoch,
                    server_index: i as u8,
                    key,
                    share_hashes: share_hashes.clone(),
                    common: common.clone(),
                    opening,
                })
                .collect(),
        };
        WriteBundle { epoch, nonce, messages }
    }

    /// Total bytes on the wire across all servers.
    pub fn wire_len(&self) -> usize {
        self.messages.iter().map(|m| m.to_frame().len()).sum()
    }
}

/// Pads and encodes `msg` as one row of the configured format.
pub fn encode_row(ctx: &Context, msg: &[u8]) -> Result<RowValue> {
    Ok(match (ctx.format, ctx.table_kind()) {
        (RowFormat::Xor { row_bytes }, _) => RowValue::Xor(encode_xor_row(msg, row_bytes)?),
        (RowFormat::Coded { data_cells }, _) => RowValue::Fp(encode_fp_row(msg, data_cells)?),
        (RowFormat::Group { chunks, .. }, TableKind::P256) => RowValue::P256(encode_group_row(msg, chunks)?),
        (RowFormat::Group { chunks, .. }, _) => RowValue::Schnorr64(encode_group_row(msg, chunks)?),
    })
}

/// Uniformly random nonzero row of the configured format.
pub fn cover_row<R: RngCore + CryptoRng>(rng: &mut R, ctx: &Context) -> RowValue {
    match (ctx.format, ctx.table_kind()) {
        (RowFormat::Xor { row_bytes }, _) => RowValue::Xor(cover_xor_row(rng, row_bytes)),
        (RowFormat::Coded { data_cells }, _) => RowValue::Fp(cover_fp_row(rng, data_cells)),
        (RowFormat::Group { chunks, .. }, TableKind::P256) => RowValue::P256(cover_group_row(rng, chunks)),
        (RowFormat::Group { chunks, .. }, _) => RowValue::Schnorr64(cover_group_row(rng, chunks)),
    }
}

fn share_many<G: PrimeGroup, R: RngCore + CryptoRng>(
    rng: &mut R,
    params: &PedersenParams<G>,
    g: &Geometry,
    servers: usize,
    epoch: u64,
    row: usize,
    value: Vec<G>,
) -> Result<Shares> {
    let pf = PointFunction::new(row, value.clone());
    let gen = dpfs_gen(rng, params, g, &pf, servers)?;
    let (common, openings) = prove_write_valid(rng, params, epoch, &gen, row, &value)?;
    Ok(Shares {
        keys: gen.keys.iter().map(|k| k.to_bytes()).collect(),
        zk: Some((common.to_bytes(), openings.iter().map(|o| o.to_bytes()).collect())),
    })
}

/// Secret-shares `value` at `row` for every server.
pub fn share_row<R: RngCore + CryptoRng>(
    rng: &mut R,
    ctx: &Context,
    epoch: u64,
    row: usize,
    value: RowValue,
) -> Result<Shares> {
    let g = &ctx.geometry;
    let n = ctx.servers();
    let plain = |keys: Vec<Vec<u8>>| Shares { keys, zk: None };
    Ok(match (ctx.config.variant, value) {
        (Variant::Toy, RowValue::Xor(m)) => {
            plain(toy_gen::<Xor, _>(rng, g, &PointFunction::new(row, m), n)?.iter().map(|k| k.to_bytes()).collect())
        }
        (Variant::Toy, RowValue::Fp(m)) => {
            plain(toy_gen::<FpPayload, _>(rng, g, &PointFunction::new(row, m), n)?.iter().map(|k| k.to_bytes()).collect())
        }
        (Variant::TwoServer, RowValue::Xor(m)) => {
            let (a, b) = dpf2_gen::<Xor, _>(rng, g, &PointFunction::new(row, m))?;
            plain(vec![a.to_bytes(), b.to_bytes()])
        }
        (Variant::TwoServer, RowValue::Fp(m)) => {
            let (a, b) = dpf2_gen::<FpPayload, _>(rng, g, &PointFunction::new(row, m))?;
            plain(vec![a.to_bytes(), b.to_bytes()])
        }
        (Variant::ManyServer, RowValue::P256(m)) => match &ctx.zk {
            ZkParams::P256(p) => share_many(rng, p, g, n, epoch, row, m)?,
            _ => return Err(invalid("row value does not match the configured group")),
        },
        (Variant::ManyServer, RowValue::Schnorr64(m)) => match &ctx.zk {
            ZkParams::Schnorr64(p) => share_many(rng, p, g, n, epoch, row, m)?,
            _ => return Err(invalid("row value does not match the configured group")),
        },
        _ => return Err(invalid("row value does not match the configured variant")),
    })
}

/// A real write of `msg` into `row` (which must not be the cover row).
pub fn make_write_request<R: RngCore + CryptoRng>(
    rng: &mut R,
    ctx: &Context,
    epoch: u64,
    row: usize,
    msg: &[u8],
) -> Result<WriteBundle> {
    if row == 0 {
        return Err(invalid("row 0 is reserved for cover writes"));
    }
    ctx.geometry.check_index(row)?;
    let value = encode_row(ctx, msg)?;
    Ok(WriteBundle::from_shares(epoch, share_row(rng, ctx, epoch, row, value)?))
}

/// A write of random nonzero garbage into row 0, the same size and layout
/// as a real write.
pub fn make_cover_request<R: RngCore + CryptoRng>(rng: &mut R, ctx: &Context, epoch: u64) -> Result<WriteBundle> {
    let value = cover_row(rng, ctx);
    Ok(WriteBundle::from_shares(epoch, share_row(rng, ctx, epoch, 0, value)?))
}

/// Uniform row in `[1, rows)`.
pub fn choose_row<R: RngCore>(rng: &mut R, rows: usize) -> Result<usize> {
    if rows < 2 {
        return Err(invalid("need at least two rows"));
    }
    Ok(rng.gen_range(1..rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupKind;
    use crate::server::EpochConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn row_zero_and_oversize_rejected() {
        let ctx = Context::new(EpochConfig::two_server(64, 16, false)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert!(make_write_request(&mut rng, &ctx, 0, 0, b"x").is_err());
        assert!(make_write_request(&mut rng, &ctx, 0, 64, b"x").is_err());
        assert!(make_write_request(&mut rng, &ctx, 0, 1, &[1u8; 16]).is_err());
        assert!(make_write_request(&mut rng, &ctx, 0, 1, &[1u8; 15]).is_ok());
    }

    #[test]
    fn choose_row_edges() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        assert!(choose_row(&mut rng, 1).is_err());
        for _ in 0..100 {
            assert_eq!(choose_row(&mut rng, 2).unwrap(), 1);
            assert_ne!(choose_row(&mut rng, 10).unwrap(), 0);
        }
    }

    #[test]
    fn cover_and_real_have_identical_layout() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for cfg in [
            EpochConfig::two_server(100, 32, false),
            EpochConfig::two_server(100, 32, true),
            EpochConfig::many_server(40, 12, 3, GroupKind::Schnorr64),
        ] {
            let ctx = Context::new(cfg).unwrap();
            let real = make_write_request(&mut rng, &ctx, 5, 17, b"hello").unwrap();
            let cover = make_cover_request(&mut rng, &ctx, 5).unwrap();
            for (r, c) in real.messages.iter().zip(&cover.messages) {
                let (fr, fc) = (r.to_frame(), c.to_frame());
                assert_eq!(fr.len(), fc.len());
                assert_eq!(fr[..10], fc[..10]);
            }
        }
    }
}
