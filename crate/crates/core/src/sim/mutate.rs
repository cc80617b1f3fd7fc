//! Malformed and malicious write requests.

use rand::seq::SliceRandom;
use rand::{CryptoRng, Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::client::{cover_row, encode_row, share_row, RowValue, Shares};
use crate::dpf::HEADER_BYTES;
use crate::error::{invalid, Result};
use crate::field::Fp;
use crate::group::{GroupScalar, PrimeGroup};
use crate::payload::{GroupPayload, Payload};
use crate::prg::random_seed;
use crate::server::{Context, ShareKey, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    /// One random bit of one serialized key body.
    BitFlip,
    /// One entry of one key's bit vector.
    BitVector,
    /// One entry of one key's seed vector.
    Seed,
    /// The masked row changed identically in every key, away from the
    /// written row.
    RowCorrupt,
    /// The masked row changed in one key only.
    RowMismatch,
    /// Keys taken from two different writes.
    IndexTamper,
    /// A write of the all-zero message.
    ZeroMessage,
    /// One key body replaced by random bytes.
    RandomBytes,
    /// One bit of the shared proof bundle.
    ProofTamper,
    /// One bit of one server's commitment opening.
    OpeningTamper,
}

impl Mutation {
    pub const TWO_SERVER: [Mutation; 8] = [
        Mutation::BitFlip,
        Mutation::BitVector,
        Mutation::Seed,
        Mutation::RowCorrupt,
        Mutation::RowMismatch,
        Mutation::IndexTamper,
        Mutation::ZeroMessage,
        Mutation::RandomBytes,
    ];

    pub const MANY_SERVER: [Mutation; 9] = [
        Mutation::BitFlip,
        Mutation::BitVector,
        Mutation::Seed,
        Mutation::RowCorrupt,
        Mutation::RowMismatch,
        Mutation::IndexTamper,
        Mutation::RandomBytes,
        Mutation::ProofTamper,
        Mutation::OpeningTamper,
    ];

    /// Mutations meaningful for the configured variant.
    pub fn applicable(ctx: &Context) -> &'static [Mutation] {
        match ctx.config.variant {
            Variant::ManyServer => &Self::MANY_SERVER,
            _ => &Self::TWO_SERVER,
        }
    }
}

fn flip_bit<R: RngCore>(rng: &mut R, bytes: &mut [u8], from: usize) {
    let i = rng.gen_range(from..bytes.len());
    bytes[i] ^= 1 << rng.gen_range(0..8);
}

fn edit_key<R: RngCore + CryptoRng>(
    rng: &mut R,
    ctx: &Context,
    shares: &mut Shares,
    server: usize,
    f: impl FnOnce(&mut R, &mut ShareKey),
) -> Result<()> {
    let mut k = ctx.parse_key(&shares.keys[server], server)?;
    f(rng, &mut k);
    shares.keys[server] = k.to_bytes();
    Ok(())
}

fn random_group<G: PrimeGroup, R: RngCore + CryptoRng>(rng: &mut R) -> G {
    loop {
        let e = GroupPayload::<G>::random(rng);
        if !e.is_identity() {
            return e;
        }
    }
}

fn nonzero_fp<R: RngCore>(rng: &mut R) -> Fp {
    crate::collision::random_nonzero(rng)
}

/// Adds a random nonzero value at position `at` of `v` in `key`.
fn perturb_v<R: RngCore + CryptoRng>(rng: &mut R, key: &mut ShareKey, at: usize) {
    match key {
        ShareKey::Xor(k, _) => k.v[at] ^= rng.gen_range(1..=255u8),
        ShareKey::Fp(k, _) => k.v[at] += nonzero_fp(rng),
        ShareKey::P256(k) => k.v[at] = k.v[at] + random_group(rng),
        ShareKey::Schnorr64(k) => k.v[at] = k.v[at] + random_group(rng),
        ShareKey::ToyXor(k) => k.cells[at] ^= rng.gen_range(1..=255u8),
        ShareKey::ToyFp(k) => k.cells[at] += nonzero_fp(rng),
    }
}

/// Same perturbation applied to every key. The masked row is the
/// identical tail of every serialized key.
fn perturb_v_all<R: RngCore + CryptoRng>(rng: &mut R, ctx: &Context, shares: &mut Shares, at: usize) -> Result<()> {
    let v_bytes = ctx.geometry.v_elems() * ctx.table_kind().elem_bytes();
    edit_key(rng, ctx, shares, 0, |r, k| perturb_v(r, k, at))?;
    let first = shares.keys[0].clone();
    let tail = &first[first.len() - v_bytes..];
    for k in shares.keys.iter_mut().skip(1) {
        let n = k.len();
        k[n - v_bytes..].copy_from_slice(tail);
    }
    Ok(())
}

fn honest_value<R: RngCore + CryptoRng>(rng: &mut R, ctx: &Context) -> Result<RowValue> {
    let cap = ctx.format.capacity().clamp(1, 16);
    let mut msg = vec![0u8; rng.gen_range(1..=cap)];
    rng.fill_bytes(&mut msg);
    *msg.last_mut().expect("nonempty") |= 1;
    encode_row(ctx, &msg)
}

fn zero_value(ctx: &Context, like: &RowValue) -> RowValue {
    let n = ctx.format.row_elems();
    match like {
        RowValue::Xor(_) => RowValue::Xor(vec![0; n]),
        RowValue::Fp(_) => RowValue::Fp(vec![Fp::ZERO; n]),
        RowValue::P256(_) => RowValue::P256(vec![PrimeGroup::identity(); n]),
        RowValue::Schnorr64(_) => RowValue::Schnorr64(vec![PrimeGroup::identity(); n]),
    }
}

/// Builds a request that honest servers must reject, for `row`.
pub fn malicious_shares<R: RngCore + CryptoRng>(
    rng: &mut R,
    ctx: &Context,
    epoch: u64,
    row: usize,
    m: Mutation,
) -> Result<Shares> {
    let g = ctx.geometry;
    let n = ctx.servers();
    let value = if row == 0 { cover_row(rng, ctx) } else { honest_value(rng, ctx)? };
    if m == Mutation::ZeroMessage {
        if ctx.config.variant == Variant::ManyServer {
            return Err(invalid("zero writes cannot carry a validity proof"));
        }
        let z = zero_value(ctx, &value);
        return share_row(rng, ctx, epoch, row, z);
    }
    let mut shares = share_row(rng, ctx, epoch, row, value.clone())?;
    let victim = rng.gen_range(0..n);
    let (lx, ly) = g.split(row);
    match m {
        Mutation::BitFlip => flip_bit(rng, &mut shares.keys[victim], HEADER_BYTES),
        Mutation::BitVector => {
            let j = rng.gen_range(0..g.x);
            edit_key(rng, ctx, &mut shares, victim, |_, k| match k {
                ShareKey::Xor(k, _) => k.b[j] = !k.b[j],
                ShareKey::Fp(k, _) => k.b[j] = !k.b[j],
                ShareKey::P256(k) => k.b[j] = k.b[j] + GroupScalar::one(),
                ShareKey::Schnorr64(k) => k.b[j] = k.b[j] + GroupScalar::one(),
                _ => {}
            })?
        }
        Mutation::Seed => {
            let j = rng.gen_range(0..g.x);
            edit_key(rng, ctx, &mut shares, victim, |r, k| match k {
                ShareKey::Xor(k, _) => k.s[j] = loop {
                    let s = random_seed(r);
                    if s != k.s[j] {
                        break s;
                    }
                },
                ShareKey::Fp(k, _) => k.s[j] = loop {
                    let s = random_seed(r);
                    if s != k.s[j] {
                        break s;
                    }
                },
                ShareKey::P256(k) => k.s[j] = k.s[j] + GroupScalar::one(),
                ShareKey::Schnorr64(k) => k.s[j] = k.s[j] + GroupScalar::one(),
                _ => {}
            })?
        }
        Mutation::RowCorrupt => {
            if g.y < 2 {
                return Err(invalid("row corruption needs at least two rows per column"));
            }
            let other = loop {
                let r = rng.gen_range(0..g.y);
                if r != ly {
                    break r;
                }
            };
            let at = other * g.row_elems + rng.gen_range(0..g.row_elems);
            perturb_v_all(rng, ctx, &mut shares, at)?;
        }
        Mutation::RowMismatch => {
            let at = rng.gen_range(0..g.v_elems());
            edit_key(rng, ctx, &mut shares, victim, |r, k| perturb_v(r, k, at))?;
        }
        Mutation::IndexTamper => {
            let other_row = loop {
                let r = rng.gen_range(0..g.rows);
                if g.split(r).0 != lx || (g.x == 1 && r != row) {
                    break r;
                }
            };
            let other = share_row(rng, ctx, epoch, other_row, value)?;
            shares.keys[victim] = other.keys[victim].clone();
        }
        Mutation::RandomBytes => {
            let k = &mut shares.keys[victim];
            rng.fill_bytes(&mut k[HEADER_BYTES..]);
        }
        Mutation::ProofTamper => match &mut shares.zk {
            Some((common, _)) => flip_bit(rng, common, 0),
            None => return Err(invalid("no proof to tamper with")),
        },
        Mutation::OpeningTamper => match &mut shares.zk {
            Some((_, openings)) => flip_bit(rng, &mut openings[victim], 0),
            None => return Err(invalid("no opening to tamper with")),
        },
        Mutation::ZeroMessage => unreachable!("handled above"),
    }
    Ok(shares)
}

/// Picks a mutation applicable to `ctx` (or uses `fixed`) and builds it.
pub fn random_malicious<R: RngCore + CryptoRng>(
    rng: &mut R,
    ctx: &Context,
    epoch: u64,
    row: usize,
    fixed: Option<Mutation>,
) -> Result<(Mutation, Shares)> {
    let m = match fixed {
        Some(m) => m,
        None => {
            let all = Mutation::applicable(ctx);
            let usable: Vec<Mutation> =
                all.iter().copied().filter(|m| *m != Mutation::RowCorrupt || ctx.geometry.y >= 2).collect();
            *usable.choose(rng).expect("at least one mutation applies")
        }
    };
    Ok((m, malicious_shares(rng, ctx, epoch, row, m)?))
}
