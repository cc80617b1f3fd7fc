//! Client-side validity proofs for many-server write requests.
//!
//! The client commits to every server's bit and seed vectors. Summing the
//! commitments gives `B_sum` and `S_sum`, which the proof shows are shaped
//! like `e_{l_x}` and `s* e_{l_x}`. A vector `D` of per-row selector
//! commitments then pins the written column to a single row: for every row
//! either `D[k]` opens to one, or `D[k]` opens to zero and the public row
//! `v[k]` cancels the PRG output `s* P_k` exactly. Each server checks the
//! openings of its own commitments against the key it received.

mod sigma;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

pub use sigma::{prove_or, prove_simple, verify_or, verify_simple, Equation, OrProof, Relation, SimpleProof};
use sigma::{put_scalars, Reader};

use crate::dpf::{DpfSGen, DpfSKey, Geometry};
use crate::error::{invalid, Result};
use crate::group::{GroupScalar, PedersenParams, PrimeGroup};
use crate::hash::sha256;

const LABEL_BIT: &[u8] = b"bit";
const LABEL_SUM: &[u8] = b"sum";
const LABEL_LINK: &[u8] = b"link";
const LABEL_ROW: &[u8] = b"row";
const LABEL_ROW_SUM: &[u8] = b"row-sum";

/// Why a server refused a proof.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ZkReject {
    Malformed,
    OpeningMismatch,
    BitProofFailed,
    SumProofFailed,
    LinkProofFailed,
    RowProofFailed,
}

impl std::fmt::Display for ZkReject {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

pub fn pedersen_commit<G: PrimeGroup>(params: &PedersenParams<G>, m: &G::Scalar, r: &G::Scalar) -> G {
    params.p.mul(m) + params.q.mul(r)
}

/// Public part of a request: commitments for every server plus the row
/// selectors.
#[derive(Debug, Clone, PartialEq)]
pub struct WriteStatement<G: PrimeGroup> {
    pub epoch: u64,
    pub b: Vec<Vec<G>>,
    pub s: Vec<Vec<G>>,
    pub d: Vec<G>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WriteValidityProof<S> {
    pub bits: Vec<OrProof<S>>,
    pub sum: SimpleProof<S>,
    pub links: Vec<OrProof<S>>,
    pub rows: Vec<OrProof<S>>,
    pub row_sum: SimpleProof<S>,
}

/// Identical bytes go to every server.
#[derive(Debug, Clone, PartialEq)]
pub struct ZkCommon<G: PrimeGroup> {
    pub statement: WriteStatement<G>,
    pub proof: WriteValidityProof<G::Scalar>,
}

/// Randomness opening one server's `B_i`, `S_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Opening<S> {
    pub rb: Vec<S>,
    pub rs: Vec<S>,
}

struct Sums<G: PrimeGroup> {
    b: Vec<G>,
    s: Vec<G>,
    s_total: G,
}

fn sums<G: PrimeGroup>(st: &WriteStatement<G>, x: usize) -> Sums<G> {
    let col = |m: &[Vec<G>], j: usize| m.iter().fold(G::identity(), |a, v| a + v[j]);
    let b: Vec<G> = (0..x).map(|j| col(&st.b, j)).collect();
    let s: Vec<G> = (0..x).map(|j| col(&st.s, j)).collect();
    let s_total = s.iter().fold(G::identity(), |a, e| a + *e);
    Sums { b, s, s_total }
}

/// Homomorphic `B_sum` and `S_sum`, as each verifier recomputes them.
pub fn commitment_sums<G: PrimeGroup>(st: &WriteStatement<G>, g: &Geometry) -> (Vec<G>, Vec<G>) {
    let s = sums(st, g.x);
    (s.b, s.s)
}

/// Fiat–Shamir context binding epoch, group, geometry and every commitment.
pub fn statement_digest<G: PrimeGroup>(st: &WriteStatement<G>, g: &Geometry) -> [u8; 32] {
    let mut buf = Vec::new();
    buf.extend_from_slice(&st.epoch.to_le_bytes());
    buf.push(G::KIND as u8);
    for n in [g.rows, g.x, g.y, g.row_elems, st.b.len()] {
        buf.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for v in st.b.iter().chain(&st.s) {
        for e in v {
            e.encode(&mut buf);
        }
    }
    for e in &st.d {
        e.encode(&mut buf);
    }
    sha256(&[b"riposte/zk/statement", &buf])
}

/// The two branches for row `k`: selected (`D[k]` opens to one) or empty
/// (`D[k]` opens to zero and `-v[k,c] = a P_{k,c}` for the `a` inside
/// `S_total`).
fn row_relations<G: PrimeGroup>(
    params: &PedersenParams<G>,
    g: &Geometry,
    v: &[G],
    d: G,
    s_total: G,
    k: usize,
) -> [Relation<G>; 2] {
    let selected = Relation::dlog(d - params.p, params.q);
    // vars: 0 = r_d, 1 = a, 2 = rho
    let mut eqs = vec![
        Equation { lhs: d, terms: vec![(0, params.q)] },
        Equation { lhs: s_total, terms: vec![(1, params.p), (2, params.q)] },
    ];
    for c in 0..g.row_elems {
        let at = k * g.row_elems + c;
        eqs.push(Equation { lhs: -v[at], terms: vec![(1, params.prg[at])] });
    }
    [selected, Relation { vars: 3, eqs }]
}

fn bit_relations<G: PrimeGroup>(params: &PedersenParams<G>, b: G) -> [Relation<G>; 2] {
    [Relation::dlog(b, params.q), Relation::dlog(b - params.p, params.q)]
}

fn link_relations<G: PrimeGroup>(params: &PedersenParams<G>, b: G, s: G) -> [Relation<G>; 2] {
    [Relation::dlog(s, params.q), Relation::dlog(b - params.p, params.q)]
}

fn sum_relation<G: PrimeGroup>(params: &PedersenParams<G>, elems: &[G]) -> Relation<G> {
    let total = elems.iter().fold(G::identity(), |a, e| a + *e);
    Relation::dlog(total - params.p, params.q)
}

/// Builds commitments, openings and the proof for keys from `dpfs_gen`.
pub fn prove_write_valid<G: PrimeGroup, R: RngCore + CryptoRng>(
    rng: &mut R,
    params: &PedersenParams<G>,
    epoch: u64,
    gen: &DpfSGen<G>,
    index: usize,
    message: &[G],
) -> Result<(ZkCommon<G>, Vec<Opening<G::Scalar>>)> {
    if message.iter().all(|m| m.is_identity()) {
        return Err(invalid("message must not be the identity"));
    }
    let keys = &gen.keys;
    let g = keys.first().ok_or_else(|| invalid("no keys"))?.geometry;
    g.check_index(index)?;
    let (lx, ly) = g.split(index);
    let x = g.x;

    let mut openings = Vec::with_capacity(keys.len());
    let (mut bc, mut sc) = (Vec::new(), Vec::new());
    for k in keys {
        let rb: Vec<G::Scalar> = (0..x).map(|_| G::Scalar::random(rng)).collect();
        let rs: Vec<G::Scalar> = (0..x).map(|_| G::Scalar::random(rng)).collect();
        bc.push((0..x).map(|j| pedersen_commit(params, &k.b[j], &rb[j])).collect());
        sc.push((0..x).map(|j| pedersen_commit(params, &k.s[j], &rs[j])).collect());
        openings.push(Opening { rb, rs });
    }
    let rd: Vec<G::Scalar> = (0..g.y).map(|_| G::Scalar::random(rng)).collect();
    let d: Vec<G> = (0..g.y)
        .map(|k| {
            let bit = if k == ly { G::Scalar::one() } else { G::Scalar::zero() };
            pedersen_commit(params, &bit, &rd[k])
        })
        .collect();
    let statement = WriteStatement { epoch, b: bc, s: sc, d };

    let rb_sum: Vec<G::Scalar> =
        (0..x).map(|j| openings.iter().fold(G::Scalar::zero(), |a, o| a + o.rb[j])).collect();
    let rs_sum: Vec<G::Scalar> =
        (0..x).map(|j| openings.iter().fold(G::Scalar::zero(), |a, o| a + o.rs[j])).collect();
    let rho = rs_sum.iter().fold(G::Scalar::zero(), |a, r| a + *r);

    let ctx = statement_digest(&statement, &g);
    let sm = sums(&statement, x);
    let v = &keys[0].v;

    let bits = (0..x)
        .map(|j| {
            let rels = bit_relations(params, sm.b[j]);
            prove_or(rng, &ctx, LABEL_BIT, j as u64, [&rels[0], &rels[1]], (j == lx) as usize, &[rb_sum[j]])
        })
        .collect();
    let sum_rel = sum_relation(params, &sm.b);
    let sum = prove_simple(rng, &ctx, LABEL_SUM, 0, &sum_rel, &[rb_sum.iter().fold(G::Scalar::zero(), |a, r| a + *r)]);
    let links = (0..x)
        .map(|j| {
            let rels = link_relations(params, sm.b[j], sm.s[j]);
            let (real, w) = if j == lx { (1, rb_sum[j]) } else { (0, rs_sum[j]) };
            prove_or(rng, &ctx, LABEL_LINK, j as u64, [&rels[0], &rels[1]], real, &[w])
        })
        .collect();
    let rows = (0..g.y)
        .map(|k| {
            let rels = row_relations(params, &g, v, statement.d[k], sm.s_total, k);
            if k == ly {
                prove_or(rng, &ctx, LABEL_ROW, k as u64, [&rels[0], &rels[1]], 0, &[rd[k]])
            } else {
                prove_or(rng, &ctx, LABEL_ROW, k as u64, [&rels[0], &rels[1]], 1, &[rd[k], gen.seed, rho])
            }
        })
        .collect();
    let row_sum_rel = sum_relation(params, &statement.d);
    let row_sum =
        prove_simple(rng, &ctx, LABEL_ROW_SUM, 0, &row_sum_rel, &[rd.iter().fold(G::Scalar::zero(), |a, r| a + *r)]);

    Ok((ZkCommon { statement, proof: WriteValidityProof { bits, sum, links, rows, row_sum } }, openings))
}

/// Checks one server's share against the common statement and proof.
pub fn verify_write_share<G: PrimeGroup>(
    params: &PedersenParams<G>,
    server_index: usize,
    key: &DpfSKey<G>,
    common: &ZkCommon<G>,
    opening: &Opening<G::Scalar>,
) -> std::result::Result<(), ZkReject> {
    let g = key.geometry;
    let st = &common.statement;
    let pf = &common.proof;
    let x = g.x;
    let shape_ok = server_index < st.b.len()
        && st.b.len() == st.s.len()
        && st.b.iter().chain(&st.s).all(|v| v.len() == x)
        && st.d.len() == g.y
        && opening.rb.len() == x
        && opening.rs.len() == x
        && pf.bits.len() == x
        && pf.links.len() == x
        && pf.rows.len() == g.y
        && params.prg_len() >= g.v_elems();
    if !shape_ok {
        return Err(ZkReject::Malformed);
    }

    for j in 0..x {
        if st.b[server_index][j] != pedersen_commit(params, &key.b[j], &opening.rb[j])
            || st.s[server_index][j] != pedersen_commit(params, &key.s[j], &opening.rs[j])
        {
            return Err(ZkReject::OpeningMismatch);
        }
    }

    let ctx = statement_digest(st, &g);
    let sm = sums(st, x);
    for j in 0..x {
        let rels = bit_relations(params, sm.b[j]);
        if !verify_or(&ctx, LABEL_BIT, j as u64, [&rels[0], &rels[1]], &pf.bits[j]) {
            return Err(ZkReject::BitProofFailed);
        }
    }
    if !verify_simple(&ctx, LABEL_SUM, 0, &sum_relation(params, &sm.b), &pf.sum) {
        return Err(ZkReject::SumProofFailed);
    }
    for j in 0..x {
        let rels = link_relations(params, sm.b[j], sm.s[j]);
        if !verify_or(&ctx, LABEL_LINK, j as u64, [&rels[0], &rels[1]], &pf.links[j]) {
            return Err(ZkReject::LinkProofFailed);
        }
    }
    for k in 0..g.y {
        let rels = row_relations(params, &g, &key.v, st.d[k], sm.s_total, k);
        if !verify_or(&ctx, LABEL_ROW, k as u64, [&rels[0], &rels[1]], &pf.rows[k]) {
            return Err(ZkReject::RowProofFailed);
        }
    }
    if !verify_simple(&ctx, LABEL_ROW_SUM, 0, &sum_relation(params, &st.d), &pf.row_sum) {
        return Err(ZkReject::RowProofFailed);
    }
    Ok(())
}

fn section(out: &mut Vec<u8>, body: Vec<u8>) {
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(&body);
}

impl<G: PrimeGroup> ZkCommon<G> {
    /// Sections: header, B-commitments, S-commitments, row commitments and
    /// sub-proofs, each u32-LE length-prefixed.
    pub fn to_bytes(&self) -> Vec<u8> {
        let st = &self.statement;
        let mut out = Vec::new();
        let mut head = st.epoch.to_le_bytes().to_vec();
        head.extend_from_slice(&(st.b.len() as u32).to_le_bytes());
        section(&mut out, head);
        for m in [&st.b, &st.s] {
            let mut body = Vec::new();
            for v in m {
                for e in v {
                    e.encode(&mut body);
                }
            }
            section(&mut out, body);
        }
        let mut body = Vec::new();
        for e in &st.d {
            e.encode(&mut body);
        }
        section(&mut out, body);
        let mut body = Vec::new();
        let pf = &self.proof;
        pf.bits.iter().for_each(|p| p.encode(&mut body));
        pf.sum.encode(&mut body);
        pf.links.iter().for_each(|p| p.encode(&mut body));
        pf.rows.iter().for_each(|p| p.encode(&mut body));
        pf.row_sum.encode(&mut body);
        section(&mut out, body);
        out
    }

    pub fn from_bytes(bytes: &[u8], g: &Geometry, servers: usize) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let mut next = |want: usize| -> Result<&[u8]> {
            let n = r.u32()?;
            if n != want {
                return Err(crate::error::decode_err(format!("proof section is {n} bytes, expected {want}")));
            }
            r.take(n)
        };
        let head = next(12)?;
        let epoch = u64::from_le_bytes(head[..8].try_into().expect("8 bytes"));
        if u32::from_le_bytes(head[8..].try_into().expect("4 bytes")) as usize != servers {
            return Err(crate::error::decode_err("proof is for a different server count"));
        }
        let enc = G::ENCODED_BYTES;
        let matrix = |body: &[u8]| -> Result<Vec<Vec<G>>> {
            let mut rr = Reader::new(body);
            (0..servers).map(|_| rr.elements(g.x)).collect()
        };
        let b = matrix(next(servers * g.x * enc)?)?;
        let s = matrix(next(servers * g.x * enc)?)?;
        let d = Reader::new(next(g.y * enc)?).elements(g.y)?;
        let sc = crate::group::SCALAR_BYTES;
        let or_len = |v: [usize; 2]| (2 + v[0] + v[1]) * sc;
        let proof_len = g.x * or_len([1, 1]) * 2 + 2 * 2 * sc + g.y * or_len([1, 3]);
        let body = next(proof_len)?;
        let mut pr = Reader::new(body);
        let bits = (0..g.x).map(|_| OrProof::decode(&mut pr, [1, 1])).collect::<Result<_>>()?;
        let sum = SimpleProof::decode(&mut pr, 1)?;
        let links = (0..g.x).map(|_| OrProof::decode(&mut pr, [1, 1])).collect::<Result<_>>()?;
        let rows = (0..g.y).map(|_| OrProof::decode(&mut pr, [1, 3])).collect::<Result<_>>()?;
        let row_sum = SimpleProof::decode(&mut pr, 1)?;
        pr.finish()?;
        r.finish()?;
        Ok(ZkCommon {
            statement: WriteStatement { epoch, b, s, d },
            proof: WriteValidityProof { bits, sum, links, rows, row_sum },
        })
    }
}

impl<S: GroupScalar> Opening<S> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 * self.rb.len());
        put_scalars(&mut out, &self.rb);
        put_scalars(&mut out, &self.rs);
        out
    }

    pub fn from_bytes(bytes: &[u8], x: usize) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let rb = r.scalars(x)?;
        let rs = r.scalars(x)?;
        r.finish()?;
        Ok(Opening { rb, rs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpf::{dpfs_gen, PointFunction};
    use crate::group::Schnorr64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    type S = <Schnorr64 as PrimeGroup>::Scalar;

    struct Fixture {
        params: PedersenParams<Schnorr64>,
        g: Geometry,
        gen: DpfSGen<Schnorr64>,
        common: ZkCommon<Schnorr64>,
        openings: Vec<Opening<S>>,
    }

    fn fixture(seed: u64, index: usize) -> Fixture {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let g = Geometry::new(12, 4, 3, 2).unwrap();
        let params = PedersenParams::derive(g.v_elems());
        let msg = vec![Schnorr64::embed(b"ab").unwrap(), Schnorr64::embed(b"cd").unwrap()];
        let gen = dpfs_gen(&mut rng, &params, &g, &PointFunction::new(index, msg.clone()), 3).unwrap();
        let (common, openings) = prove_write_valid(&mut rng, &params, 9, &gen, index, &msg).unwrap();
        Fixture { params, g, gen, common, openings }
    }

    fn verify_all(f: &Fixture) -> std::result::Result<(), ZkReject> {
        for i in 0..3 {
            verify_write_share(&f.params, i, &f.gen.keys[i], &f.common, &f.openings[i])?;
        }
        Ok(())
    }

    #[test]
    fn pedersen_homomorphism() {
        let params = PedersenParams::<Schnorr64>::derive(0);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert_eq!(pedersen_commit(&params, &S::zero(), &S::zero()), Schnorr64::identity());
        let (m0, r0, m1, r1) = (S::random(&mut rng), S::random(&mut rng), S::random(&mut rng), S::random(&mut rng));
        assert_eq!(
            pedersen_commit(&params, &m0, &r0) + pedersen_commit(&params, &m1, &r1),
            pedersen_commit(&params, &(m0 + m1), &(r0 + r1))
        );
    }

    #[test]
    fn honest_proofs_verify_at_every_index() {
        for index in 0..12 {
            assert_eq!(verify_all(&fixture(index as u64, index)), Ok(()));
        }
    }

    #[test]
    fn wrong_server_opening() {
        let f = fixture(20, 5);
        assert_eq!(
            verify_write_share(&f.params, 0, &f.gen.keys[0], &f.common, &f.openings[1]),
            Err(ZkReject::OpeningMismatch)
        );
    }

    #[test]
    fn corrupted_row_vector() {
        let mut f = fixture(21, 5);
        let (_, ly) = f.g.split(5);
        for k in 0..3 {
            let mut key = f.gen.keys[0].clone();
            key.v[k * 2 + 1] = key.v[k * 2 + 1] + f.params.p;
            let got = verify_write_share(&f.params, 0, &key, &f.common, &f.openings[0]);
            assert_eq!(got, Err(ZkReject::RowProofFailed), "row {k} (message row {ly})");
        }
        f.common.statement.epoch += 1;
        assert!(verify_all(&f).is_err());
    }

    #[test]
    fn serialization_round_trip() {
        let f = fixture(22, 11);
        let bytes = f.common.to_bytes();
        let back = ZkCommon::<Schnorr64>::from_bytes(&bytes, &f.g, 3).unwrap();
        assert_eq!(back, f.common);
        assert!(ZkCommon::<Schnorr64>::from_bytes(&bytes, &f.g, 2).is_err());
        assert!(ZkCommon::<Schnorr64>::from_bytes(&bytes[..bytes.len() - 1], &f.g, 3).is_err());
        let ob = f.openings[1].to_bytes();
        assert_eq!(Opening::<S>::from_bytes(&ob, f.g.x).unwrap(), f.openings[1]);
    }

    #[test]
    fn identity_message_refused() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let g = Geometry::new(4, 2, 2, 1).unwrap();
        let params = PedersenParams::<Schnorr64>::derive(2);
        let msg = vec![Schnorr64::identity()];
        let gen = dpfs_gen(&mut rng, &params, &g, &PointFunction::new(1, msg.clone()), 2).unwrap();
        assert!(prove_write_valid(&mut rng, &params, 0, &gen, 1, &msg).is_err());
    }
}
