//! Non-interactive sigma protocols for linear relations over a prime-order
//! group, with two-branch OR composition and Fiat–Shamir challenges.
//!
//! A relation is a set of equations `Y_e = sum_t w_{v(t)} B_t` over shared
//! witness variables. Proofs are stored compactly as `(c, z)`; the verifier
//! recomputes announcements from them.

use rand::{CryptoRng, RngCore};

use crate::error::{decode_err, Result};
use crate::group::{GroupScalar, PrimeGroup, SCALAR_BYTES};
use crate::hash::sha256;

#[derive(Debug, Clone)]
pub struct Equation<G: PrimeGroup> {
    pub lhs: G,
    pub terms: Vec<(usize, G)>,
}

#[derive(Debug, Clone)]
pub struct Relation<G: PrimeGroup> {
    pub vars: usize,
    pub eqs: Vec<Equation<G>>,
}

impl<G: PrimeGroup> Relation<G> {
    /// `lhs = w Q`: knowledge of an opening of a commitment to zero.
    pub fn dlog(lhs: G, base: G) -> Self {
        Relation { vars: 1, eqs: vec![Equation { lhs, terms: vec![(0, base)] }] }
    }

    fn evaluate(&self, w: &[G::Scalar]) -> Vec<G> {
        self.eqs
            .iter()
            .map(|e| e.terms.iter().fold(G::identity(), |acc, (v, b)| acc + b.mul(&w[*v])))
            .collect()
    }

    /// Announcements implied by responses `z` under challenge `c`.
    fn announcements(&self, z: &[G::Scalar], c: &G::Scalar) -> Vec<G> {
        self.evaluate(z).into_iter().zip(&self.eqs).map(|(s, e)| s - e.lhs.mul(c)).collect()
    }

    pub fn holds(&self, w: &[G::Scalar]) -> bool {
        self.evaluate(w).iter().zip(&self.eqs).all(|(s, e)| *s == e.lhs)
    }

    fn absorb(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.vars as u32).to_le_bytes());
        out.extend_from_slice(&(self.eqs.len() as u32).to_le_bytes());
        for e in &self.eqs {
            e.lhs.encode(out);
            out.extend_from_slice(&(e.terms.len() as u32).to_le_bytes());
            for (v, b) in &e.terms {
                out.extend_from_slice(&(*v as u32).to_le_bytes());
                b.encode(out);
            }
        }
    }
}

/// Domain-separated challenge over the statement and announcements.
fn challenge<G: PrimeGroup>(
    ctx: &[u8; 32],
    label: &[u8],
    index: u64,
    rels: &[&Relation<G>],
    anns: &[&[G]],
) -> G::Scalar {
    let mut buf = Vec::new();
    buf.extend_from_slice(&(label.len() as u32).to_le_bytes());
    buf.extend_from_slice(label);
    buf.extend_from_slice(&index.to_le_bytes());
    for r in rels {
        r.absorb(&mut buf);
    }
    for a in anns {
        for e in a.iter() {
            e.encode(&mut buf);
        }
    }
    G::Scalar::from_hash(&sha256(&[b"riposte/zk/challenge", ctx, &buf]))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleProof<S> {
    pub c: S,
    pub z: Vec<S>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrProof<S> {
    pub c: [S; 2],
    pub z: [Vec<S>; 2],
}

fn random_vec<S: GroupScalar, R: RngCore + CryptoRng>(rng: &mut R, n: usize) -> Vec<S> {
    (0..n).map(|_| S::random(rng)).collect()
}

pub fn prove_simple<G: PrimeGroup, R: RngCore + CryptoRng>(
    rng: &mut R,
    ctx: &[u8; 32],
    label: &[u8],
    index: u64,
    rel: &Relation<G>,
    w: &[G::Scalar],
) -> SimpleProof<G::Scalar> {
    debug_assert!(rel.holds(w), "prover witness does not satisfy {label:?}");
    let k: Vec<G::Scalar> = random_vec(rng, rel.vars);
    let a = rel.evaluate(&k);
    let c = challenge(ctx, label, index, &[rel], &[&a]);
    let z = k.iter().zip(w).map(|(k, w)| *k + c * *w).collect();
    SimpleProof { c, z }
}

pub fn verify_simple<G: PrimeGroup>(
    ctx: &[u8; 32],
    label: &[u8],
    index: u64,
    rel: &Relation<G>,
    p: &SimpleProof<G::Scalar>,
) -> bool {
    if p.z.len() != rel.vars {
        return false;
    }
    let a = rel.announcements(&p.z, &p.c);
    challenge(ctx, label, index, &[rel], &[&a]) == p.c
}

/// Proves that branch `real` holds with witness `w`, simulating the other.
#[allow(clippy::too_many_arguments)]
pub fn prove_or<G: PrimeGroup, R: RngCore + CryptoRng>(
    rng: &mut R,
    ctx: &[u8; 32],
    label: &[u8],
    index: u64,
    rels: [&Relation<G>; 2],
    real: usize,
    w: &[G::Scalar],
) -> OrProof<G::Scalar> {
    debug_assert!(rels[real].holds(w), "prover witness does not satisfy {label:?}");
    let fake = 1 - real;
    let c_fake = G::Scalar::random(rng);
    let z_fake: Vec<G::Scalar> = random_vec(rng, rels[fake].vars);
    let a_fake = rels[fake].announcements(&z_fake, &c_fake);
    let k: Vec<G::Scalar> = random_vec(rng, rels[real].vars);
    let a_real = rels[real].evaluate(&k);
    let anns: [&[G]; 2] = if real == 0 { [&a_real, &a_fake] } else { [&a_fake, &a_real] };
    let c = challenge(ctx, label, index, &rels, &anns);
    let c_real = c - c_fake;
    let z_real: Vec<G::Scalar> = k.iter().zip(w).map(|(k, w)| *k + c_real * *w).collect();
    if real == 0 {
        OrProof { c: [c_real, c_fake], z: [z_real, z_fake] }
    } else {
        OrProof { c: [c_fake, c_real], z: [z_fake, z_real] }
    }
}

pub fn verify_or<G: PrimeGroup>(
    ctx: &[u8; 32],
    label: &[u8],
    index: u64,
    rels: [&Relation<G>; 2],
    p: &OrProof<G::Scalar>,
) -> bool {
    if p.z[0].len() != rels[0].vars || p.z[1].len() != rels[1].vars {
        return false;
    }
    let a0 = rels[0].announcements(&p.z[0], &p.c[0]);
    let a1 = rels[1].announcements(&p.z[1], &p.c[1]);
    challenge(ctx, label, index, &rels, &[&a0, &a1]) == p.c[0] + p.c[1]
}

pub(crate) fn put_scalars<S: GroupScalar>(out: &mut Vec<u8>, s: &[S]) {
    for x in s {
        out.extend_from_slice(&x.to_bytes());
    }
}

/// Cursor over a byte slice with strict length checks.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, at: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.at < n {
            return Err(decode_err("truncated proof"));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    pub fn scalar<S: GroupScalar>(&mut self) -> Result<S> {
        S::from_bytes(self.take(SCALAR_BYTES)?)
    }

    pub fn scalars<S: GroupScalar>(&mut self, n: usize) -> Result<Vec<S>> {
        (0..n).map(|_| self.scalar()).collect()
    }

    pub fn element<G: PrimeGroup>(&mut self) -> Result<G> {
        G::decode(self.take(G::ENCODED_BYTES)?)
    }

    pub fn elements<G: PrimeGroup>(&mut self, n: usize) -> Result<Vec<G>> {
        (0..n).map(|_| self.element()).collect()
    }

    pub fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    pub fn finish(&self) -> Result<()> {
        if self.at != self.buf.len() {
            return Err(decode_err("trailing bytes"));
        }
        Ok(())
    }
}

impl<S: GroupScalar> SimpleProof<S> {
    pub fn encode(&self, out: &mut Vec<u8>) {
        put_scalars(out, &[self.c]);
        put_scalars(out, &self.z);
    }

    pub(crate) fn decode(r: &mut Reader<'_>, vars: usize) -> Result<Self> {
        Ok(SimpleProof { c: r.scalar()?, z: r.scalars(vars)? })
    }
}

impl<S: GroupScalar> OrProof<S> {
    pub fn encode(&self, out: &mut Vec<u8>) {
        put_scalars(out, &self.c);
        put_scalars(out, &self.z[0]);
        put_scalars(out, &self.z[1]);
    }

    pub(crate) fn decode(r: &mut Reader<'_>, vars: [usize; 2]) -> Result<Self> {
        let c = [r.scalar()?, r.scalar()?];
        let z0 = r.scalars(vars[0])?;
        let z1 = r.scalars(vars[1])?;
        Ok(OrProof { c, z: [z0, z1] })
    }
}
