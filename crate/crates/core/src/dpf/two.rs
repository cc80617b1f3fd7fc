//! Two-server DPF with `x` seeds and a shared masked row vector `v`.
//!
//! Keys are `(b, s, v)`. The servers' bit and seed vectors agree except at
//! column `l_x`, and `v` is built so that the difference of the two
//! expansions in that column is the message at `l_y` and zero elsewhere.

use rand::{CryptoRng, RngCore};

use super::{expect_header, pack_bits, unpack_bits, write_header, Geometry, PointFunction, Role, HEADER_BYTES};
use crate::error::{decode_err, Result};
use crate::payload::SeededPayload;
use crate::prg::{random_seed, Seed, SEED_BYTES};

#[derive(Debug, Clone, PartialEq)]
pub struct Dpf2Key<P: SeededPayload> {
    pub geometry: Geometry,
    pub b: Vec<bool>,
    pub s: Vec<Seed>,
    /// `y * row_elems` elements, row-major.
    pub v: Vec<P::Elem>,
}

pub fn dpf2_gen<P: SeededPayload, R: RngCore + CryptoRng>(
    rng: &mut R,
    g: &Geometry,
    pf: &PointFunction<P>,
) -> Result<(Dpf2Key<P>, Dpf2Key<P>)> {
    pf.check(g)?;
    let (lx, ly) = g.split(pf.index);

    let b_a: Vec<bool> = (0..g.x).map(|_| rng.next_u32() & 1 == 1).collect();
    let mut b_b = b_a.clone();
    b_b[lx] = !b_b[lx];

    let s_a: Vec<Seed> = (0..g.x).map(|_| random_seed(rng)).collect();
    let mut s_b = s_a.clone();
    while s_b[lx] == s_a[lx] {
        s_b[lx] = random_seed(rng);
    }

    // w = m e_ly - G(s_A*) + G(s_B*), v = (b_A* - b_B*) w
    let n = g.v_elems();
    let mut w = vec![P::zero(); n];
    w[ly * g.row_elems..(ly + 1) * g.row_elems].copy_from_slice(&pf.message);
    P::expand_add_into(&s_a[lx], &mut w, true);
    P::expand_add_into(&s_b[lx], &mut w, false);
    if !b_a[lx] {
        for e in w.iter_mut() {
            *e = P::neg(*e);
        }
    }

    Ok((
        Dpf2Key { geometry: *g, b: b_a, s: s_a, v: w.clone() },
        Dpf2Key { geometry: *g, b: b_b, s: s_b, v: w },
    ))
}

/// This key's share of row `index`, negated for server B.
pub fn dpf2_eval<P: SeededPayload>(k: &Dpf2Key<P>, role: Role, index: usize) -> Result<Vec<P::Elem>> {
    let g = &k.geometry;
    g.check_index(index)?;
    let (j, r) = g.split(index);
    let re = g.row_elems;
    let mut col = vec![P::zero(); (r + 1) * re];
    P::expand_add_into(&k.s[j], &mut col, false);
    let mut out = col.split_off(r * re);
    if k.b[j] {
        P::add_into(&mut out, &k.v[r * re..(r + 1) * re]);
    }
    if role.negate() {
        for e in out.iter_mut() {
            *e = P::neg(*e);
        }
    }
    Ok(out)
}

/// Adds this key's share of the whole table into `acc` (`rows * row_elems`
/// elements). One PRG expansion per column.
pub fn dpf2_eval_full_into<P: SeededPayload>(k: &Dpf2Key<P>, role: Role, acc: &mut [P::Elem]) {
    let g = &k.geometry;
    let re = g.row_elems;
    assert_eq!(acc.len(), g.table_elems(), "accumulator does not match geometry");
    let negate = role.negate();
    for j in 0..g.x {
        let n = g.rows_in_column(j);
        if n == 0 {
            break;
        }
        let start = j * g.y * re;
        let strip = &mut acc[start..start + n * re];
        P::expand_add_into(&k.s[j], strip, negate);
        if k.b[j] {
            if negate {
                P::sub_into(strip, &k.v[..n * re]);
            } else {
                P::add_into(strip, &k.v[..n * re]);
            }
        }
    }
}

pub fn dpf2_eval_full<P: SeededPayload>(k: &Dpf2Key<P>, role: Role) -> Vec<P::Elem> {
    let mut acc = vec![P::zero(); k.geometry.table_elems()];
    dpf2_eval_full_into(k, role, &mut acc);
    acc
}

impl<P: SeededPayload> Dpf2Key<P> {
    pub fn serialized_len(g: &Geometry) -> usize {
        HEADER_BYTES + g.x.div_ceil(8) + g.x * SEED_BYTES + g.v_elems() * P::ELEM_BYTES
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let g = &self.geometry;
        let mut out = Vec::with_capacity(Self::serialized_len(g));
        write_header(&mut out, P::TWO_SERVER_VARIANT, g.x, g.y, g.row_elems * P::ELEM_BYTES);
        pack_bits(&self.b, &mut out);
        for s in &self.s {
            out.extend_from_slice(s);
        }
        P::encode_slice(&self.v, &mut out);
        out
    }

    /// Parses a key and checks it against the table geometry.
    pub fn from_bytes(bytes: &[u8], g: &Geometry) -> Result<Self> {
        expect_header(bytes, P::TWO_SERVER_VARIANT, g.x, g.y, g.row_elems * P::ELEM_BYTES)?;
        if bytes.len() != Self::serialized_len(g) {
            return Err(decode_err(format!(
                "key is {} bytes, geometry needs {}",
                bytes.len(),
                Self::serialized_len(g)
            )));
        }
        let mut at = HEADER_BYTES;
        let nb = g.x.div_ceil(8);
        let b = unpack_bits(&bytes[at..at + nb], g.x)?;
        at += nb;
        let s = bytes[at..at + g.x * SEED_BYTES]
            .chunks_exact(SEED_BYTES)
            .map(|c| c.try_into().expect("seed width"))
            .collect();
        at += g.x * SEED_BYTES;
        let v = P::decode_slice(&bytes[at..])?;
        Ok(Dpf2Key { geometry: *g, b, s, v })
    }
}
