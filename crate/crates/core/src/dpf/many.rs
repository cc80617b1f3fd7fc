//! Many-server DPF over a prime-order group: any `s - 1` keys reveal
//! nothing. Bit and seed vectors are additive sharings over `Z_q`; the seed
//! sharing works because the PRG is seed-homomorphic.

use rand::{CryptoRng, RngCore};

use super::{expect_header, Geometry, KeyVariant, PointFunction, HEADER_BYTES};
use crate::error::{decode_err, invalid, Result};
use crate::group::{GroupKind, GroupScalar, PedersenParams, PrimeGroup, SCALAR_BYTES};
use crate::payload::{GroupPayload, Payload};

#[derive(Debug, Clone, PartialEq)]
pub struct DpfSKey<G: PrimeGroup> {
    pub geometry: Geometry,
    pub b: Vec<G::Scalar>,
    pub s: Vec<G::Scalar>,
    /// `y * chunks` group elements, row-major.
    pub v: Vec<G>,
}

/// Output of key generation; `seed` and `b_sum` stay with the client for
/// proof generation.
pub struct DpfSGen<G: PrimeGroup> {
    pub keys: Vec<DpfSKey<G>>,
    /// The column seed `s*`.
    pub seed: G::Scalar,
}

pub fn variant_for(kind: GroupKind) -> KeyVariant {
    match kind {
        GroupKind::P256 => KeyVariant::ManyServerP256,
        GroupKind::Schnorr64 => KeyVariant::ManyServerSchnorr64,
    }
}

/// `params` must carry at least `y * row_elems` PRG generators.
pub fn dpfs_gen<G: PrimeGroup, R: RngCore + CryptoRng>(
    rng: &mut R,
    params: &PedersenParams<G>,
    g: &Geometry,
    pf: &PointFunction<GroupPayload<G>>,
    servers: usize,
) -> Result<DpfSGen<G>> {
    if servers < 2 {
        return Err(invalid("need at least two servers"));
    }
    pf.check(g)?;
    if params.prg_len() < g.v_elems() {
        return Err(invalid("not enough PRG generators for geometry"));
    }
    let (lx, ly) = g.split(pf.index);
    let mut seed = G::Scalar::random(rng);
    while seed.is_zero() {
        seed = G::Scalar::random(rng);
    }

    let mut b_last: Vec<G::Scalar> = vec![G::Scalar::zero(); g.x];
    let mut s_last: Vec<G::Scalar> = vec![G::Scalar::zero(); g.x];
    b_last[lx] = G::Scalar::one();
    s_last[lx] = seed;

    let mut v: Vec<G> = params.prg[..g.v_elems()].iter().map(|p| -p.mul(&seed)).collect();
    for (c, m) in pf.message.iter().enumerate() {
        let at = ly * g.row_elems + c;
        v[at] = v[at] + *m;
    }

    let mut keys = Vec::with_capacity(servers);
    for _ in 0..servers - 1 {
        let b: Vec<G::Scalar> = (0..g.x).map(|_| G::Scalar::random(rng)).collect();
        let s: Vec<G::Scalar> = (0..g.x).map(|_| G::Scalar::random(rng)).collect();
        for j in 0..g.x {
            b_last[j] = b_last[j] - b[j];
            s_last[j] = s_last[j] - s[j];
        }
        keys.push(DpfSKey { geometry: *g, b, s, v: v.clone() });
    }
    keys.push(DpfSKey { geometry: *g, b: b_last, s: s_last, v });
    Ok(DpfSGen { keys, seed })
}

/// This key's share of row `index`: `G(s[j])` restricted to the row, plus
/// `b[j] v[r]`.
pub fn dpfs_eval<G: PrimeGroup>(params: &PedersenParams<G>, k: &DpfSKey<G>, index: usize) -> Result<Vec<G>> {
    let g = &k.geometry;
    g.check_index(index)?;
    let (j, r) = g.split(index);
    Ok((0..g.row_elems)
        .map(|c| {
            let at = r * g.row_elems + c;
            params.prg[at].mul(&k.s[j]) + k.v[at].mul(&k.b[j])
        })
        .collect())
}

pub fn dpfs_eval_full_into<G: PrimeGroup>(params: &PedersenParams<G>, k: &DpfSKey<G>, acc: &mut [G]) {
    let g = &k.geometry;
    let re = g.row_elems;
    assert_eq!(acc.len(), g.table_elems(), "accumulator does not match geometry");
    assert!(params.prg_len() >= g.v_elems(), "not enough PRG generators for geometry");
    for j in 0..g.x {
        let n = g.rows_in_column(j);
        if n == 0 {
            break;
        }
        let start = j * g.y * re;
        for (i, cell) in acc[start..start + n * re].iter_mut().enumerate() {
            *cell = *cell + params.prg[i].mul(&k.s[j]) + k.v[i].mul(&k.b[j]);
        }
    }
}

pub fn dpfs_eval_full<G: PrimeGroup>(params: &PedersenParams<G>, k: &DpfSKey<G>) -> Vec<G> {
    let mut acc = vec![G::identity(); k.geometry.table_elems()];
    dpfs_eval_full_into(params, k, &mut acc);
    acc
}

impl<G: PrimeGroup> DpfSKey<G> {
    pub fn serialized_len(g: &Geometry) -> usize {
        HEADER_BYTES + 2 * g.x * SCALAR_BYTES + g.v_elems() * G::ENCODED_BYTES
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let g = &self.geometry;
        let mut out = Vec::with_capacity(Self::serialized_len(g));
        super::write_header(&mut out, variant_for(G::KIND), g.x, g.y, g.row_elems * G::ENCODED_BYTES);
        for b in &self.b {
            out.extend_from_slice(&b.to_bytes());
        }
        for s in &self.s {
            out.extend_from_slice(&s.to_bytes());
        }
        GroupPayload::<G>::encode_slice(&self.v, &mut out);
        out
    }

    pub fn from_bytes(bytes: &[u8], g: &Geometry) -> Result<Self> {
        expect_header(bytes, variant_for(G::KIND), g.x, g.y, g.row_elems * G::ENCODED_BYTES)?;
        if bytes.len() != Self::serialized_len(g) {
            return Err(decode_err(format!(
                "key is {} bytes, geometry needs {}",
                bytes.len(),
                Self::serialized_len(g)
            )));
        }
        let scalars = |from: usize| -> Result<Vec<G::Scalar>> {
            bytes[from..from + g.x * SCALAR_BYTES]
                .chunks_exact(SCALAR_BYTES)
                .map(G::Scalar::from_bytes)
                .collect()
        };
        let b = scalars(HEADER_BYTES)?;
        let s = scalars(HEADER_BYTES + g.x * SCALAR_BYTES)?;
        let v = GroupPayload::<G>::decode_slice(&bytes[HEADER_BYTES + 2 * g.x * SCALAR_BYTES..])?;
        Ok(DpfSKey { geometry: *g, b, s, v })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{P256Point, Schnorr64};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn combined<G: PrimeGroup>(params: &PedersenParams<G>, keys: &[DpfSKey<G>]) -> Vec<G> {
        let mut acc = vec![G::identity(); keys[0].geometry.table_elems()];
        for k in keys {
            dpfs_eval_full_into(params, k, &mut acc);
        }
        acc
    }

    #[test]
    fn three_servers_share_point() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let g = Geometry::new(16, 4, 4, 1).unwrap();
        let params = PedersenParams::<Schnorr64>::derive(g.v_elems());
        for l in 0..16 {
            let m = Schnorr64::embed(&[l as u8, 1]).unwrap();
            let pf = PointFunction::new(l, vec![m]);
            let out = dpfs_gen(&mut rng, &params, &g, &pf, 3).unwrap();
            assert_eq!(combined(&params, &out.keys), pf.table(&g));
            let mut bsum = [<Schnorr64 as PrimeGroup>::Scalar::zero(); 4];
            for k in &out.keys {
                for j in 0..4 {
                    bsum[j] = bsum[j] + k.b[j];
                }
            }
            for (j, b) in bsum.iter().enumerate() {
                let want = if j == l / 4 { GroupScalar::one() } else { GroupScalar::zero() };
                assert_eq!(*b, want);
            }
        }
    }

    #[test]
    fn multi_chunk_rows_with_p256() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let g = Geometry::new(5, 3, 2, 2).unwrap();
        let params = PedersenParams::<P256Point>::derive(g.v_elems());
        let msg = vec![P256Point::embed(b"hello").unwrap(), P256Point::embed(b"world").unwrap()];
        let pf = PointFunction::new(4, msg);
        let out = dpfs_gen(&mut rng, &params, &g, &pf, 2).unwrap();
        assert_eq!(combined(&params, &out.keys), pf.table(&g));
        for k in &out.keys {
            let full = dpfs_eval_full(&params, k);
            for l in 0..5 {
                assert_eq!(dpfs_eval(&params, k, l).unwrap(), full[l * 2..l * 2 + 2]);
            }
            assert_eq!(&DpfSKey::from_bytes(&k.to_bytes(), &g).unwrap(), k);
        }
    }

    #[test]
    fn parse_rejects_wrong_group() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let g = Geometry::new(4, 2, 2, 1).unwrap();
        let params = PedersenParams::<Schnorr64>::derive(2);
        let pf = PointFunction::new(1, vec![Schnorr64::embed(b"x").unwrap()]);
        let out = dpfs_gen(&mut rng, &params, &g, &pf, 2).unwrap();
        let bytes = out.keys[0].to_bytes();
        assert!(DpfSKey::<P256Point>::from_bytes(&bytes, &g).is_err());
        assert!(dpfs_gen(&mut rng, &params, &g, &pf, 1).is_err());
    }
}
