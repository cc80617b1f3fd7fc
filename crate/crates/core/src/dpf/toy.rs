//! Full-length additive sharing of the point function. Keys are as long as
//! the table; useful as a baseline and as an oracle.

use rand::{CryptoRng, RngCore};

use super::{expect_header, read_header, write_header, Geometry, PointFunction, HEADER_BYTES};
use crate::error::{decode_err, invalid, Result};
use crate::payload::{Payload, SeededPayload};

#[derive(Debug, Clone, PartialEq)]
pub struct ToyKey<P: Payload> {
    pub rows: usize,
    pub row_elems: usize,
    pub cells: Vec<P::Elem>,
}

/// Splits `pf` into `n` keys: `n - 1` uniform, the last fixing the sum.
pub fn toy_gen<P: Payload, R: RngCore + CryptoRng>(
    rng: &mut R,
    g: &Geometry,
    pf: &PointFunction<P>,
    n: usize,
) -> Result<Vec<ToyKey<P>>> {
    if n < 2 {
        return Err(invalid("toy sharing needs at least two servers"));
    }
    pf.check(g)?;
    let mut last = pf.table(g);
    let mut keys = Vec::with_capacity(n);
    for _ in 0..n - 1 {
        let cells: Vec<P::Elem> = (0..g.table_elems()).map(|_| P::random(rng)).collect();
        P::sub_into(&mut last, &cells);
        keys.push(ToyKey { rows: g.rows, row_elems: g.row_elems, cells });
    }
    keys.push(ToyKey { rows: g.rows, row_elems: g.row_elems, cells: last });
    Ok(keys)
}

/// This key's share of row `index`.
pub fn toy_eval<P: Payload>(k: &ToyKey<P>, index: usize) -> Result<Vec<P::Elem>> {
    if index >= k.rows {
        return Err(invalid(format!("index {index} outside table of {} rows", k.rows)));
    }
    Ok(k.cells[index * k.row_elems..(index + 1) * k.row_elems].to_vec())
}

impl<P: SeededPayload> ToyKey<P> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_BYTES + self.cells.len() * P::ELEM_BYTES);
        write_header(&mut out, P::TOY_VARIANT, self.rows, 1, self.row_elems * P::ELEM_BYTES);
        P::encode_slice(&self.cells, &mut out);
        out
    }

    pub fn from_bytes(bytes: &[u8], g: &Geometry) -> Result<Self> {
        expect_header(bytes, P::TOY_VARIANT, g.rows, 1, g.row_elems * P::ELEM_BYTES)?;
        let h = read_header(bytes)?;
        let body = &bytes[HEADER_BYTES..];
        if body.len() != h.x * h.row_bytes {
            return Err(decode_err("toy key body length mismatch"));
        }
        Ok(ToyKey { rows: g.rows, row_elems: g.row_elems, cells: P::decode_slice(body)? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Fp;
    use crate::payload::{FpPayload, Xor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn two_keys_sum_to_point() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let g = Geometry::new(8, 8, 1, 2).unwrap();
        let pf = PointFunction::<FpPayload>::new(5, vec![Fp::new(7), Fp::new(9)]);
        let keys = toy_gen(&mut rng, &g, &pf, 2).unwrap();
        let mut total = Fp::ZERO;
        for l in 0..8 {
            let a = toy_eval(&keys[0], l).unwrap();
            let b = toy_eval(&keys[1], l).unwrap();
            let s: Vec<Fp> = a.iter().zip(&b).map(|(x, y)| *x + *y).collect();
            if l == 5 {
                assert_eq!(s, pf.message);
            } else {
                assert!(s.iter().all(|e| e.is_zero()));
            }
            total += s[0];
        }
        assert_eq!(total, Fp::new(7));
    }

    #[test]
    fn rejects_bad_index_and_server_count() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let g = Geometry::new(4, 4, 1, 1).unwrap();
        assert!(toy_gen(&mut rng, &g, &PointFunction::<Xor>::new(4, vec![1]), 2).is_err());
        assert!(toy_gen(&mut rng, &g, &PointFunction::<Xor>::new(1, vec![1]), 1).is_err());
    }

    #[test]
    fn serialization_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let g = Geometry::new(6, 6, 1, 3).unwrap();
        let keys = toy_gen(&mut rng, &g, &PointFunction::<Xor>::new(2, vec![1, 2, 3]), 3).unwrap();
        for k in &keys {
            assert_eq!(&ToyKey::<Xor>::from_bytes(&k.to_bytes(), &g).unwrap(), k);
        }
    }
}
