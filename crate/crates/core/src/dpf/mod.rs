//! Distributed point functions: the trivial full-length sharing, the
//! two-server `O(sqrt L)` construction and the many-server construction
//! over a seed-homomorphic PRG.

use serde::{Deserialize, Serialize};

use crate::error::{decode_err, invalid, Result};
use crate::payload::Payload;

mod many;
mod toy;
mod two;

pub use many::{dpfs_eval, dpfs_eval_full, dpfs_eval_full_into, dpfs_gen, variant_for, DpfSGen, DpfSKey};
pub use toy::{toy_eval, toy_gen, ToyKey};
pub use two::{dpf2_eval, dpf2_eval_full, dpf2_eval_full_into, dpf2_gen, Dpf2Key};

/// Serialized key header length: variant, x, y, row_bytes.
pub const HEADER_BYTES: usize = 13;

/// Table shape. Row `l` lives at column `l / y`, position `l % y`; matrix
/// cells at or beyond `rows` are padding and never revealed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Geometry {
    pub rows: usize,
    pub x: usize,
    pub y: usize,
    /// Payload elements per row.
    pub row_elems: usize,
}

impl Geometry {
    pub fn new(rows: usize, x: usize, y: usize, row_elems: usize) -> Result<Self> {
        if rows == 0 || x == 0 || y == 0 || row_elems == 0 {
            return Err(invalid("geometry dimensions must be positive"));
        }
        if x.checked_mul(y).is_none_or(|c| c < rows) {
            return Err(invalid(format!("{x} x {y} matrix cannot hold {rows} rows")));
        }
        if x > u32::MAX as usize || y > u32::MAX as usize {
            return Err(invalid("geometry dimension exceeds u32"));
        }
        Ok(Geometry { rows, x, y, row_elems })
    }

    /// Size-optimal shape for `rows` rows, with `alpha` bits per seed and
    /// `beta` bits per row.
    pub fn optimized(rows: usize, row_elems: usize, alpha: u64, beta: u64) -> Self {
        let (x, y) = optimize_geometry(rows, alpha, beta);
        Geometry { rows, x, y, row_elems }
    }

    pub fn split(&self, index: usize) -> (usize, usize) {
        (index / self.y, index % self.y)
    }

    pub fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.rows {
            return Err(invalid(format!("index {index} outside table of {} rows", self.rows)));
        }
        Ok(())
    }

    /// Number of table rows stored in column `j` (the last may be short).
    pub fn rows_in_column(&self, j: usize) -> usize {
        self.rows.saturating_sub(j * self.y).min(self.y)
    }

    pub fn table_elems(&self) -> usize {
        self.rows * self.row_elems
    }

    pub fn v_elems(&self) -> usize {
        self.y * self.row_elems
    }
}

fn key_bits(rows: u64, alpha: u64, beta: u64, x: u64) -> u128 {
    (1 + alpha as u128) * x as u128 + beta as u128 * rows.div_ceil(x) as u128
}

/// Integer `(x, y)` minimizing `(1 + alpha) x + beta y` with `x y >= rows`.
///
/// Starts from the rounded real optimum `x = sqrt(beta / (1 + alpha)) sqrt(L)`
/// and its +-2 neighbourhood, then scans the window of `x` whose unrounded
/// cost is within `beta` of the best found, which is where the ceiling can
/// still hide a better integer point. Ties go to the smaller `x`.
pub fn optimize_geometry(rows: usize, alpha: u64, beta: u64) -> (usize, usize) {
    let l = rows.max(1) as u64;
    let a = (1 + alpha) as f64;
    let b = beta.max(1) as f64;
    let x_real = (b / a).sqrt() * (l as f64).sqrt();
    let x0 = (x_real.ceil() as u64).clamp(1, l);

    let mut best_x = x0;
    let mut best = key_bits(l, alpha, beta, x0);
    let consider = |x: u64, best_x: &mut u64, best: &mut u128| {
        if x == 0 || x > l {
            return;
        }
        let c = key_bits(l, alpha, beta, x);
        if c < *best || (c == *best && x < *best_x) {
            *best = c;
            *best_x = x;
        }
    };
    for x in x0.saturating_sub(2)..=x0 + 2 {
        consider(x, &mut best_x, &mut best);
    }

    // a x + b L / x <= best + b  <=>  a x^2 - (best + b) x + b L <= 0
    let budget = best as f64 + b;
    let disc = (budget * budget - 4.0 * a * b * l as f64).max(0.0).sqrt();
    let lo = (((budget - disc) / (2.0 * a)).floor() as u64).saturating_sub(1).max(1);
    let hi = (((budget + disc) / (2.0 * a)).ceil() as u64 + 1).min(l);
    for x in lo..=hi {
        consider(x, &mut best_x, &mut best);
    }
    (best_x as usize, l.div_ceil(best_x) as usize)
}

/// Which of the two servers a two-server key belongs to. Server B's
/// evaluation is negated so shares sum (rather than XOR) to the point
/// function in odd characteristic; under XOR the sign is invisible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    A,
    B,
}

impl Role {
    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Role::A),
            1 => Ok(Role::B),
            _ => Err(invalid(format!("two-server role index {i}"))),
        }
    }

    pub fn negate(self) -> bool {
        self == Role::B
    }
}

/// Key variant byte in the serialized header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum KeyVariant {
    ToyXor = 0x01,
    TwoServerXor = 0x02,
    TwoServerFp = 0x03,
    ManyServerP256 = 0x04,
    ManyServerSchnorr64 = 0x05,
    ToyFp = 0x06,
}

impl KeyVariant {
    pub fn from_byte(b: u8) -> Result<Self> {
        Ok(match b {
            0x01 => KeyVariant::ToyXor,
            0x02 => KeyVariant::TwoServerXor,
            0x03 => KeyVariant::TwoServerFp,
            0x04 => KeyVariant::ManyServerP256,
            0x05 => KeyVariant::ManyServerSchnorr64,
            0x06 => KeyVariant::ToyFp,
            _ => return Err(decode_err(format!("unknown key variant 0x{b:02x}"))),
        })
    }
}

/// A point function `P_{l,m}` with `m` given as one row of payload elements.
#[derive(Debug, Clone, PartialEq)]
pub struct PointFunction<P: Payload> {
    pub index: usize,
    pub message: Vec<P::Elem>,
}

impl<P: Payload> PointFunction<P> {
    pub fn new(index: usize, message: Vec<P::Elem>) -> Self {
        PointFunction { index, message }
    }

    pub(crate) fn check(&self, g: &Geometry) -> Result<()> {
        g.check_index(self.index)?;
        if self.message.len() != g.row_elems {
            return Err(invalid(format!(
                "message has {} elements, rows hold {}",
                self.message.len(),
                g.row_elems
            )));
        }
        Ok(())
    }

    /// Full-table value of the point function, for oracles and tests.
    pub fn table(&self, g: &Geometry) -> Vec<P::Elem> {
        let mut t = vec![P::zero(); g.table_elems()];
        let at = self.index * g.row_elems;
        t[at..at + g.row_elems].copy_from_slice(&self.message);
        t
    }
}

pub(crate) fn write_header(out: &mut Vec<u8>, variant: KeyVariant, x: usize, y: usize, row_bytes: usize) {
    out.push(variant as u8);
    out.extend_from_slice(&(x as u32).to_le_bytes());
    out.extend_from_slice(&(y as u32).to_le_bytes());
    out.extend_from_slice(&(row_bytes as u32).to_le_bytes());
}

/// Parsed header fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyHeader {
    pub variant: KeyVariant,
    pub x: usize,
    pub y: usize,
    pub row_bytes: usize,
}

pub fn read_header(bytes: &[u8]) -> Result<KeyHeader> {
    if bytes.len() < HEADER_BYTES {
        return Err(decode_err("key shorter than header"));
    }
    let u = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    Ok(KeyHeader {
        variant: KeyVariant::from_byte(bytes[0])?,
        x: u(1),
        y: u(5),
        row_bytes: u(9),
    })
}

pub(crate) fn expect_header(bytes: &[u8], variant: KeyVariant, x: usize, y: usize, row_bytes: usize) -> Result<()> {
    let h = read_header(bytes)?;
    if h.variant != variant {
        return Err(decode_err(format!("expected {variant:?} key, got {:?}", h.variant)));
    }
    if h.x != x || h.y != y || h.row_bytes != row_bytes {
        return Err(decode_err(format!(
            "key shape {}x{}/{} does not match table {x}x{y}/{row_bytes}",
            h.x, h.y, h.row_bytes
        )));
    }
    Ok(())
}

/// LSB-first bitset; padding bits are zero.
pub(crate) fn pack_bits(bits: &[bool], out: &mut Vec<u8>) {
    let start = out.len();
    out.resize(start + bits.len().div_ceil(8), 0);
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[start + i / 8] |= 1 << (i % 8);
        }
    }
}

pub(crate) fn unpack_bits(bytes: &[u8], n: usize) -> Result<Vec<bool>> {
    if bytes.len() != n.div_ceil(8) {
        return Err(decode_err("bitset length mismatch"));
    }
    let bits: Vec<bool> = (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect();
    if !n.is_multiple_of(8) && bytes[n / 8] >> (n % 8) != 0 {
        return Err(decode_err("nonzero bitset padding"));
    }
    Ok(bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(rows: usize, alpha: u64, beta: u64) -> (usize, usize) {
        let mut best = (u128::MAX, 0usize);
        for x in 1..=rows {
            let c = key_bits(rows as u64, alpha, beta, x as u64);
            if c < best.0 {
                best = (c, x);
            }
        }
        (best.1, rows.div_ceil(best.1))
    }

    #[test]
    fn geometry_single_row() {
        assert_eq!(optimize_geometry(1, 128, 1280), (1, 1));
    }

    #[test]
    fn geometry_matches_exhaustive_search() {
        assert_eq!(optimize_geometry(1000, 128, 1280), brute_force(1000, 128, 1280));
    }

    #[test]
    fn megarow_key_size() {
        let (x, y) = optimize_geometry(1 << 20, 128, 8192);
        let bits = 129 * x as u64 + 8192 * y as u64;
        let bytes = bits as f64 / 8.0;
        assert!((bytes - 263_000.0).abs() / 263_000.0 < 0.01, "{bytes}");
    }

    #[test]
    fn geometry_validation() {
        assert!(Geometry::new(10, 3, 3, 1).is_err());
        assert!(Geometry::new(9, 3, 3, 1).is_ok());
        assert!(Geometry::new(0, 1, 1, 1).is_err());
        let g = Geometry::new(10, 4, 3, 1).unwrap();
        assert_eq!(g.rows_in_column(3), 1);
        assert_eq!(g.rows_in_column(0), 3);
        assert_eq!(g.split(7), (2, 1));
    }

    #[test]
    fn bitset_rejects_padding() {
        assert!(unpack_bits(&[0b1000_0000], 7).is_err());
        assert_eq!(unpack_bits(&[0b0100_0001], 7).unwrap(), vec![true, false, false, false, false, false, true]);
        let mut out = Vec::new();
        pack_bits(&[true, false, true, true, false, false, false, false, true], &mut out);
        assert_eq!(out, vec![0b0000_1101, 0b1]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn optimizer_is_exact(rows in 1usize..3000, alpha in 1u64..300, beta in 1u64..20_000) {
            let got = optimize_geometry(rows, alpha, beta);
            let want = brute_force(rows, alpha, beta);
            prop_assert_eq!(got, want);
        }
    }
}
