//! Order-`q` subgroup of quadratic residues modulo the safe prime
//! `t = 2q + 1 = 2^64 - 1469`.
//!
//! Far too small for real security; it exists so proof and DPF suites run in
//! milliseconds while exercising the same generic code as P-256.

use std::ops::{Add, Mul, Neg, Sub};

use rand::{CryptoRng, RngCore};

use super::{GroupKind, GroupScalar, PrimeGroup, SCALAR_BYTES};
use crate::error::{decode_err, invalid, Result};
use crate::hash::sha256;

pub const SCHNORR_MODULUS: u64 = 0xffff_ffff_ffff_fa43;
pub const SCHNORR_ORDER: u64 = 0x7fff_ffff_ffff_fd21;

const EMBED: usize = 6;

fn mulmod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn powmod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mulmod(acc, base, m);
        }
        base = mulmod(base, base, m);
        exp >>= 1;
    }
    acc
}

fn is_residue(v: u64) -> bool {
    v != 0 && powmod(v, SCHNORR_ORDER, SCHNORR_MODULUS) == 1
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Schnorr64Scalar(u64);

impl Schnorr64Scalar {
    pub fn value(self) -> u64 {
        self.0
    }
}

impl Add for Schnorr64Scalar {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Schnorr64Scalar(((self.0 as u128 + rhs.0 as u128) % SCHNORR_ORDER as u128) as u64)
    }
}

impl Sub for Schnorr64Scalar {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Neg for Schnorr64Scalar {
    type Output = Self;
    fn neg(self) -> Self {
        if self.0 == 0 {
            self
        } else {
            Schnorr64Scalar(SCHNORR_ORDER - self.0)
        }
    }
}

impl Mul for Schnorr64Scalar {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Schnorr64Scalar(mulmod(self.0, rhs.0, SCHNORR_ORDER))
    }
}

impl GroupScalar for Schnorr64Scalar {
    fn zero() -> Self {
        Schnorr64Scalar(0)
    }

    fn one() -> Self {
        Schnorr64Scalar(1)
    }

    fn from_u64(v: u64) -> Self {
        Schnorr64Scalar(v % SCHNORR_ORDER)
    }

    fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        // 128 bits reduced keeps the bias negligible
        let v = ((rng.next_u64() as u128) << 64) | rng.next_u64() as u128;
        Schnorr64Scalar((v % SCHNORR_ORDER as u128) as u64)
    }

    fn to_bytes(&self) -> [u8; SCALAR_BYTES] {
        let mut out = [0u8; SCALAR_BYTES];
        out[..8].copy_from_slice(&self.0.to_le_bytes());
        out
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != SCALAR_BYTES {
            return Err(decode_err("scalar must be 32 bytes"));
        }
        if bytes[8..].iter().any(|&b| b != 0) {
            return Err(decode_err("non-canonical scalar"));
        }
        let v = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
        if v >= SCHNORR_ORDER {
            return Err(decode_err("non-canonical scalar"));
        }
        Ok(Schnorr64Scalar(v))
    }

    fn from_hash(hash: &[u8; 32]) -> Self {
        let v = u128::from_le_bytes(hash[..16].try_into().expect("16 bytes"));
        Schnorr64Scalar((v % SCHNORR_ORDER as u128) as u64)
    }
}

/// Element of the quadratic-residue subgroup, stored as its residue.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Schnorr64(u64);

impl Schnorr64 {
    pub fn value(self) -> u64 {
        self.0
    }
}

impl Add for Schnorr64 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Schnorr64(mulmod(self.0, rhs.0, SCHNORR_MODULUS))
    }
}

impl Neg for Schnorr64 {
    type Output = Self;
    fn neg(self) -> Self {
        Schnorr64(powmod(self.0, SCHNORR_ORDER - 1, SCHNORR_MODULUS))
    }
}

impl Sub for Schnorr64 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl PrimeGroup for Schnorr64 {
    type Scalar = Schnorr64Scalar;

    const KIND: GroupKind = GroupKind::Schnorr64;
    const ENCODED_BYTES: usize = 8;
    const EMBED_BYTES: usize = EMBED;

    fn identity() -> Self {
        Schnorr64(1)
    }

    fn mul(&self, k: &Schnorr64Scalar) -> Self {
        Schnorr64(powmod(self.0, k.0, SCHNORR_MODULUS))
    }

    fn hash_to_group(label: &[u8]) -> Self {
        for ctr in 0u32.. {
            let h = sha256(&[b"riposte/h2g/schnorr64", label, &ctr.to_be_bytes()]);
            let v = u64::from_le_bytes(h[..8].try_into().expect("8 bytes")) % SCHNORR_MODULUS;
            let e = mulmod(v, v, SCHNORR_MODULUS);
            if e > 1 {
                return Schnorr64(e);
            }
        }
        unreachable!("hash_to_group exhausted its counter")
    }

    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0.to_le_bytes());
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        let arr: [u8; 8] = bytes
            .try_into()
            .map_err(|_| decode_err("group element must be 8 bytes"))?;
        let v = u64::from_le_bytes(arr);
        if v >= SCHNORR_MODULUS || !is_residue(v) {
            return Err(decode_err("not a subgroup element"));
        }
        Ok(Schnorr64(v))
    }

    // k = 2 + (len << 48 | data); exactly one of k, t - k is a residue
    // because -1 is not. The offset keeps the identity out of the image.
    fn embed(chunk: &[u8]) -> Result<Self> {
        if chunk.len() > EMBED {
            return Err(invalid(format!("chunk of {} bytes exceeds {EMBED}", chunk.len())));
        }
        let mut data = [0u8; 8];
        data[2..2 + chunk.len()].copy_from_slice(chunk);
        let packed = ((chunk.len() as u64) << 48) | u64::from_be_bytes(data);
        let k = 2 + packed;
        Ok(Schnorr64(if is_residue(k) { k } else { SCHNORR_MODULUS - k }))
    }

    fn extract(&self) -> Result<Vec<u8>> {
        let k = if self.0 <= SCHNORR_ORDER { self.0 } else { SCHNORR_MODULUS - self.0 };
        if k < 2 {
            return Err(decode_err("element carries no message"));
        }
        let packed = k - 2;
        let len = (packed >> 48) as usize;
        if len > EMBED {
            return Err(decode_err("element carries no message"));
        }
        let data = (packed & ((1u64 << 48) - 1)).to_be_bytes();
        let body = &data[2..];
        if body[len..].iter().any(|&b| b != 0) {
            return Err(decode_err("non-canonical embedding"));
        }
        Ok(body[..len].to_vec())
    }
}
