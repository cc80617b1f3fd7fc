//! NIST P-256 through the `p256` crate.

use std::ops::{Add, Mul, Neg, Sub};

use p256::elliptic_curve::bigint::U256;
use p256::elliptic_curve::ops::Reduce;
use p256::elliptic_curve::sec1::{FromEncodedPoint, ToEncodedPoint};
use p256::elliptic_curve::{Field, PrimeField};
use p256::{AffinePoint, EncodedPoint, FieldBytes, ProjectivePoint, Scalar};
use rand::{CryptoRng, RngCore};

use super::{GroupKind, GroupScalar, PrimeGroup, SCALAR_BYTES};
use crate::error::{decode_err, invalid, Result};
use crate::hash::sha256;

const ENCODED: usize = 33;
const EMBED: usize = 28;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct P256Scalar(Scalar);

impl Add for P256Scalar {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        P256Scalar(self.0 + rhs.0)
    }
}

impl Sub for P256Scalar {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        P256Scalar(self.0 - rhs.0)
    }
}

impl Mul for P256Scalar {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        P256Scalar(self.0 * rhs.0)
    }
}

impl Neg for P256Scalar {
    type Output = Self;
    fn neg(self) -> Self {
        P256Scalar(-self.0)
    }
}

impl GroupScalar for P256Scalar {
    fn zero() -> Self {
        P256Scalar(Scalar::ZERO)
    }

    fn one() -> Self {
        P256Scalar(Scalar::ONE)
    }

    fn from_u64(v: u64) -> Self {
        P256Scalar(Scalar::from(v))
    }

    fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        P256Scalar(Scalar::random(rng))
    }

    fn to_bytes(&self) -> [u8; SCALAR_BYTES] {
        let mut out: [u8; SCALAR_BYTES] = self.0.to_repr().into();
        out.reverse();
        out
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut be: [u8; SCALAR_BYTES] = bytes
            .try_into()
            .map_err(|_| decode_err("scalar must be 32 bytes"))?;
        be.reverse();
        Option::<Scalar>::from(Scalar::from_repr(FieldBytes::from(be)))
            .map(P256Scalar)
            .ok_or_else(|| decode_err("non-canonical scalar"))
    }

    fn from_hash(hash: &[u8; 32]) -> Self {
        P256Scalar(<Scalar as Reduce<U256>>::reduce_bytes(&FieldBytes::from(*hash)))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct P256Point(ProjectivePoint);

impl Add for P256Point {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        P256Point(self.0 + rhs.0)
    }
}

impl Sub for P256Point {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        P256Point(self.0 - rhs.0)
    }
}

impl Neg for P256Point {
    type Output = Self;
    fn neg(self) -> Self {
        P256Point(-self.0)
    }
}

/// Interprets `x` as the x-coordinate of the even-y point, if one exists.
fn lift_x(x: &[u8; 32]) -> Option<ProjectivePoint> {
    let mut sec1 = [0u8; ENCODED];
    sec1[0] = 0x02;
    sec1[1..].copy_from_slice(x);
    let ep = EncodedPoint::from_bytes(sec1).ok()?;
    Option::<AffinePoint>::from(AffinePoint::from_encoded_point(&ep)).map(ProjectivePoint::from)
}

impl PrimeGroup for P256Point {
    type Scalar = P256Scalar;

    const KIND: GroupKind = GroupKind::P256;
    const ENCODED_BYTES: usize = ENCODED;
    const EMBED_BYTES: usize = EMBED;

    fn identity() -> Self {
        P256Point(ProjectivePoint::IDENTITY)
    }

    fn mul(&self, k: &P256Scalar) -> Self {
        P256Point(self.0 * k.0)
    }

    fn hash_to_group(label: &[u8]) -> Self {
        for ctr in 0u32.. {
            let x = sha256(&[b"riposte/h2g/p256", label, &ctr.to_be_bytes()]);
            if let Some(p) = lift_x(&x) {
                return P256Point(p);
            }
        }
        unreachable!("hash_to_group exhausted its counter")
    }

    fn encode(&self, out: &mut Vec<u8>) {
        if self.0 == ProjectivePoint::IDENTITY {
            out.extend_from_slice(&[0u8; ENCODED]);
        } else {
            out.extend_from_slice(self.0.to_affine().to_encoded_point(true).as_bytes());
        }
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != ENCODED {
            return Err(decode_err("point must be 33 bytes"));
        }
        if bytes.iter().all(|&b| b == 0) {
            return Ok(Self::identity());
        }
        if bytes[0] != 0x02 && bytes[0] != 0x03 {
            return Err(decode_err("point must be compressed"));
        }
        let ep = EncodedPoint::from_bytes(bytes).map_err(|_| decode_err("bad point encoding"))?;
        Option::<AffinePoint>::from(AffinePoint::from_encoded_point(&ep))
            .map(|a| P256Point(a.into()))
            .ok_or_else(|| decode_err("point not on curve"))
    }

    // x = len || data (zero padded to 28) || 24-bit counter, first counter
    // that lands on the curve wins.
    fn embed(chunk: &[u8]) -> Result<Self> {
        if chunk.len() > EMBED {
            return Err(invalid(format!("chunk of {} bytes exceeds {EMBED}", chunk.len())));
        }
        let mut x = [0u8; 32];
        x[0] = chunk.len() as u8;
        x[1..1 + chunk.len()].copy_from_slice(chunk);
        for ctr in 0u32..(1 << 24) {
            x[29..].copy_from_slice(&ctr.to_be_bytes()[1..]);
            if let Some(p) = lift_x(&x) {
                return Ok(P256Point(p));
            }
        }
        Err(invalid("no curve point for chunk"))
    }

    fn extract(&self) -> Result<Vec<u8>> {
        if self.0 == ProjectivePoint::IDENTITY {
            return Err(decode_err("element carries no message"));
        }
        let enc = self.0.to_affine().to_encoded_point(true);
        let x = &enc.as_bytes()[1..];
        let len = x[0] as usize;
        if len > EMBED || x[1 + len..29].iter().any(|&b| b != 0) {
            return Err(decode_err("element carries no message"));
        }
        Ok(x[1..1 + len].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_uncompressed_and_off_curve() {
        let mut b = [0u8; 33];
        b[0] = 0x04;
        b[1] = 1;
        assert!(P256Point::decode(&b).is_err());
        // x = 0 is not on P-256 with an even-y root
        let mut x = [0u8; 33];
        x[0] = 0x02;
        x[32] = 5;
        let direct = lift_x(x[1..].try_into().unwrap()).is_some();
        assert_eq!(P256Point::decode(&x).is_ok(), direct);
    }

    #[test]
    fn scalar_le_round_trip_small() {
        let s = P256Scalar::from_u64(0x0102);
        let b = s.to_bytes();
        assert_eq!(b[0], 0x02);
        assert_eq!(b[1], 0x01);
        assert!(b[2..].iter().all(|&v| v == 0));
    }
}
