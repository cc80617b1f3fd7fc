//! Prime-order groups used by the many-server DPF and the validity proofs.
//!
//! Two instantiations: NIST P-256 as the reference group and a 64-bit
//! Schnorr subgroup for fast test suites. Everything above this module is
//! generic over [`PrimeGroup`].

use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::Result;

mod p256;
mod params;
mod schnorr;

pub use self::p256::{P256Point, P256Scalar};
pub use self::params::{shprg_expand, PedersenParams};
pub use self::schnorr::{Schnorr64, Schnorr64Scalar, SCHNORR_MODULUS, SCHNORR_ORDER};

pub const SCALAR_BYTES: usize = 32;

pub trait GroupScalar:
    Copy
    + Eq
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_u64(v: u64) -> Self;
    fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self;
    /// 32-byte little-endian encoding.
    fn to_bytes(&self) -> [u8; SCALAR_BYTES];
    /// Rejects non-canonical encodings.
    fn from_bytes(bytes: &[u8]) -> Result<Self>;
    /// Maps a hash output onto the scalar field (used for challenges).
    fn from_hash(hash: &[u8; 32]) -> Self;

    fn is_zero(&self) -> bool {
        *self == Self::zero()
    }
}

/// A group of prime order `q`, written additively.
pub trait PrimeGroup:
    Copy
    + Eq
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Neg<Output = Self>
{
    type Scalar: GroupScalar;

    const KIND: GroupKind;
    /// Width of the canonical encoding.
    const ENCODED_BYTES: usize;
    /// Message bytes that fit in one element.
    const EMBED_BYTES: usize;

    fn identity() -> Self;
    fn mul(&self, k: &Self::Scalar) -> Self;
    /// Deterministic map from a public label to a non-identity element.
    fn hash_to_group(label: &[u8]) -> Self;
    fn encode(&self, out: &mut Vec<u8>);
    fn decode(bytes: &[u8]) -> Result<Self>;
    /// Embeds up to `EMBED_BYTES` bytes. Never yields the identity.
    fn embed(chunk: &[u8]) -> Result<Self>;
    fn extract(&self) -> Result<Vec<u8>>;

    fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(Self::ENCODED_BYTES);
        self.encode(&mut v);
        v
    }
}

/// Runtime selector for the group behind the many-server variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupKind {
    P256,
    Schnorr64,
}

pub fn encode_group_message<G: PrimeGroup>(chunk: &[u8]) -> Result<G> {
    G::embed(chunk)
}

pub fn decode_group_message<G: PrimeGroup>(e: &G) -> Result<Vec<u8>> {
    e.extract()
}
