//! Additive groups that DPF outputs and database cells live in.
//!
//! `Xor` is bytes under XOR (the binary field), `FpPayload` is `F_p` used by
//! collision-recovery coding, and `GroupPayload<G>` holds group elements for
//! the many-server variant.

use std::fmt::Debug;
use std::marker::PhantomData;

use rand::{CryptoRng, RngCore};

use crate::dpf::KeyVariant;
use crate::error::{decode_err, Result};
use crate::field::Fp;
use crate::group::{GroupScalar, PrimeGroup};
use crate::prg::{prg_expand_fp, prg_xor_into, Seed};

pub trait Payload: Send + Sync + 'static {
    type Elem: Copy + PartialEq + Debug + Send + Sync + 'static;
    const ELEM_BYTES: usize;

    fn zero() -> Self::Elem;
    fn add(a: Self::Elem, b: Self::Elem) -> Self::Elem;
    fn neg(a: Self::Elem) -> Self::Elem;
    fn encode(e: &Self::Elem, out: &mut Vec<u8>);
    fn decode(bytes: &[u8]) -> Result<Self::Elem>;
    fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self::Elem;

    fn sub(a: Self::Elem, b: Self::Elem) -> Self::Elem {
        Self::add(a, Self::neg(b))
    }

    fn is_zero(e: &Self::Elem) -> bool {
        *e == Self::zero()
    }

    fn add_into(dst: &mut [Self::Elem], src: &[Self::Elem]) {
        for (d, s) in dst.iter_mut().zip(src) {
            *d = Self::add(*d, *s);
        }
    }

    fn sub_into(dst: &mut [Self::Elem], src: &[Self::Elem]) {
        for (d, s) in dst.iter_mut().zip(src) {
            *d = Self::sub(*d, *s);
        }
    }

    fn encode_slice(elems: &[Self::Elem], out: &mut Vec<u8>) {
        for e in elems {
            Self::encode(e, out);
        }
    }

    fn decode_slice(bytes: &[u8]) -> Result<Vec<Self::Elem>> {
        if !bytes.len().is_multiple_of(Self::ELEM_BYTES) {
            return Err(decode_err("payload length is not a whole number of elements"));
        }
        bytes.chunks_exact(Self::ELEM_BYTES).map(Self::decode).collect()
    }
}

/// Payloads whose PRG row expansion comes from a 128-bit seed.
pub trait SeededPayload: Payload {
    const TOY_VARIANT: KeyVariant;
    const TWO_SERVER_VARIANT: KeyVariant;

    /// `dst[i] += G(seed)[i]` (or `-=` when `negate`), over `dst.len()`
    /// elements of the expansion.
    fn expand_add_into(seed: &Seed, dst: &mut [Self::Elem], negate: bool);

    fn expand(seed: &Seed, n: usize) -> Vec<Self::Elem> {
        let mut out = vec![Self::zero(); n];
        Self::expand_add_into(seed, &mut out, false);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Xor;

impl Payload for Xor {
    type Elem = u8;
    const ELEM_BYTES: usize = 1;

    fn zero() -> u8 {
        0
    }
    fn add(a: u8, b: u8) -> u8 {
        a ^ b
    }
    fn neg(a: u8) -> u8 {
        a
    }
    fn encode(e: &u8, out: &mut Vec<u8>) {
        out.push(*e);
    }
    fn decode(bytes: &[u8]) -> Result<u8> {
        match bytes {
            [b] => Ok(*b),
            _ => Err(decode_err("byte element must be 1 byte")),
        }
    }
    fn random<R: RngCore + CryptoRng>(rng: &mut R) -> u8 {
        (rng.next_u32() & 0xff) as u8
    }
    fn add_into(dst: &mut [u8], src: &[u8]) {
        crate::row::xor_in_place(dst, src);
    }
    fn decode_slice(bytes: &[u8]) -> Result<Vec<u8>> {
        Ok(bytes.to_vec())
    }
}

impl SeededPayload for Xor {
    const TOY_VARIANT: KeyVariant = KeyVariant::ToyXor;
    const TWO_SERVER_VARIANT: KeyVariant = KeyVariant::TwoServerXor;

    fn expand_add_into(seed: &Seed, dst: &mut [u8], _negate: bool) {
        prg_xor_into(seed, dst);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FpPayload;

impl Payload for FpPayload {
    type Elem = Fp;
    const ELEM_BYTES: usize = Fp::BYTES;

    fn zero() -> Fp {
        Fp::ZERO
    }
    fn add(a: Fp, b: Fp) -> Fp {
        a + b
    }
    fn neg(a: Fp) -> Fp {
        -a
    }
    fn encode(e: &Fp, out: &mut Vec<u8>) {
        out.extend_from_slice(&e.to_bytes());
    }
    fn decode(bytes: &[u8]) -> Result<Fp> {
        Fp::from_bytes(bytes)
    }
    fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Fp {
        Fp::from_u128(((rng.next_u64() as u128) << 64) | rng.next_u64() as u128)
    }
}

impl SeededPayload for FpPayload {
    const TOY_VARIANT: KeyVariant = KeyVariant::ToyFp;
    const TWO_SERVER_VARIANT: KeyVariant = KeyVariant::TwoServerFp;

    fn expand_add_into(seed: &Seed, dst: &mut [Fp], negate: bool) {
        let g = prg_expand_fp(seed, dst.len());
        if negate {
            Self::sub_into(dst, &g);
        } else {
            Self::add_into(dst, &g);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupPayload<G>(PhantomData<G>);

impl<G: PrimeGroup> Payload for GroupPayload<G> {
    type Elem = G;
    const ELEM_BYTES: usize = G::ENCODED_BYTES;

    fn zero() -> G {
        G::identity()
    }
    fn add(a: G, b: G) -> G {
        a + b
    }
    fn neg(a: G) -> G {
        -a
    }
    fn encode(e: &G, out: &mut Vec<u8>) {
        e.encode(out);
    }
    fn decode(bytes: &[u8]) -> Result<G> {
        G::decode(bytes)
    }
    fn random<R: RngCore + CryptoRng>(rng: &mut R) -> G {
        G::hash_to_group(b"riposte/random").mul(&G::Scalar::random(rng))
    }
}
