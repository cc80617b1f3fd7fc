//! AES-128 in counter mode as the seed-stretching PRG.
//!
//! Layout is fixed so expansions are bit-exact across implementations: the
//! seed is the AES key, the initial counter block is all zeros and the
//! 128-bit counter is incremented big-endian.

use std::cell::Cell;

use aes::Aes128;
use ctr::cipher::{KeyIvInit, StreamCipher};
use rand::{CryptoRng, RngCore};

use crate::field::Fp;

pub const SEED_BYTES: usize = 16;

/// A 128-bit PRG seed.
pub type Seed = [u8; SEED_BYTES];

type Aes128Ctr = ctr::Ctr128BE<Aes128>;

thread_local! {
    static EXPANSIONS: Cell<u64> = const { Cell::new(0) };
}

/// Number of seed expansions performed on this thread so far.
pub fn expansion_count() -> u64 {
    EXPANSIONS.with(|c| c.get())
}

fn count_expansion() {
    EXPANSIONS.with(|c| c.set(c.get() + 1));
}

pub fn random_seed<R: RngCore + CryptoRng>(rng: &mut R) -> Seed {
    let mut s = [0u8; SEED_BYTES];
    rng.fill_bytes(&mut s);
    s
}

/// XORs the keystream for `seed` into `buf`.
pub fn prg_xor_into(seed: &Seed, buf: &mut [u8]) {
    count_expansion();
    let mut cipher = Aes128Ctr::new(seed.into(), &[0u8; 16].into());
    cipher.apply_keystream(buf);
}

/// Stretches `seed` to `n` pseudorandom bytes.
pub fn prg_expand(seed: &Seed, n: usize) -> Vec<u8> {
    let mut out = vec![0u8; n];
    prg_xor_into(seed, &mut out);
    out
}

/// Stretches `seed` to `count` field elements, each reduced from 128 fresh
/// bits (bias at most `2^-64`).
pub fn prg_expand_fp(seed: &Seed, count: usize) -> Vec<Fp> {
    let bytes = prg_expand(seed, count * 16);
    bytes
        .chunks_exact(16)
        .map(|c| Fp::from_u128(u128::from_le_bytes(c.try_into().expect("16-byte chunk"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::MODULUS;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn empty_expansion() {
        assert!(prg_expand(&[7u8; 16], 0).is_empty());
        assert!(prg_expand_fp(&[7u8; 16], 0).is_empty());
    }

    #[test]
    fn deterministic_and_prefix_consistent() {
        let seed = [42u8; 16];
        assert_eq!(prg_expand(&seed, 32), prg_expand(&seed, 32));
        let long = prg_expand(&seed, 100);
        for n in [0, 1, 15, 16, 17, 63] {
            assert_eq!(&long[..n], prg_expand(&seed, n).as_slice());
        }
        assert_eq!(prg_expand_fp(&seed, 5), prg_expand_fp(&seed, 5));
    }

    #[test]
    fn known_answer_zero_key() {
        // AES-128 of the zero block under the zero key (FIPS-197 style KAT)
        let out = prg_expand(&[0u8; 16], 16);
        assert_eq!(hex::encode(out), "66e94bd4ef8a2c3b884cfa59ca342b2e");
    }

    #[test]
    fn distinct_seeds_give_distinct_streams() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..200 {
            let a = random_seed(&mut rng);
            let b = random_seed(&mut rng);
            assert_ne!(prg_expand(&a, 32), prg_expand(&b, 32));
        }
    }

    #[test]
    fn fp_outputs_are_reduced() {
        let v = prg_expand_fp(&[9u8; 16], 100_000);
        assert_eq!(v.len(), 100_000);
        assert!(v.iter().all(|x| x.value() < MODULUS));
    }

    #[test]
    fn counter_tracks_expansions() {
        let before = expansion_count();
        prg_expand(&[1u8; 16], 10);
        prg_expand_fp(&[1u8; 16], 10);
        assert_eq!(expansion_count() - before, 2);
    }
}
