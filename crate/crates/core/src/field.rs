//! Arithmetic in the prime field of order `p = 2^64 - 59`.
//!
//! This is the payload field used when collision-recovery coding is on:
//! every cell stores `(m, m^2)` and two-way collisions are undone with a
//! modular square root.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{decode_err, invalid, Result};

/// The field modulus, `2^64 - 59`.
pub const MODULUS: u64 = 0xffff_ffff_ffff_ffc5;

/// An element of `F_p`, always kept reduced.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Fp(u64);

/// Result of a square-root attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqrtResult {
    Root(Fp),
    NonResidue,
}

impl Fp {
    pub const ZERO: Fp = Fp(0);
    pub const ONE: Fp = Fp(1);
    pub const BYTES: usize = 8;

    /// Reduces an arbitrary `u64`.
    pub const fn new(v: u64) -> Self {
        Fp(if v >= MODULUS { v - MODULUS } else { v })
    }

    pub fn from_u128(v: u128) -> Self {
        Fp((v % MODULUS as u128) as u64)
    }

    pub const fn value(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn square(self) -> Self {
        self * self
    }

    pub fn pow(self, mut exp: u64) -> Self {
        let mut base = self;
        let mut acc = Fp::ONE;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base;
            }
            base = base.square();
            exp >>= 1;
        }
        acc
    }

    pub fn inverse(self) -> Result<Self> {
        if self.is_zero() {
            return Err(invalid("inverse of zero"));
        }
        Ok(self.pow(MODULUS - 2))
    }

    /// Euler's criterion: true for zero and for nonzero squares.
    pub fn is_square(self) -> bool {
        self.is_zero() || self.pow((MODULUS - 1) / 2) == Fp::ONE
    }

    /// Tonelli–Shanks. `p - 1 = 2^2 * odd`, so the single-exponentiation
    /// shortcut for `p = 3 mod 4` does not apply.
    pub fn sqrt(self) -> SqrtResult {
        if self.is_zero() {
            return SqrtResult::Root(Fp::ZERO);
        }
        if !self.is_square() {
            return SqrtResult::NonResidue;
        }
        let mut q = MODULUS - 1;
        let mut s = 0u32;
        while q & 1 == 0 {
            q >>= 1;
            s += 1;
        }
        let z = non_residue();
        let mut m = s;
        let mut c = z.pow(q);
        let mut t = self.pow(q);
        let mut r = self.pow(q.div_ceil(2));
        while t != Fp::ONE {
            // least i with t^(2^i) == 1
            let mut i = 0u32;
            let mut t2 = t;
            while t2 != Fp::ONE {
                t2 = t2.square();
                i += 1;
            }
            let mut b = c;
            for _ in 0..(m - i - 1) {
                b = b.square();
            }
            m = i;
            c = b.square();
            t = t * c;
            r = r * b;
        }
        SqrtResult::Root(r)
    }

    pub fn to_bytes(self) -> [u8; 8] {
        self.0.to_le_bytes()
    }

    /// Parses the 8-byte little-endian encoding, rejecting values `>= p`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let arr: [u8; 8] = bytes
            .try_into()
            .map_err(|_| decode_err("field element must be 8 bytes"))?;
        let v = u64::from_le_bytes(arr);
        if v >= MODULUS {
            return Err(decode_err("non-canonical field element"));
        }
        Ok(Fp(v))
    }
}

fn non_residue() -> Fp {
    let mut z = Fp(2);
    while z.is_square() {
        z += Fp::ONE;
    }
    z
}

impl fmt::Debug for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fp({})", self.0)
    }
}

impl fmt::Display for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for Fp {
    fn from(v: u64) -> Self {
        Fp::new(v)
    }
}

impl Add for Fp {
    type Output = Fp;
    fn add(self, rhs: Fp) -> Fp {
        let (s, carry) = self.0.overflowing_add(rhs.0);
        if carry || s >= MODULUS {
            Fp(s.wrapping_sub(MODULUS))
        } else {
            Fp(s)
        }
    }
}

impl AddAssign for Fp {
    fn add_assign(&mut self, rhs: Fp) {
        *self = *self + rhs;
    }
}

impl Sub for Fp {
    type Output = Fp;
    fn sub(self, rhs: Fp) -> Fp {
        let (d, borrow) = self.0.overflowing_sub(rhs.0);
        if borrow {
            Fp(d.wrapping_add(MODULUS))
        } else {
            Fp(d)
        }
    }
}

impl SubAssign for Fp {
    fn sub_assign(&mut self, rhs: Fp) {
        *self = *self - rhs;
    }
}

impl Neg for Fp {
    type Output = Fp;
    fn neg(self) -> Fp {
        Fp::ZERO - self
    }
}

impl Mul for Fp {
    type Output = Fp;
    fn mul(self, rhs: Fp) -> Fp {
        Fp::from_u128(self.0 as u128 * rhs.0 as u128)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fp() -> impl Strategy<Value = Fp> {
        any::<u64>().prop_map(Fp::new)
    }

    #[test]
    fn wraparound() {
        assert_eq!(Fp::new(MODULUS - 1) + Fp::ONE, Fp::ZERO);
        assert_eq!(Fp::ZERO - Fp::ONE, Fp::new(MODULUS - 1));
        assert_eq!(Fp::new(MODULUS), Fp::ZERO);
    }

    #[test]
    fn small_products() {
        assert_eq!(Fp::new(3) * Fp::new(5), Fp::new(15));
    }

    #[test]
    fn inverse_of_zero_fails() {
        assert!(Fp::ZERO.inverse().is_err());
    }

    #[test]
    fn sqrt_small_cases() {
        match Fp::new(4).sqrt() {
            SqrtResult::Root(r) => assert!(r == Fp::new(2) || r == -Fp::new(2)),
            SqrtResult::NonResidue => panic!("4 is a square"),
        }
        assert_eq!(Fp::ZERO.sqrt(), SqrtResult::Root(Fp::ZERO));
    }

    #[test]
    fn sqrt_rejects_euler_nonresidues() {
        // independent check of the non-residue signal via Euler's criterion
        let mut found = 0;
        for v in 2u64..200 {
            let euler = Fp::new(v).pow((MODULUS - 1) / 2);
            if euler == Fp::new(MODULUS - 1) {
                assert_eq!(Fp::new(v).sqrt(), SqrtResult::NonResidue, "v = {v}");
                found += 1;
            }
        }
        assert!(found > 50);
    }

    #[test]
    fn canonical_decoding() {
        assert!(Fp::from_bytes(&MODULUS.to_le_bytes()).is_err());
        assert!(Fp::from_bytes(&[0u8; 7]).is_err());
        let x = Fp::new(123456789);
        assert_eq!(Fp::from_bytes(&x.to_bytes()).unwrap(), x);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn field_axioms(a in fp(), b in fp(), c in fp()) {
            prop_assert_eq!((a + b) + c, a + (b + c));
            prop_assert_eq!((a * b) * c, a * (b * c));
            prop_assert_eq!(a * (b + c), a * b + a * c);
            prop_assert_eq!(a + b, b + a);
            prop_assert_eq!(a - b + b, a);
            prop_assert_eq!(a + (-a), Fp::ZERO);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2_000))]

        #[test]
        fn inverse_law(a in fp()) {
            prop_assume!(!a.is_zero());
            prop_assert_eq!(a * a.inverse().unwrap(), Fp::ONE);
        }

        #[test]
        fn sqrt_of_square(r in fp()) {
            match r.square().sqrt() {
                SqrtResult::Root(s) => prop_assert!(s == r || s == -r),
                SqrtResult::NonResidue => prop_assert!(false, "square reported as non-residue"),
            }
        }
    }
}
