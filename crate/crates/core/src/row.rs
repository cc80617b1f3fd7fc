//! Fixed-width byte rows combined with XOR.

use crate::error::{invalid, Result};

pub const DEFAULT_ROW_BYTES: usize = 160;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RowPayload(Vec<u8>);

impl RowPayload {
    pub fn new(bytes: Vec<u8>) -> Self {
        RowPayload(bytes)
    }

    pub fn zeros(width: usize) -> Self {
        RowPayload(vec![0; width])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&b| b == 0)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }
}

pub fn row_xor(a: &RowPayload, b: &RowPayload) -> Result<RowPayload> {
    if a.len() != b.len() {
        return Err(invalid(format!("row widths differ: {} vs {}", a.len(), b.len())));
    }
    let mut out = a.0.clone();
    xor_in_place(&mut out, &b.0);
    Ok(RowPayload(out))
}

/// `dst ^= src` over the common prefix.
#[inline]
pub fn xor_in_place(dst: &mut [u8], src: &[u8]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d ^= s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn length_mismatch() {
        assert!(row_xor(&RowPayload::zeros(3), &RowPayload::zeros(4)).is_err());
    }

    proptest! {
        #[test]
        fn xor_laws(a in proptest::collection::vec(any::<u8>(), 160), b in proptest::collection::vec(any::<u8>(), 160)) {
            let a = RowPayload::new(a);
            let b = RowPayload::new(b);
            let zero = RowPayload::zeros(160);
            prop_assert!(row_xor(&a, &a).unwrap().is_zero());
            prop_assert_eq!(row_xor(&a, &zero).unwrap(), a.clone());
            prop_assert_eq!(row_xor(&row_xor(&a, &b).unwrap(), &b).unwrap(), a);
        }
    }
}
