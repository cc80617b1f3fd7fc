//! Public generators: Pedersen bases `P`, `Q` and the seed-homomorphic PRG
//! bases `P_0, P_1, ...`, all derived by hashing fixed labels.

use super::PrimeGroup;

#[derive(Debug, Clone)]
pub struct PedersenParams<G: PrimeGroup> {
    pub p: G,
    pub q: G,
    pub prg: Vec<G>,
}

impl<G: PrimeGroup> PedersenParams<G> {
    /// Derives `P`, `Q` and `count` PRG generators.
    pub fn derive(count: usize) -> Self {
        let prg = (0..count)
            .map(|i| G::hash_to_group(format!("riposte/G/{i}").as_bytes()))
            .collect();
        PedersenParams {
            p: G::hash_to_group(b"riposte/P"),
            q: G::hash_to_group(b"riposte/Q"),
            prg,
        }
    }

    pub fn prg_len(&self) -> usize {
        self.prg.len()
    }
}

/// `G(s) = (s P_0, ..., s P_{count-1})`, additively homomorphic in `s`.
pub fn shprg_expand<G: PrimeGroup>(params: &PedersenParams<G>, s: &G::Scalar, count: usize) -> Vec<G> {
    assert!(count <= params.prg.len(), "not enough PRG generators derived");
    params.prg[..count].iter().map(|g| g.mul(s)).collect()
}
