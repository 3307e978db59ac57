//! Hierarchical seed derivation for reproducible Monte Carlo.
//!
//! A [`SeedStream`] is a root seed plus a path of replica indices. Each
//! distinct `(root, path)` pair maps to its own ChaCha8 generator, so replicas
//! can run on any thread in any order and still produce the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedStream {
    pub root: u64,
    pub path: Vec<u64>,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedStream {
    pub fn new(root: u64) -> Self {
        Self { root, path: Vec::new() }
    }

    /// Stream for replica `index` below this one.
    pub fn child(&self, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        Self { root: self.root, path }
    }

    /// Named sub-stream; `tag` is hashed into the path.
    pub fn fork(&self, tag: &str) -> Self {
        let mut h: u64 = 0xCBF2_9CE4_8422_2325;
        for b in tag.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01B3);
        }
        self.child(h)
    }

    /// 256-bit key obtained by absorbing the root and each path element in turn.
    fn key(&self) -> [u8; 32] {
        let mut state = self.root ^ 0x5EED_5EED_5EED_5EED;
        let _ = splitmix64(&mut state);
        for &p in &self.path {
            let mut elem = p.wrapping_add(0xA076_1D64_78BD_642F);
            state ^= splitmix64(&mut elem);
            let _ = splitmix64(&mut state);
        }
        let mut out = [0u8; 32];
        for chunk in out.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        out
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key())
    }
}

impl std::fmt::Display for SeedStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.root)?;
        for p in &self.path {
            write!(f, "/{p}")?;
        }
        Ok(())
    }
}
