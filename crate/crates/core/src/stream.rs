//! Hierarchical, reproducible random streams.
//!
//! A [`RandomStream`] is a pure descriptor: a root seed plus a path of child
//! indices, e.g. `(config, replication)`. The path is folded into a 256-bit
//! ChaCha key, so the draws produced at a path depend only on
//! `(root_seed, path)` and never on which thread asks for them or in what
//! order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Generator handed to submodels and simulation replications.
pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomStream {
    root_seed: u64,
    path: Vec<u64>,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn root(seed: u64) -> Self {
        Self {
            root_seed: seed,
            path: Vec::new(),
        }
    }

    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Child stream at `self.path ++ (index)`. The parent is left untouched.
    pub fn derive(&self, index: u64) -> Self {
        let mut path = Vec::with_capacity(self.path.len() + 1);
        path.extend_from_slice(&self.path);
        path.push(index);
        Self {
            root_seed: self.root_seed,
            path,
        }
    }

    /// Shorthand for a chain of [`derive`](Self::derive) calls.
    pub fn derive_path(&self, indices: &[u64]) -> Self {
        let mut path = self.path.clone();
        path.extend_from_slice(indices);
        Self {
            root_seed: self.root_seed,
            path,
        }
    }

    fn key(&self) -> [u8; 32] {
        // Length is mixed in first so that (a) and (a, 0) land on different keys.
        let mut h = splitmix64(self.root_seed ^ splitmix64(self.path.len() as u64));
        for &idx in &self.path {
            h = splitmix64(h ^ splitmix64(idx.wrapping_add(GOLDEN)));
        }
        let mut key = [0u8; 32];
        let mut lane = h;
        for chunk in key.chunks_exact_mut(8) {
            lane = splitmix64(lane);
            chunk.copy_from_slice(&lane.to_le_bytes());
        }
        key
    }

    /// 64-bit digest of `(root_seed, path)`, used to tag provenance.
    pub fn fingerprint(&self) -> u64 {
        u64::from_le_bytes(self.key()[..8].try_into().expect("8 bytes"))
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        ChaCha8Rng::from_seed(self.key())
    }
}
