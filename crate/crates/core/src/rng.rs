//! Seeded, splittable randomness.
//!
//! Every sampler in the crate takes an explicit `&mut SimRng`. Independent
//! streams are derived from a master seed and a list of labels by hashing,
//! so a task's stream depends only on its identity and never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha20Rng;

pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// A component of a derived stream identity.
#[derive(Debug, Clone, Copy)]
pub enum Label<'a> {
    Int(u64),
    Str(&'a str),
}

impl From<u64> for Label<'_> {
    fn from(v: u64) -> Self {
        Label::Int(v)
    }
}

impl From<usize> for Label<'_> {
    fn from(v: usize) -> Self {
        Label::Int(v as u64)
    }
}

impl<'a> From<&'a str> for Label<'a> {
    fn from(v: &'a str) -> Self {
        Label::Str(v)
    }
}

/// Derives an independent generator from `master` and `labels`.
pub fn derive(master: u64, labels: &[Label<'_>]) -> SimRng {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    for label in labels {
        match label {
            Label::Int(v) => {
                h.update([0u8]);
                h.update(v.to_le_bytes());
            }
            Label::Str(s) => {
                h.update([1u8]);
                h.update((s.len() as u64).to_le_bytes());
                h.update(s.as_bytes());
            }
        }
    }
    let digest = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest[..32]);
    SimRng::from_seed(seed)
}
