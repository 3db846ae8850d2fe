//! Actor-critic GAN for masked-text in-filling.
//!
//! A seq2seq generator fills the blanked spans of a token sequence, a
//! per-token discriminator turns each filled token into a reward, and a
//! critic head on the discriminator supplies the policy-gradient baseline.
//! This crate holds every algorithmic piece (vocabulary, masking, a small
//! reverse-mode differentiation core, the three networks, the training
//! stages, evaluation metrics and brute-force oracles) and needs only
//! `alloc`. File IO and the command line live in the companion `maskgan`
//! crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod masking;
pub(crate) mod math;
pub mod models;
pub mod numerics;
pub mod oracle;
pub mod training;

pub use error::{Error, Result};

/// Seeded generator used by every stochastic routine in the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate's RNG from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
