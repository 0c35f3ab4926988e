//! Graph augmentation and slicing: noise detours, weighted path sampling,
//! and conversation-to-test extraction.

mod extract;
mod noise;
mod sampler;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use extract::extract_tests;
pub use noise::{default_pool, inject_noise, noise_eligible, NoiseConfig, NoiseKind, NoiseMessage, RECOVERY_MESSAGE};
pub use sampler::{enumerate_paths, sample_node, sample_paths, Path, SamplerConfig, SamplerState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("noise probability {0} is outside [0, 1]")]
    BadProbability(f64),
    #[error("noise pool is empty")]
    EmptyPool,
    #[error("graph has no unique root")]
    NoRoot,
    #[error("node {0} has no children")]
    NoChildren(String),
    #[error("number of paths must be positive")]
    ZeroPaths,
    #[error("gave up after {attempts} walks with {collected} paths collected")]
    NonTerminating { attempts: usize, collected: usize },
    #[error("conversation {id} breaks sequence rules: {rules}")]
    MalformedConversation { id: String, rules: String },
}

/// Random stream for one artifact, derived from the run seed and the
/// artifact id so results do not depend on processing order.
pub fn derive_rng(seed: u64, artifact_id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(artifact_id.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}
