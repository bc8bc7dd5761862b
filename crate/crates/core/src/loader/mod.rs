//! Streaming minibatch producer: per-step task sampling, serve-time
//! segmentation and noise, numericalization, token-budgeted batching and
//! binary framing.

pub mod batch;
pub mod serve;
pub mod vocab;
pub mod wire;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub use batch::{assemble_batches, Encoded, Minibatch};
pub use serve::{next_example, Loader, ServeConfig, ServeReport, TaskData};
pub use vocab::Vocabulary;
pub use wire::{StreamReader, WireError};

/// Generator keyed by a tuple of integers. Distinct keys give independent
/// streams, so any unit of work can be replayed from its key alone.
pub fn keyed_rng(key: &[u64]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    for k in key {
        h.update(k.to_le_bytes());
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}
