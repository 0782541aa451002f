use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Independent stream per (seed, device, key, purpose). Replies never depend
/// on how many other requests were served first.
pub fn request_rng(seed: u64, device: &str, key: &str, purpose: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for part in [device, key, purpose] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}
