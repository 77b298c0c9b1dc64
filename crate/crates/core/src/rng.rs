//! Deterministic random streams.
//!
//! Every consumer of randomness draws from a ChaCha8 generator keyed by
//! `(seed, domain, index)`. ChaCha is counter-based, so two streams with
//! different keys never overlap and a stream's output does not depend on
//! how many other streams were created before it. Parallel Monte Carlo
//! chunks use the chunk number as `index`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tag mixed into the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Domain {
    Deployment = 1,
    KeyRings = 2,
    Failures = 3,
    Shares = 4,
    MonteCarlo = 5,
    RouteDelivery = 6,
    Fixtures = 7,
}

pub fn stream(seed: u64, domain: Domain) -> ChaCha8Rng {
    substream(seed, domain, 0)
}

pub fn substream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
