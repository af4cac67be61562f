//! Keyed random streams: every (master seed, sweep index, trial, purpose)
//! tuple maps to its own ChaCha8 generator, so results do not depend on
//! which worker runs which trial.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Channel,
    Targets,
    Impairments,
    Csi,
    Optimizer,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Channel => 1,
            Purpose::Targets => 2,
            Purpose::Impairments => 3,
            Purpose::Csi => 4,
            Purpose::Optimizer => 5,
        }
    }
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 256-bit key derived by chaining SplitMix64 over the tuple.
pub fn stream_key(master: u64, sweep: u64, trial: u64, purpose: Purpose) -> [u8; 32] {
    let mut s = splitmix64(master);
    s = splitmix64(s ^ sweep);
    s = splitmix64(s ^ trial);
    s = splitmix64(s ^ purpose.tag());
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    key
}

pub fn stream(master: u64, sweep: u64, trial: u64, purpose: Purpose) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(stream_key(master, sweep, trial, purpose))
}

/// Scenario draws (channels, targets) ignore the sweep index so every grid
/// point sees the same realizations (common random numbers).
pub fn scenario_stream(master: u64, trial: u64, purpose: Purpose) -> ChaCha8Rng {
    stream(master, 0, trial, purpose)
}
