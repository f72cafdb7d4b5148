//! Seed derivation and the simulator's random stream.
//!
//! Every random decision in the simulator flows through [`SimRng`], a thin
//! facade over the ChaCha8 stream cipher with explicit, documented mappings
//! from raw 64-bit output to floats and bounded integers. Sub-seeds are
//! derived with [`derive_seed`], a SplitMix64-style fold over
//! `(purpose, n, eta_index, trial_index)`, so every trial owns an independent
//! stream and adding eta points or trials never shifts another trial's draws.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// What a derived seed is for. Each purpose gets a disjoint stream family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedPurpose {
    /// Node positions for one topology attempt.
    Topology,
    /// Protocol randomness: acceptance degrees, relay targets, coins, slots.
    Protocol,
    /// Decoder query selection.
    Query,
    /// Per-node payload bytes.
    Payload,
}

impl SeedPurpose {
    fn tag(self) -> u64 {
        match self {
            SeedPurpose::Topology => 0x544f_504f,
            SeedPurpose::Protocol => 0x5052_4f54,
            SeedPurpose::Query => 0x5155_4552,
            SeedPurpose::Payload => 0x5041_594c,
        }
    }
}

/// One SplitMix64 step: advance `state` by the golden-ratio increment and
/// return the finalized output.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a sub-seed from the master seed.
///
/// The mixing function is a fold: starting from `master`, each component
/// (purpose tag, `n`, `eta_index`, `trial_index`) is XORed in and the result
/// is passed through the full SplitMix64 output function, so every absorbed
/// component avalanches across all 64 bits before the next one lands.
/// Trials are indexed rather than sequenced, so execution order cannot
/// change any stream.
pub fn derive_seed(
    master: u64,
    purpose: SeedPurpose,
    n: u64,
    eta_index: u64,
    trial_index: u64,
) -> u64 {
    let mut state = master;
    for part in [purpose.tag(), n, eta_index, trial_index] {
        let mut absorbed = state ^ part;
        state = splitmix64(&mut absorbed);
    }
    state
}

/// Successor seed used when a disconnected topology forces a regeneration.
pub fn next_attempt_seed(seed: u64) -> u64 {
    let mut state = seed;
    splitmix64(&mut state)
}

/// Deterministic random stream for one simulation component.
///
/// Wraps ChaCha8 and pins the output mappings here instead of relying on a
/// distribution library, so a given seed reproduces the same decisions on any
/// platform and any future dependency version.
#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha8Rng,
}

impl SimRng {
    /// Expand a 64-bit seed into the 256-bit ChaCha key via SplitMix64.
    pub fn new(seed: u64) -> Self {
        let mut state = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        SimRng {
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw on [0, 1): the top 53 bits of one output word scaled by 2^-53.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..bound` by rejection sampling (unbiased).
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "below(0) is undefined");
        let bound = bound as u64;
        // Reject draws from the tail that would bias the modulus.
        let zone = u64::MAX - (u64::MAX % bound + 1) % bound;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return (v % bound) as usize;
            }
        }
    }

    /// `count` distinct values from `0..n`, via partial Fisher-Yates.
    pub fn sample_distinct(&mut self, n: usize, count: usize) -> Vec<usize> {
        assert!(count <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }
}

/// Deterministic payload bytes for node `origin`.
///
/// The byte stream is SplitMix64 seeded with
/// `derive_seed(master, Payload, n, 0, origin)`, taken little-endian.
pub fn payload_bytes(master: u64, n: u64, origin: u64, len: usize) -> Vec<u8> {
    let mut state = derive_seed(master, SeedPurpose::Payload, n, 0, origin);
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let word = splitmix64(&mut state).to_le_bytes();
        out.extend_from_slice(&word[..word.len().min(len - out.len())]);
    }
    out
}
