//! Counter-based random streams.
//!
//! Every random draw in the crate is a pure function of `(seed, domain,
//! stream)`: the seed and domain tag key a ChaCha8 generator and the stream id
//! selects one of its 2⁶⁴ independent streams. Work items index their own
//! stream, so results never depend on which worker evaluates them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Separates the random streams of unrelated consumers sharing one seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Configurations = 1,
    ChargeTrajectories = 2,
    MeasurementNoise = 3,
    Bootstrap = 4,
    Properties = 5,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for stream `stream` of `domain` under `seed`.
pub fn stream_rng(seed: u64, domain: Domain, stream: u64) -> ChaCha8Rng {
    let mut state = seed ^ (domain as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}
