//! Independent, order-free random streams keyed by (run seed, iteration, purpose, slot).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    WorkingAgents = 1,
    ReferenceSolvers = 2,
    ReferenceAgents = 3,
    Session = 4,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_seed(run_seed: u64, iteration: u32, purpose: Purpose, slot: usize) -> u64 {
    let mut h = splitmix64(run_seed);
    h = splitmix64(h ^ u64::from(iteration));
    h = splitmix64(h ^ purpose as u64);
    splitmix64(h ^ slot as u64)
}

pub fn stream(run_seed: u64, iteration: u32, purpose: Purpose, slot: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(run_seed, iteration, purpose, slot))
}
