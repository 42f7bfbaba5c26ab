//! Seed discipline shared by the benchmarks.
//!
//! Every random source is a ChaCha8 generator keyed by the master seed; the
//! run index and a purpose tag select the stream, so runs are independent of
//! each other and of the order in which they execute.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a derived stream is used for. Streams with different purposes never
/// overlap even for the same run index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamPurpose {
    InitialPoint = 0,
    ObjectiveNoise = 1,
    ParamInit = 2,
    Shuffle = 3,
    DataSplit = 4,
    Synthetic = 5,
}

const PURPOSES: u64 = 8;

pub fn derived_rng(master_seed: u64, run_index: u64, purpose: StreamPurpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(
        run_index
            .wrapping_mul(PURPOSES)
            .wrapping_add(purpose as u64),
    );
    rng
}
