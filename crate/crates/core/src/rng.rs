//! Named random streams.
//!
//! Every trial seeds one ChaCha8 generator per purpose, so channel draws,
//! CSIT errors and solver randomness stay reproducible independently of each
//! other and of the order in which trials execute.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Channel,
    /// Channel covariance estimation for one device.
    Covariance(usize),
    CsitError,
    Solver,
    Symbols,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Channel => 1,
            Stream::CsitError => 2,
            Stream::Solver => 3,
            Stream::Symbols => 4,
            Stream::Covariance(k) => 1_000 + k as u64,
        }
    }
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}
