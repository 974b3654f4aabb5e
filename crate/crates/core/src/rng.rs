//! Counter-based random streams.
//!
//! Every path of an ensemble draws from its own ChaCha8 stream, selected by
//! the path index on top of the master seed. The block counter inside the
//! cipher is the draw counter, so a path's draws never depend on which
//! worker ran it or on how many paths were simulated before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type PathRng = ChaCha8Rng;

/// Stream `path_index` of master seed `master`.
pub fn path_rng(master: u64, path_index: u64) -> PathRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(path_index);
    rng
}

/// Seed provenance recorded on every trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SeedInfo {
    pub master: u64,
    pub stream: u64,
}
