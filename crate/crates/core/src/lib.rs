//! Flat-top laser beams as finite Hermite–Gaussian superpositions, SLM phase
//! holograms that produce them, and two-atom Rydberg gate dynamics under
//! thermal atomic motion.

pub mod calib;
pub mod error;
pub mod flattop;
pub mod hologram;
pub mod io;
pub mod propagation;
pub mod qsim;
pub mod specfun;

pub(crate) mod optim;

pub use error::{Error, Result};

use rand::SeedableRng;

/// Independent deterministic random stream `stream` under `seed`.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
#[path = "../tests/common/quad.rs"]
mod quad;
