//! Simulation and verification toolkit for a resonant switching-billiard
//! Fermi accelerator.

pub mod billiard;
pub mod charts;
pub mod cli;
pub mod config;
pub mod curves;
pub mod error;
pub mod fit;
pub mod hyperbolic;
pub mod io;
pub mod maps;
pub mod model;
pub mod stats;

pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Name of the generator written into output headers.
pub const RNG_NAME: &str = "ChaCha8 (rand_chacha), stream = task index";

/// Deterministic generator for one independent task.
pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}
