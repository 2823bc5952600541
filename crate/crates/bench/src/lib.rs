//! Shared fixtures for the benchmarks.

use protospace_core::evaluation::{synth_world, SynthWorld, SynthWorldConfig};
use protospace_core::linalg::gaussian_matrix;
use protospace_core::Matrix;

pub fn square(d: usize, seed: u64) -> Matrix {
    gaussian_matrix(d, d, seed)
}

/// The default synthetic world with `n_entities` entities.
pub fn world(n_entities: usize) -> SynthWorld {
    synth_world(&SynthWorldConfig {
        n_entities,
        ..SynthWorldConfig::default()
    })
    .expect("default synthetic world is valid")
}
