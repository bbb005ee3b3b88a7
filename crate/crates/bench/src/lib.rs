//! Shared instance builders for the benchmark suite.

use dlns_core::generators::{gen_random, DEFAULT_COST_MAX};
use dlns_core::DcopInstance;

/// Connected random network with the default benchmark density.
pub fn random_net(n: usize, d: usize, seed: u64) -> DcopInstance {
    gen_random(n, 0.5, d, DEFAULT_COST_MAX, seed).expect("valid benchmark parameters")
}
