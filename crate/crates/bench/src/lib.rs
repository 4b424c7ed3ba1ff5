//! Shared inputs for the kernel benchmarks.

use dbrs_core::fixtures;
use dbrs_core::ReactionNetwork;

/// Networks the benchmarks run on, by label.
pub fn networks() -> Vec<(&'static str, ReactionNetwork)> {
    vec![("three_species", fixtures::three_species()), ("five_species", fixtures::five_species(1.0))]
}

/// A strictly positive, non-equilibrium state with `n` species.
pub fn state(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 + 1.5 * i as f64).collect()
}
