//! Small reference networks.

use crate::network::{Reaction, ReactionNetwork, Speed};

fn names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("X{i}")).collect()
}

/// `X1 ⇌ X3` (slow, κ = √3) and `X1 + X2 ⇌ 2 X3` (fast, κ = 1), `c* = (1, 9, 3)`.
pub fn three_species() -> ReactionNetwork {
    three_species_scaled(1.0)
}

/// As [`three_species`] with `c* = σ (1, 9, 3)`.
pub fn three_species_scaled(sigma: f64) -> ReactionNetwork {
    ReactionNetwork::new(
        names(3),
        vec![sigma, 9.0 * sigma, 3.0 * sigma],
        vec![
            Reaction::new(vec![1, 0, 0], vec![0, 0, 1], Speed::Slow, 3f64.sqrt()),
            Reaction::new(vec![1, 1, 0], vec![0, 0, 2], Speed::Fast, 1.0),
        ],
    )
    .expect("valid fixture")
}

/// The three-species network given by raw rates `k_fw = (3, 1)`, `k_bw = (1, 1)`.
pub fn three_species_from_rates() -> ReactionNetwork {
    ReactionNetwork::from_rates(
        names(3),
        vec![
            (vec![1, 0, 0], vec![0, 0, 1], Speed::Slow),
            (vec![1, 1, 0], vec![0, 0, 2], Speed::Fast),
        ],
        &[3.0, 1.0],
        &[1.0, 1.0],
    )
    .expect("valid fixture")
}

/// `X1 + X2 ⇌ X3` (fast) and `X3 + X4 ⇌ X5` (slow), `c* = (1, 1, ρ, 1, 1)`,
/// with coarse-graining rows `(1,0,1,0,0), (0,1,1,0,0), (0,0,0,1,0), (0,0,0,0,1)`.
pub fn five_species(rho: f64) -> ReactionNetwork {
    five_species_with_rates(rho, 1.0, 1.0)
}

pub fn five_species_with_rates(rho: f64, kappa_fast: f64, kappa_slow: f64) -> ReactionNetwork {
    ReactionNetwork::new(
        names(5),
        vec![1.0, 1.0, rho, 1.0, 1.0],
        vec![
            Reaction::new(vec![1, 1, 0, 0, 0], vec![0, 0, 1, 0, 0], Speed::Fast, kappa_fast),
            Reaction::new(vec![0, 0, 1, 1, 0], vec![0, 0, 0, 0, 1], Speed::Slow, kappa_slow),
        ],
    )
    .and_then(|n| {
        n.with_coarse_graining(vec![
            vec![1, 0, 1, 0, 0],
            vec![0, 1, 1, 0, 0],
            vec![0, 0, 0, 1, 0],
            vec![0, 0, 0, 0, 1],
        ])
    })
    .expect("valid fixture")
}

/// Single species, `2X ⇌ X` fast with `c* = 1`: `ċ = (c − c²)/ε`.
pub fn autocatalytic_single() -> ReactionNetwork {
    ReactionNetwork::new(names(1), vec![1.0], vec![Reaction::new(vec![2], vec![1], Speed::Fast, 1.0)])
        .expect("valid fixture")
}

/// `X1 + X2 ⇌ 2 X1` fast with `c* = (1, 1)`.
pub fn autocatalytic_pair() -> ReactionNetwork {
    ReactionNetwork::new(
        names(2),
        vec![1.0, 1.0],
        vec![Reaction::new(vec![1, 1], vec![2, 0], Speed::Fast, 1.0)],
    )
    .expect("valid fixture")
}

/// `2 X1 ⇌ X2` and `X1 ⇌ 2 X2`, both fast, `c* = (1, 1)`.
pub fn non_autocatalytic_pair() -> ReactionNetwork {
    ReactionNetwork::new(
        names(2),
        vec![1.0, 1.0],
        vec![
            Reaction::new(vec![2, 0], vec![0, 1], Speed::Fast, 1.0),
            Reaction::new(vec![1, 0], vec![0, 2], Speed::Fast, 1.0),
        ],
    )
    .expect("valid fixture")
}

/// `X1 ⇌ X2` slow with `κ = 1`, `c* = (1, 1)`.
pub fn single_slow_pair() -> ReactionNetwork {
    ReactionNetwork::new(
        names(2),
        vec![1.0, 1.0],
        vec![Reaction::new(vec![1, 0], vec![0, 1], Speed::Slow, 1.0)],
    )
    .expect("valid fixture")
}

/// `X1 ⇌ X2` fast with `κ = 1`, `c* = (1, 1)`.
pub fn single_fast_pair() -> ReactionNetwork {
    ReactionNetwork::new(
        names(2),
        vec![1.0, 1.0],
        vec![Reaction::new(vec![1, 0], vec![0, 1], Speed::Fast, 1.0)],
    )
    .expect("valid fixture")
}
