//! Fast-slow detailed-balance reaction networks with cosh-type gradient structure.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod convergence;
pub mod dissipation;
pub mod dynamics;
pub mod equilibria;
pub mod error;
pub mod fixtures;
pub mod gradient;
pub mod network;
pub mod value;

pub use convergence::{RecoveryReport, SweepResult};
pub use dissipation::DissipationReport;
pub use dynamics::{IntegratorOptions, Trajectory};
pub use equilibria::{SlowManifoldSolver, UfecReport};
pub use error::{Error, Result};
pub use gradient::{GradientEvaluator, Scale, Shape};
pub use network::io::{network_to_json, parse_network};
pub use network::{
    verify_detailed_balance, Reaction, ReactionNetwork, Speed, StoichiometricStructure, TiltVector,
};
pub use value::{Extended, Violation};
