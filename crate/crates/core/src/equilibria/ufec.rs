//! Enumeration of boundary fast equilibria and the unique-fast-equilibrium check.
//!
//! On a face `F = {i : c_i = 0}` every fast reaction is either switched off
//! (both monomials vanish), blocks equilibria (exactly one vanishes), or
//! imposes a log-linear constraint on the positive coordinates. Each face
//! without a blocking reaction carries a family `c_P = c*_P ∘ exp(y)`, `y` in
//! the null space of the active constraints. A family member that differs
//! from `Ψ(Q_fa c)` is a fast equilibrium that is not the minimizer.

use nalgebra::DVector;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use super::SlowManifoldSolver;
use crate::error::{Error, Result};
use crate::network::{rational, ReactionNetwork};

/// Faces are enumerated exhaustively, so the species count is capped.
pub const MAX_SPECIES: usize = 20;
const SAMPLES: usize = 10;
const STATE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEquilibrium {
    /// Species that vanish.
    pub face: Vec<usize>,
    /// Dimension of the equilibrium family on this face.
    pub dimension: usize,
    pub state: Vec<f64>,
    /// `Ψ(Q_fa state)`.
    pub minimizer: Vec<f64>,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UfecReport {
    pub holds: bool,
    pub faces_checked: usize,
    /// Faces carrying at least one fast equilibrium.
    pub faces_with_equilibria: usize,
    pub points_checked: usize,
    /// One entry per face where a non-minimizing equilibrium was found.
    pub counterexamples: Vec<BoundaryEquilibrium>,
}

enum Face {
    Blocked,
    Family { positive: Vec<usize>, basis: Vec<Vec<f64>> },
}

fn classify(net: &ReactionNetwork, zero: &[bool]) -> Face {
    let n = net.num_species();
    let positive: Vec<usize> = (0..n).filter(|&i| !zero[i]).collect();
    let vanishes = |m: &[u32]| m.iter().enumerate().any(|(i, &a)| a > 0 && zero[i]);
    let mut constraints = Vec::new();
    for r in net.reactions().iter().filter(|r| r.speed == crate::network::Speed::Fast) {
        match (vanishes(&r.alpha), vanishes(&r.beta)) {
            (true, true) => {}
            (false, false) => {
                let g = r.gamma();
                constraints.push(positive.iter().map(|&i| g[i]).collect::<Vec<i64>>());
            }
            _ => return Face::Blocked,
        }
    }
    let ns = rational::null_space(&rational::from_int_rows(&constraints), positive.len());
    let basis = ns
        .iter()
        .map(|v| {
            let ints = rational::to_coprime(v);
            let f: Vec<f64> = ints.iter().map(|x| x.to_f64().unwrap_or(0.0)).collect();
            let norm = f.iter().map(|x| x * x).sum::<f64>().sqrt();
            f.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    Face::Family { positive, basis }
}

/// Deterministic coefficients in `[-2, 2]` for the `k`-th family sample.
fn coefficient(k: usize, j: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let u = (k as f64 * (2.0 + j as f64).sqrt() + 0.5 * j as f64).fract();
    4.0 * u - 2.0
}

/// Checks whether every fast equilibrium on `∂C_+` is the energy minimizer of
/// its fast stoichiometric class. Interior equilibria always are.
pub fn ufec_check(net: &ReactionNetwork) -> Result<UfecReport> {
    let n = net.num_species();
    if n > MAX_SPECIES {
        return Err(Error::TooManySpecies { limit: MAX_SPECIES, species: n });
    }
    let solver = SlowManifoldSolver::new(net);
    let mut report = UfecReport {
        holds: true,
        faces_checked: 0,
        faces_with_equilibria: 0,
        points_checked: 0,
        counterexamples: Vec::new(),
    };
    for mask in 1u32..(1u32 << n) {
        let zero: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
        report.faces_checked += 1;
        let (positive, basis) = match classify(net, &zero) {
            Face::Blocked => continue,
            Face::Family { positive, basis } => (positive, basis),
        };
        report.faces_with_equilibria += 1;
        let samples = if basis.is_empty() { 1 } else { SAMPLES };
        for k in 0..samples {
            let mut c = vec![0.0; n];
            for (p, &i) in positive.iter().enumerate() {
                let y: f64 = basis.iter().enumerate().map(|(j, b)| coefficient(k, j) * b[p]).sum();
                c[i] = net.c_star()[i] * y.exp();
            }
            report.points_checked += 1;
            let q = solver.project(&c);
            let psi = solver.psi(q.as_slice())?;
            let cv = DVector::from_column_slice(&c);
            let distance = (&cv - &psi).amax();
            if distance > STATE_TOL * (1.0 + cv.amax()) {
                report.holds = false;
                report.counterexamples.push(BoundaryEquilibrium {
                    face: (0..n).filter(|&i| zero[i]).collect(),
                    dimension: basis.len(),
                    state: c,
                    minimizer: psi.as_slice().to_vec(),
                    distance,
                });
                break;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn autocatalytic_single_fails_at_zero() {
        let rep = ufec_check(&fixtures::autocatalytic_single()).unwrap();
        assert!(!rep.holds);
        assert_eq!(rep.counterexamples[0].face, vec![0]);
        assert_eq!(rep.counterexamples[0].state, vec![0.0]);
        assert!((rep.counterexamples[0].minimizer[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn autocatalytic_pair_fails_on_axis() {
        let rep = ufec_check(&fixtures::autocatalytic_pair()).unwrap();
        assert!(!rep.holds);
        let ce = &rep.counterexamples[0];
        assert_eq!(ce.face, vec![0]);
        assert_eq!(ce.dimension, 1);
        let z = ce.state[1];
        assert!((ce.minimizer[0] - z / 2.0).abs() < 1e-9 && (ce.minimizer[1] - z / 2.0).abs() < 1e-9);
    }

    #[test]
    fn fully_fast_network_has_origin_equilibrium() {
        // Γ_fa is the whole space, so Ψ ≡ c* while c = 0 is also a fast equilibrium
        let rep = ufec_check(&fixtures::non_autocatalytic_pair()).unwrap();
        assert!(!rep.holds);
        assert_eq!(rep.counterexamples[0].face, vec![0, 1]);
    }

    #[test]
    fn standard_examples_hold() {
        for net in [
            fixtures::three_species(),
            fixtures::five_species(0.3),
            fixtures::single_fast_pair(),
        ] {
            let rep = ufec_check(&net).unwrap();
            assert!(rep.holds, "{:?}", rep.counterexamples);
        }
    }
}
