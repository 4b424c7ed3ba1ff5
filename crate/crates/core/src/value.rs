//! Extended-real results for quantities that may legitimately be `+∞`.

use serde::{Deserialize, Serialize};

/// Which constraint made a dissipation-type quantity infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// Velocity has a component outside the stoichiometric subspace.
    OutsideStoichiometricSubspace { norm: f64 },
    /// Velocity lies in the stoichiometric subspace but not in the span of the
    /// reactions that are active at a boundary state.
    DegenerateBoundary { norm: f64 },
    /// Covector is not orthogonal to the fast stoichiometric subspace.
    NotOrthogonalToFast { norm: f64 },
    /// State is not a fast equilibrium.
    OffFastEquilibria { slope_fast: f64 },
    /// Maximizer escaped the parameter cap.
    Unbounded { cap: f64 },
}

/// A value in `[0, +∞]` (or `ℝ ∪ {+∞}`) with provenance for the infinite case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Extended {
    Finite(f64),
    Infinite(Violation),
}

impl Extended {
    pub fn is_finite(&self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(*v),
            Extended::Infinite(_) => None,
        }
    }

    /// Lossy view as `f64`, mapping the infinite case to `f64::INFINITY`.
    pub fn to_f64(&self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }

    pub fn violation(&self) -> Option<&Violation> {
        match self {
            Extended::Finite(_) => None,
            Extended::Infinite(v) => Some(v),
        }
    }
}

impl From<f64> for Extended {
    fn from(v: f64) -> Self {
        Extended::Finite(v)
    }
}
