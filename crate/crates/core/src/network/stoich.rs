//! Stoichiometric subspaces and conservation operators, computed exactly.

use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::rational::{self, from_int_rows, RatMatrix};
use crate::error::Result;

/// Bases of `Γ`, `Γ_fa` and the conservation operators `Q`, `Q_fast`.
///
/// All bases are stored as lists of integer vectors (each vector has length
/// `i*`). `gamma_basis` and `gamma_fast_basis` hold the basis vectors of the
/// subspaces; `q` and `q_fast` hold the rows of the operators. The first `m`
/// rows of `q_fast` are exactly the rows of `q`; the remaining rows are the
/// canonical basis of `Γ_fa^⊥ ∩ Γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoichiometricStructure {
    pub species: usize,
    pub gamma_basis: Vec<Vec<i64>>,
    pub gamma_fast_basis: Vec<Vec<i64>>,
    pub q: Vec<Vec<i64>>,
    pub q_fast: Vec<Vec<i64>>,
}

impl StoichiometricStructure {
    /// `gammas` are all stoichiometric vectors, `fast` flags the fast ones.
    pub fn compute(species: usize, gammas: &[Vec<i64>], fast: &[bool]) -> Result<Self> {
        let all = from_int_rows(gammas);
        let fast_rows: Vec<Vec<i64>> = gammas
            .iter()
            .zip(fast)
            .filter(|(_, &f)| f)
            .map(|(g, _)| g.clone())
            .collect();
        let fast_rat = from_int_rows(&fast_rows);

        let gamma_basis = rational::canonical_basis(&all, species)?;
        let gamma_fast_basis = rational::canonical_basis(&fast_rat, species)?;
        let q = rational::canonical_basis(&rational::null_space(&all, species), species)?;

        // Γ_fa^⊥ ∩ Γ: coefficients a with Σ_j a_j (γ_f · g_j) = 0 for every fast γ_f.
        let g_rat = from_int_rows(&gamma_basis);
        let constraints: RatMatrix = fast_rat
            .iter()
            .map(|gf| g_rat.iter().map(|gj| dot(gf, gj)).collect())
            .collect();
        let coeffs = rational::null_space(&constraints, g_rat.len());
        let complement: RatMatrix = coeffs
            .iter()
            .map(|a| {
                (0..species)
                    .map(|i| {
                        a.iter()
                            .zip(&g_rat)
                            .fold(BigRational::zero(), |acc, (aj, gj)| acc + aj * &gj[i])
                    })
                    .collect()
            })
            .collect();
        let mut q_fast = q.clone();
        q_fast.extend(rational::canonical_basis(&complement, species)?);

        Ok(StoichiometricStructure { species, gamma_basis, gamma_fast_basis, q, q_fast })
    }

    /// `m = dim Γ^⊥`.
    pub fn m(&self) -> usize {
        self.q.len()
    }

    /// `m_fa = dim Γ_fa^⊥`.
    pub fn m_fast(&self) -> usize {
        self.q_fast.len()
    }

    pub fn dim_gamma(&self) -> usize {
        self.gamma_basis.len()
    }

    pub fn dim_gamma_fast(&self) -> usize {
        self.gamma_fast_basis.len()
    }

    /// `Q` as an `m × i*` float matrix.
    pub fn q_matrix(&self) -> DMatrix<f64> {
        rows_to_matrix(&self.q, self.species)
    }

    /// `Q_fast` as an `m_fa × i*` float matrix.
    pub fn q_fast_matrix(&self) -> DMatrix<f64> {
        rows_to_matrix(&self.q_fast, self.species)
    }

    /// Basis of `Γ` as the columns of an `i* × dim Γ` matrix.
    pub fn gamma_matrix(&self) -> DMatrix<f64> {
        rows_to_matrix(&self.gamma_basis, self.species).transpose()
    }

    /// Basis of `Γ_fa` as the columns of an `i* × dim Γ_fa` matrix.
    pub fn gamma_fast_matrix(&self) -> DMatrix<f64> {
        rows_to_matrix(&self.gamma_fast_basis, self.species).transpose()
    }
}

fn dot(a: &[BigRational], b: &[BigRational]) -> BigRational {
    a.iter().zip(b).fold(BigRational::zero(), |acc, (x, y)| acc + x * y)
}

pub(crate) fn rows_to_matrix(rows: &[Vec<i64>], ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j] as f64)
}
