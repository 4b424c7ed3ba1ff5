//! Detailed-balance mass-action networks.
//!
//! A network is stored in symmetric form: stoichiometric coefficients
//! `alpha`, `beta`, the equilibrium `c_star` and symmetric rate constants
//! `kappa`. Raw forward/backward rates are converted on construction.

pub mod io;
pub mod rational;
mod stoich;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use stoich::StoichiometricStructure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speed {
    Fast,
    Slow,
}

/// A single reversible reaction `alpha ⇌ beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reaction {
    pub alpha: Vec<u32>,
    pub beta: Vec<u32>,
    pub speed: Speed,
    pub kappa: f64,
}

impl Reaction {
    pub fn new(alpha: Vec<u32>, beta: Vec<u32>, speed: Speed, kappa: f64) -> Self {
        Reaction { alpha, beta, speed, kappa }
    }

    pub fn gamma(&self) -> Vec<i64> {
        self.alpha.iter().zip(&self.beta).map(|(&a, &b)| a as i64 - b as i64).collect()
    }
}

/// Componentwise tilt `η`; `c*` becomes `(e^{η_i} c*_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltVector {
    pub eta: Vec<f64>,
}

impl TiltVector {
    pub fn new(eta: Vec<f64>) -> Self {
        TiltVector { eta }
    }

    pub fn zero(n: usize) -> Self {
        TiltVector { eta: vec![0.0; n] }
    }

    pub fn is_zero(&self) -> bool {
        self.eta.iter().all(|&x| x == 0.0)
    }
}

#[derive(Debug, Clone)]
pub struct ReactionNetwork {
    species: Vec<String>,
    reactions: Vec<Reaction>,
    c_star: Vec<f64>,
    structure: StoichiometricStructure,
    q_fast_user: Option<Vec<Vec<i64>>>,
    // per reaction: log c*^α, log c*^β
    log_cs_alpha: Vec<f64>,
    log_cs_beta: Vec<f64>,
}

/// Forward and backward parts of one reaction at a state, each already
/// multiplied by `δ*_r / c*^{α}` resp. `δ*_r / c*^{β}`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Flux {
    pub fw: f64,
    pub bw: f64,
}

impl ReactionNetwork {
    pub fn new(species: Vec<String>, c_star: Vec<f64>, reactions: Vec<Reaction>) -> Result<Self> {
        let n = species.len();
        if c_star.len() != n {
            return Err(Error::Dimension { expected: n, got: c_star.len() });
        }
        for (i, &c) in c_star.iter().enumerate() {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Invalid(format!("c_star[{i}] = {c} must be finite and positive")));
            }
        }
        for (r, rx) in reactions.iter().enumerate() {
            if rx.alpha.len() != n {
                return Err(Error::Dimension { expected: n, got: rx.alpha.len() });
            }
            if rx.beta.len() != n {
                return Err(Error::Dimension { expected: n, got: rx.beta.len() });
            }
            if !(rx.kappa.is_finite() && rx.kappa > 0.0) {
                return Err(Error::NonpositiveRate(r));
            }
            if rx.alpha == rx.beta {
                return Err(Error::NullStoichiometricVector(r));
            }
        }
        let gammas: Vec<Vec<i64>> = reactions.iter().map(Reaction::gamma).collect();
        let fast: Vec<bool> = reactions.iter().map(|r| r.speed == Speed::Fast).collect();
        let structure = StoichiometricStructure::compute(n, &gammas, &fast)?;
        let log_cs: Vec<f64> = c_star.iter().map(|c| c.ln()).collect();
        let log_cs_alpha = reactions.iter().map(|r| log_monomial_exact(&log_cs, &r.alpha)).collect();
        let log_cs_beta = reactions.iter().map(|r| log_monomial_exact(&log_cs, &r.beta)).collect();
        Ok(ReactionNetwork {
            species,
            reactions,
            c_star,
            structure,
            q_fast_user: None,
            log_cs_alpha,
            log_cs_beta,
        })
    }

    /// Build from raw forward/backward rates by solving the detailed-balance system.
    pub fn from_rates(
        species: Vec<String>,
        reactions: Vec<(Vec<u32>, Vec<u32>, Speed)>,
        k_fw: &[f64],
        k_bw: &[f64],
    ) -> Result<Self> {
        let alpha: Vec<Vec<u32>> = reactions.iter().map(|r| r.0.clone()).collect();
        let beta: Vec<Vec<u32>> = reactions.iter().map(|r| r.1.clone()).collect();
        for (r, (a, b)) in alpha.iter().zip(&beta).enumerate() {
            if a == b {
                return Err(Error::NullStoichiometricVector(r));
            }
        }
        let (c_star, kappa) = verify_detailed_balance(species.len(), &alpha, &beta, k_fw, k_bw)?;
        let rx = reactions
            .into_iter()
            .zip(kappa)
            .map(|((a, b, s), k)| Reaction::new(a, b, s, k))
            .collect();
        Self::new(species, c_star, rx)
    }

    /// Replace the coarse-graining operator by user-chosen rows.
    ///
    /// The rows must be linearly independent and span exactly `Γ_fa^⊥`.
    pub fn with_coarse_graining(mut self, rows: Vec<Vec<i64>>) -> Result<Self> {
        let n = self.species.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Invalid("q_fast rows must have one entry per species".into()));
        }
        let rat = rational::from_int_rows(&rows);
        if rational::rank(&rat, n) != rows.len()
            || !rational::same_row_space(&rows, &self.structure.q_fast, n)
        {
            return Err(Error::Invalid(
                "q_fast rows must form a basis of the annihilator of the fast stoichiometric subspace"
                    .into(),
            ));
        }
        self.q_fast_user = Some(rows);
        Ok(self)
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn num_species(&self) -> usize {
        self.species.len()
    }

    pub fn num_reactions(&self) -> usize {
        self.reactions.len()
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn c_star(&self) -> &[f64] {
        &self.c_star
    }

    pub fn kappa(&self) -> Vec<f64> {
        self.reactions.iter().map(|r| r.kappa).collect()
    }

    pub fn structure(&self) -> &StoichiometricStructure {
        &self.structure
    }

    pub fn gamma(&self, r: usize) -> Vec<i64> {
        self.reactions[r].gamma()
    }

    pub fn gamma_f64(&self, r: usize) -> DVector<f64> {
        DVector::from_iterator(self.num_species(), self.gamma(r).into_iter().map(|x| x as f64))
    }

    pub fn is_fast(&self, r: usize) -> bool {
        self.reactions[r].speed == Speed::Fast
    }

    pub fn has_fast(&self) -> bool {
        self.reactions.iter().any(|r| r.speed == Speed::Fast)
    }

    /// Integer rows of the coarse-graining operator `Q_fa`.
    pub fn coarse_graining_rows(&self) -> &[Vec<i64>] {
        self.q_fast_user.as_deref().unwrap_or(&self.structure.q_fast)
    }

    pub fn has_custom_coarse_graining(&self) -> bool {
        self.q_fast_user.is_some()
    }

    /// `Q_fa` as an `m_fa × i*` matrix.
    pub fn coarse_graining(&self) -> DMatrix<f64> {
        stoich::rows_to_matrix(self.coarse_graining_rows(), self.num_species())
    }

    pub fn m_fast(&self) -> usize {
        self.coarse_graining_rows().len()
    }

    /// `log δ*_r`.
    pub fn log_delta_star(&self, r: usize) -> f64 {
        0.5 * (self.log_cs_alpha[r] + self.log_cs_beta[r])
    }

    pub fn delta_star(&self, r: usize) -> f64 {
        self.log_delta_star(r).exp()
    }

    /// Rate constant including the `1/ε` factor for fast reactions.
    pub fn kappa_eps(&self, r: usize, eps: f64) -> f64 {
        match self.reactions[r].speed {
            Speed::Fast => self.reactions[r].kappa / eps,
            Speed::Slow => self.reactions[r].kappa,
        }
    }

    pub fn check_state(&self, c: &[f64]) -> Result<()> {
        if c.len() != self.num_species() {
            return Err(Error::Dimension { expected: self.num_species(), got: c.len() });
        }
        for (i, &v) in c.iter().enumerate() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::NegativeState { index: i, value: v });
            }
        }
        Ok(())
    }

    /// `δ*_r c^{α}/c*^{α}` and `δ*_r c^{β}/c*^{β}`.
    pub(crate) fn flux(&self, r: usize, c: &[f64]) -> Flux {
        let rx = &self.reactions[r];
        let mu = (0.5 * (self.log_cs_beta[r] - self.log_cs_alpha[r])).exp();
        Flux { fw: mu * monomial(c, &rx.alpha), bw: monomial(c, &rx.beta) / mu }
    }

    /// Logs of `c^{α}` and `c^{β}`; `-inf` when a monomial vanishes.
    pub(crate) fn log_monomials(&self, r: usize, log_c: &[f64]) -> (f64, f64) {
        let rx = &self.reactions[r];
        (log_monomial(log_c, &rx.alpha), log_monomial(log_c, &rx.beta))
    }

    /// Slow and fast parts `(R_sl(c), R_fa(c))`, the latter without the `1/ε`.
    pub fn rate_parts(&self, c: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        self.check_state(c)?;
        Ok(self.rate_parts_unchecked(c))
    }

    /// Polynomial extension of [`Self::rate_parts`] to all of `R^{i*}`.
    pub(crate) fn rate_parts_unchecked(&self, c: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let n = self.num_species();
        let mut slow = DVector::zeros(n);
        let mut fast = DVector::zeros(n);
        for r in 0..self.num_reactions() {
            let f = self.flux(r, c);
            let j = -self.reactions[r].kappa * (f.fw - f.bw);
            let target = if self.is_fast(r) { &mut fast } else { &mut slow };
            for (i, g) in self.gamma(r).into_iter().enumerate() {
                target[i] += j * g as f64;
            }
        }
        (slow, fast)
    }

    /// `R_ε(c) = R_sl(c) + R_fa(c)/ε`.
    pub fn reaction_rate(&self, c: &[f64], eps: f64) -> Result<DVector<f64>> {
        check_eps(eps)?;
        let (s, f) = self.rate_parts(c)?;
        Ok(s + f / eps)
    }

    /// Analytic Jacobian of `R_ε`, valid on the closed cone.
    pub fn jacobian(&self, c: &[f64], eps: f64) -> Result<DMatrix<f64>> {
        check_eps(eps)?;
        self.check_state(c)?;
        Ok(self.jacobian_unchecked(c, eps))
    }

    pub(crate) fn jacobian_unchecked(&self, c: &[f64], eps: f64) -> DMatrix<f64> {
        let n = self.num_species();
        let mut jac = DMatrix::zeros(n, n);
        for r in 0..self.num_reactions() {
            let rx = &self.reactions[r];
            let mu = (0.5 * (self.log_cs_beta[r] - self.log_cs_alpha[r])).exp();
            let k = self.kappa_eps(r, eps);
            let gamma = self.gamma(r);
            for j in 0..n {
                let d = mu * d_monomial(c, &rx.alpha, j) - d_monomial(c, &rx.beta, j) / mu;
                if d == 0.0 {
                    continue;
                }
                for (i, &g) in gamma.iter().enumerate() {
                    jac[(i, j)] -= k * d * g as f64;
                }
            }
        }
        jac
    }

    /// Tilted network with `c*` replaced by `(e^{η_i} c*_i)`, and the constant
    /// `Σ (1 − e^{η_i}) c*_i`.
    pub fn tilt(&self, eta: &TiltVector) -> Result<(ReactionNetwork, f64)> {
        if eta.eta.len() != self.num_species() {
            return Err(Error::Dimension { expected: self.num_species(), got: eta.eta.len() });
        }
        if eta.eta.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("tilt must be finite".into()));
        }
        let c_star: Vec<f64> = self.c_star.iter().zip(&eta.eta).map(|(c, e)| c * e.exp()).collect();
        let e_eta = self.c_star.iter().zip(&eta.eta).map(|(c, e)| -c * e.exp_m1()).sum();
        let mut tilted = ReactionNetwork::new(self.species.clone(), c_star, self.reactions.clone())?;
        tilted.q_fast_user = self.q_fast_user.clone();
        Ok((tilted, e_eta))
    }

    /// Same `(A, B, κ̂)` with a different equilibrium.
    pub fn with_c_star(&self, c_star: Vec<f64>) -> Result<ReactionNetwork> {
        let mut net = ReactionNetwork::new(self.species.clone(), c_star, self.reactions.clone())?;
        net.q_fast_user = self.q_fast_user.clone();
        Ok(net)
    }

    /// Network keeping only the reactions selected by `keep`.
    pub fn subnetwork(&self, keep: impl Fn(&Reaction) -> bool) -> Result<ReactionNetwork> {
        let rx = self.reactions.iter().filter(|r| keep(r)).cloned().collect();
        ReactionNetwork::new(self.species.clone(), self.c_star.clone(), rx)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(Error::Invalid(format!("eps must be positive, got {eps}")))
    }
}

/// `c^α` with `0^0 = 1`.
pub fn monomial(c: &[f64], alpha: &[u32]) -> f64 {
    c.iter()
        .zip(alpha)
        .filter(|(_, &a)| a > 0)
        .map(|(&x, &a)| x.powi(a as i32))
        .product()
}

fn d_monomial(c: &[f64], alpha: &[u32], j: usize) -> f64 {
    if alpha[j] == 0 {
        return 0.0;
    }
    let mut p = alpha[j] as f64 * c[j].powi(alpha[j] as i32 - 1);
    for (i, (&x, &a)) in c.iter().zip(alpha).enumerate() {
        if i != j && a > 0 {
            p *= x.powi(a as i32);
        }
    }
    p
}

fn log_monomial(log_c: &[f64], alpha: &[u32]) -> f64 {
    let mut s = 0.0;
    for (&l, &a) in log_c.iter().zip(alpha) {
        if a > 0 {
            if l == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            s += a as f64 * l;
        }
    }
    s
}

fn log_monomial_exact(log_c: &[f64], alpha: &[u32]) -> f64 {
    log_c.iter().zip(alpha).map(|(&l, &a)| a as f64 * l).sum()
}

/// Solve `−γ^r · log c* = log(k_fw/k_bw)` for the minimum-norm `log c*`, and
/// return `(c*, κ̂)` with `κ̂_r = k_fw_r c*^{α^r} / δ*_r`.
pub fn verify_detailed_balance(
    species: usize,
    alpha: &[Vec<u32>],
    beta: &[Vec<u32>],
    k_fw: &[f64],
    k_bw: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let nr = alpha.len();
    if beta.len() != nr || k_fw.len() != nr || k_bw.len() != nr {
        return Err(Error::Invalid("reaction data must have equal lengths".into()));
    }
    for r in 0..nr {
        if !(k_fw[r].is_finite() && k_fw[r] > 0.0 && k_bw[r].is_finite() && k_bw[r] > 0.0) {
            return Err(Error::NonpositiveRate(r));
        }
        if alpha[r].len() != species || beta[r].len() != species {
            return Err(Error::Dimension { expected: species, got: alpha[r].len().min(beta[r].len()) });
        }
    }
    let log_c = if nr == 0 {
        DVector::zeros(species)
    } else {
        let m = DMatrix::from_fn(nr, species, |r, i| beta[r][i] as f64 - alpha[r][i] as f64);
        let b = DVector::from_fn(nr, |r, _| (k_fw[r] / k_bw[r]).ln());
        let svd = m.clone().svd(true, true);
        let tol = 1e-12 * svd.singular_values.max().max(1.0);
        let x = svd.solve(&b, tol).map_err(|e| Error::Numerical(e.to_string()))?;
        let residual = (&m * &x - &b).amax();
        if residual > 1e-10 * (1.0 + b.amax()) {
            return Err(Error::NoDetailedBalance { residual });
        }
        x
    };
    let c_star: Vec<f64> = log_c.iter().map(|l| l.exp()).collect();
    let kappa = (0..nr)
        .map(|r| {
            let la = log_monomial_exact(log_c.as_slice(), &alpha[r]);
            let lb = log_monomial_exact(log_c.as_slice(), &beta[r]);
            k_fw[r] * (0.5 * (la - lb)).exp()
        })
        .collect();
    Ok((c_star, kappa))
}
