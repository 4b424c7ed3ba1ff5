//! Slow manifold `Ψ` by entropy minimization, reduced quantities on `𝖰`,
//! and the fast-equilibrium checks.

pub mod ufec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradient::{self, GradientEvaluator, Scale};
use crate::network::ReactionNetwork;
use crate::value::Extended;
pub use ufec::{ufec_check, BoundaryEquilibrium, UfecReport};

/// Result of one `Ψ` evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiSolution {
    pub c: DVector<f64>,
    /// Lagrange multipliers; `DE(c) = Q_faᵀ μ`.
    pub mu: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// Multipliers hit the cap or some component is within tolerance of 0;
    /// `q` lies on or very near `∂𝖰`.
    pub near_boundary: bool,
}

/// Minimizes `E` on `{c ≥ 0 : Q_fa c = q}` by Newton's method on the dual.
#[derive(Debug, Clone)]
pub struct SlowManifoldSolver<'a> {
    net: &'a ReactionNetwork,
    qf: DMatrix<f64>,
    pub tol_primal: f64,
    pub mu_cap: f64,
    pub max_iter: usize,
}

impl<'a> SlowManifoldSolver<'a> {
    pub fn new(net: &'a ReactionNetwork) -> Self {
        SlowManifoldSolver { net, qf: net.coarse_graining(), tol_primal: 1e-12, mu_cap: 50.0, max_iter: 100 }
    }

    pub fn network(&self) -> &ReactionNetwork {
        self.net
    }

    pub fn coarse_graining(&self) -> &DMatrix<f64> {
        &self.qf
    }

    /// `Q_fa c`.
    pub fn project(&self, c: &[f64]) -> DVector<f64> {
        &self.qf * DVector::from_column_slice(c)
    }

    fn state(&self, mu: &DVector<f64>) -> DVector<f64> {
        let e = self.qf.tr_mul(mu);
        DVector::from_iterator(e.len(), e.iter().zip(self.net.c_star()).map(|(x, s)| s * x.exp()))
    }

    fn dual_objective(&self, mu: &DVector<f64>, q: &DVector<f64>) -> f64 {
        self.state(mu).sum() - mu.dot(q)
    }

    /// `Ψ(q)`.
    pub fn psi(&self, q: &[f64]) -> Result<DVector<f64>> {
        Ok(self.solve(q, None)?.c)
    }

    /// Full solve, optionally warm-started from multipliers `mu0`.
    pub fn solve(&self, q: &[f64], mu0: Option<&DVector<f64>>) -> Result<PsiSolution> {
        let m = self.qf.nrows();
        if q.len() != m {
            return Err(Error::Dimension { expected: m, got: q.len() });
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("q must be finite".into()));
        }
        let qv = DVector::from_column_slice(q);
        let tol = self.tol_primal * (1.0 + qv.amax());
        let mut mu = match mu0 {
            Some(m0) if m0.len() == m && m0.iter().all(|x| x.is_finite()) => m0.clone(),
            _ => DVector::zeros(m),
        };
        let mut c = self.state(&mu);
        let mut res = &self.qf * &c - &qv;
        let mut g = self.dual_objective(&mu, &qv);
        let mut near_boundary = false;
        let mut iterations = 0;
        while iterations < self.max_iter {
            if res.amax() <= tol {
                break;
            }
            iterations += 1;
            let hess = &self.qf * DMatrix::from_diagonal(&c) * self.qf.transpose();
            let step = match hess.clone().cholesky() {
                Some(ch) => ch.solve(&res),
                None => {
                    let reg = 1e-14 * hess.diagonal().amax().max(1e-300);
                    match (hess + DMatrix::identity(m, m) * reg).lu().solve(&res) {
                        Some(s) => s,
                        None => res.clone(),
                    }
                }
            };
            let slope = -res.dot(&step);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial = &mu - &step * t;
                let gt = self.dual_objective(&trial, &qv);
                if gt.is_finite() {
                    let ct = self.state(&trial);
                    let rt = &self.qf * &ct - &qv;
                    if gt <= g + 1e-4 * t * slope || rt.amax() < res.amax() {
                        mu = trial;
                        c = ct;
                        res = rt;
                        g = gt;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
            if mu.amax() >= self.mu_cap {
                near_boundary = true;
                break;
            }
        }
        let residual = res.amax();
        if residual > tol {
            if residual <= 1e-8 * (1.0 + qv.amax()) {
                near_boundary = true;
            } else {
                return Err(Error::Infeasible { residual });
            }
        }
        if c.iter().any(|&x| x <= tol) {
            near_boundary = true;
        }
        Ok(PsiSolution { c, mu, residual, iterations, near_boundary })
    }

    /// `DΨ(q) = diag(c) Q_faᵀ (Q_fa diag(c) Q_faᵀ)⁻¹` at `c = Ψ(q)`.
    pub fn d_psi(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        let sol = self.solve(q, None)?;
        self.d_psi_at(&sol.c)
    }

    pub fn d_psi_at(&self, c: &DVector<f64>) -> Result<DMatrix<f64>> {
        let d = DMatrix::from_diagonal(c);
        let hess = &self.qf * &d * self.qf.transpose();
        let inv = hess
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular reduced Hessian".into()))?;
        Ok(d * self.qf.transpose() * inv)
    }

    /// `𝖤(q) = E(Ψ(q))`.
    pub fn reduced_energy(&self, q: &[f64]) -> Result<f64> {
        gradient::energy(self.net, self.psi(q)?.as_slice())
    }

    /// `D𝖤(q)`, which equals the multipliers `μ`.
    pub fn reduced_energy_gradient(&self, q: &[f64]) -> Result<DVector<f64>> {
        Ok(self.solve(q, None)?.mu)
    }

    /// `𝖱*(q, ζ) = R*_sl(Ψ(q), Q_faᵀ ζ)`.
    pub fn reduced_dual_dissipation(&self, q: &[f64], zeta: &[f64]) -> Result<f64> {
        let c = self.psi(q)?;
        let xi = self.qf.tr_mul(&DVector::from_column_slice(zeta));
        let ev = GradientEvaluator::new(self.net, Scale::Limit)?;
        Ok(ev.dual_parts(c.as_slice(), xi.as_slice())?.0)
    }

    /// `𝖲(q) = S_sl(Ψ(q))`.
    pub fn reduced_slope(&self, q: &[f64]) -> Result<f64> {
        let c = self.psi(q)?;
        let ev = GradientEvaluator::new(self.net, Scale::Limit)?;
        Ok(ev.slope_parts(c.as_slice())?.0)
    }

    /// `𝖱(q, w) = R̃(Ψ(q), w)`.
    pub fn reduced_primal(&self, q: &[f64], w: &[f64]) -> Result<Extended> {
        let c = self.psi(q)?;
        GradientEvaluator::new(self.net, Scale::Limit)?.reduced_primal(c.as_slice(), w)
    }

    /// Right-hand side `Q_fa R_sl(Ψ(q))` of the reduced equation.
    pub fn reduced_rate(&self, q: &[f64]) -> Result<DVector<f64>> {
        let c = self.psi(q)?;
        Ok(&self.qf * self.net.rate_parts(c.as_slice())?.0)
    }

    /// `Ψ(Q_fa c0)`.
    pub fn well_prepare(&self, c0: &[f64]) -> Result<DVector<f64>> {
        self.net.check_state(c0)?;
        self.psi(self.project(c0).as_slice())
    }
}

/// `a_ρ(q1, q2)`, the smaller root of `(q1 − a)(q2 − a) = a/ρ`.
pub fn a_rho(q1: f64, q2: f64, rho: f64) -> f64 {
    let b = 1.0 + rho * (q1 + q2);
    let disc = (b * b - 4.0 * rho * rho * q1 * q2).max(0.0);
    2.0 * rho * q1 * q2 / (b + disc.sqrt())
}

/// Closed-form `Ψ_ρ(q) = (q1 − a, q2 − a, a, q3, q4)` for the five-species network.
pub fn psi_closed_form_5species(q: &[f64], rho: f64) -> Result<DVector<f64>> {
    if q.len() != 4 {
        return Err(Error::Dimension { expected: 4, got: q.len() });
    }
    if !(rho > 0.0) || q.iter().any(|&x| x < 0.0) {
        return Err(Error::Invalid("closed form needs q ≥ 0 and rho > 0".into()));
    }
    let a = a_rho(q[0], q[1], rho);
    Ok(DVector::from_vec(vec![q[0] - a, q[1] - a, a, q[2], q[3]]))
}

/// Outcome of the positivity/monotonicity test for a shift direction `q̄`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub q_bar: Vec<f64>,
    pub verified: bool,
    pub samples: usize,
    /// Human-readable reason for the first failure, if any.
    pub failure: Option<String>,
}

/// Sample states used for shift verification: a full grid for small networks,
/// a deterministic quasi-random set otherwise.
fn sample_states(n: usize) -> Vec<Vec<f64>> {
    let levels = [0.0, 0.5, 2.0];
    if n <= 6 {
        let total = levels.len().pow(n as u32);
        (0..total)
            .map(|mut k| {
                (0..n)
                    .map(|_| {
                        let l = levels[k % levels.len()];
                        k /= levels.len();
                        l
                    })
                    .collect()
            })
            .collect()
    } else {
        (0..200)
            .map(|k| {
                (0..n)
                    .map(|i| {
                        let u = ((k + 1) as f64 * (2.0 + i as f64).sqrt()).fract();
                        if u < 0.3 {
                            0.0
                        } else {
                            3.0 * u
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Check `Ψ(q + θq̄) > 0` and `Ψ(q + θq̄) ≥ Ψ(q) − 1e−10` for θ ∈ {1, ½, ¼}
/// over a sample of `q ∈ 𝖰`.
pub fn verify_positivity_shift(net: &ReactionNetwork, q_bar: &[f64]) -> Result<ShiftReport> {
    let solver = SlowManifoldSolver::new(net);
    if q_bar.len() != net.m_fast() {
        return Err(Error::Dimension { expected: net.m_fast(), got: q_bar.len() });
    }
    let qb = DVector::from_column_slice(q_bar);
    let mut samples = 0;
    for c in sample_states(net.num_species()) {
        let q = solver.project(&c);
        let base = solver.psi(q.as_slice())?;
        for theta in [1.0, 0.5, 0.25] {
            samples += 1;
            let shifted = solver.psi((&q + &qb * theta).as_slice())?;
            let fail = |msg: String| ShiftReport {
                q_bar: q_bar.to_vec(),
                verified: false,
                samples,
                failure: Some(msg),
            };
            if let Some(i) = shifted.iter().position(|&x| !(x > 0.0)) {
                return Ok(fail(format!("component {i} not positive at q = {:?}, theta = {theta}", q.as_slice())));
            }
            if let Some(i) = (0..base.len()).find(|&i| shifted[i] < base[i] - 1e-10) {
                return Ok(fail(format!("component {i} decreases at q = {:?}, theta = {theta}", q.as_slice())));
            }
        }
    }
    Ok(ShiftReport { q_bar: q_bar.to_vec(), verified: true, samples, failure: None })
}

/// Candidate `q̄ = Q_fa 𝟙`, returned together with its verification.
pub fn positivity_shift_direction(net: &ReactionNetwork) -> Result<ShiftReport> {
    let ones = DVector::from_element(net.num_species(), 1.0);
    let q_bar = net.coarse_graining() * ones;
    verify_positivity_shift(net, q_bar.as_slice())
}
