//! Cosh-type gradient structure: energy, dissipation potentials and slopes.

pub mod legendre;
pub mod phi;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{ReactionNetwork, TiltVector};
use crate::value::{Extended, Violation};
use legendre::{maximize, weighted_cosh_star, weighted_cosh_star_prime, LegendreOptions, Sup};

/// `λ_B(s) = s log s − s + 1`, with `λ_B(0) = 1`.
pub fn lambda_b(s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else {
        s * s.ln() - s + 1.0
    }
}

/// Relative Boltzmann entropy `Σ c*_i λ_B(c_i/c*_i)`.
pub fn energy(net: &ReactionNetwork, c: &[f64]) -> Result<f64> {
    net.check_state(c)?;
    Ok(c.iter().zip(net.c_star()).map(|(&x, &s)| s * lambda_b(x / s)).sum())
}

/// `E(c) − η·c`.
pub fn tilted_energy(net: &ReactionNetwork, c: &[f64], eta: &TiltVector) -> Result<f64> {
    let e = energy(net, c)?;
    Ok(e - c.iter().zip(&eta.eta).map(|(x, h)| x * h).sum::<f64>())
}

fn check_interior(net: &ReactionNetwork, c: &[f64]) -> Result<()> {
    net.check_state(c)?;
    if let Some(i) = c.iter().position(|&x| x == 0.0) {
        return Err(Error::Invalid(format!("state component {i} vanishes; derivative undefined")));
    }
    Ok(())
}

/// `DE(c) = (log(c_i/c*_i))_i`.
pub fn d_energy(net: &ReactionNetwork, c: &[f64]) -> Result<DVector<f64>> {
    check_interior(net, c)?;
    Ok(DVector::from_iterator(c.len(), c.iter().zip(net.c_star()).map(|(x, s)| (x / s).ln())))
}

/// `D²E(c) = diag(1/c_i)`.
pub fn hessian_energy(net: &ReactionNetwork, c: &[f64]) -> Result<DMatrix<f64>> {
    check_interior(net, c)?;
    Ok(DMatrix::from_diagonal(&DVector::from_iterator(c.len(), c.iter().map(|x| 1.0 / x))))
}

/// `C*(ζ) = 4 cosh(ζ/2) − 4`.
pub fn cosh_star(zeta: f64) -> f64 {
    let s = (0.25 * zeta).sinh();
    8.0 * s * s
}

pub fn cosh_star_prime(zeta: f64) -> f64 {
    2.0 * (0.5 * zeta).sinh()
}

/// `C(s) = 2s arsinh(s/2) − 2√(4+s²) + 4`.
pub fn cosh_primal(s: f64) -> f64 {
    let root = (4.0 + s * s).sqrt();
    2.0 * s * (0.5 * s).asinh() - 2.0 * s * s / (root + 2.0)
}

pub fn cosh_primal_prime(s: f64) -> f64 {
    2.0 * (0.5 * s).asinh()
}

/// Which member of the `R_ε` family is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Eps(f64),
    /// The effective `ε → 0` potentials.
    Limit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    #[default]
    Cosh,
    /// `Φ(ζ) = ζ²/2` with logarithmic-mean mobility.
    Quadratic,
}

#[derive(Debug, Clone)]
pub struct GradientEvaluator<'a> {
    net: &'a ReactionNetwork,
    scale: Scale,
    shape: Shape,
    pub legendre: LegendreOptions,
    /// Relative tolerance for `ξ ⊥ Γ_fa`.
    pub orth_tol: f64,
    /// Relative tolerance for `S_fa(c) = 0`.
    pub eq_tol: f64,
}

fn log_state(c: &[f64]) -> Vec<f64> {
    c.iter().map(|x| x.ln()).collect()
}

impl<'a> GradientEvaluator<'a> {
    pub fn new(net: &'a ReactionNetwork, scale: Scale) -> Result<Self> {
        if let Scale::Eps(e) = scale {
            if !(e.is_finite() && e > 0.0) {
                return Err(Error::Invalid(format!("eps must be positive, got {e}")));
            }
        }
        Ok(GradientEvaluator {
            net,
            scale,
            shape: Shape::Cosh,
            legendre: LegendreOptions::default(),
            orth_tol: 1e-10,
            eq_tol: 1e-12,
        })
    }

    pub fn with_shape(mut self, shape: Shape) -> Self {
        self.shape = shape;
        self
    }

    pub fn network(&self) -> &ReactionNetwork {
        self.net
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn energy(&self, c: &[f64]) -> Result<f64> {
        energy(self.net, c)
    }

    pub fn d_energy(&self, c: &[f64]) -> Result<DVector<f64>> {
        d_energy(self.net, c)
    }

    pub fn hessian_energy(&self, c: &[f64]) -> Result<DMatrix<f64>> {
        hessian_energy(self.net, c)
    }

    fn speed_factor(&self, r: usize) -> Option<f64> {
        match (self.net.is_fast(r), self.scale) {
            (false, _) => Some(1.0),
            (true, Scale::Eps(e)) => Some(1.0 / e),
            (true, Scale::Limit) => None,
        }
    }

    /// `log(κ_r √(c^α c^β))`, without any `1/ε`.
    fn log_prefactor(&self, r: usize, log_c: &[f64]) -> f64 {
        let (la, lb) = self.net.log_monomials(r, log_c);
        self.net.reactions()[r].kappa.ln() + 0.5 * (la + lb)
    }

    /// Mobility `κ_r δ*_r Λ(a, b)` for the quadratic shape.
    fn quadratic_mobility(&self, r: usize, c: &[f64]) -> f64 {
        let f = self.net.flux(r, c);
        self.net.reactions()[r].kappa * phi::log_mean(f.fw, f.bw)
    }

    /// `(R*_sl(c, ξ), R*_fa(c, ξ))`, the fast part without `1/ε`.
    pub fn dual_parts(&self, c: &[f64], xi: &[f64]) -> Result<(f64, f64)> {
        self.net.check_state(c)?;
        self.check_len(xi)?;
        let log_c = log_state(c);
        let (mut sl, mut fa) = (0.0, 0.0);
        for r in 0..self.net.num_reactions() {
            let s = gamma_dot(&self.net.gamma(r), xi);
            let term = match self.shape {
                Shape::Cosh => weighted_cosh_star(self.log_prefactor(r, &log_c), s),
                Shape::Quadratic => 0.5 * self.quadratic_mobility(r, c) * s * s,
            };
            if self.net.is_fast(r) {
                fa += term;
            } else {
                sl += term;
            }
        }
        Ok((sl, fa))
    }

    /// `R*_ε(c, ξ)`, or `R*_eff(c, ξ)` in the limit.
    pub fn dual_dissipation(&self, c: &[f64], xi: &[f64]) -> Result<Extended> {
        let (sl, fa) = self.dual_parts(c, xi)?;
        match self.scale {
            Scale::Eps(e) => Ok(Extended::Finite(sl + fa / e)),
            Scale::Limit => {
                let norm = self.fast_component(xi);
                let xnorm = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > self.orth_tol * xnorm {
                    Ok(Extended::Infinite(Violation::NotOrthogonalToFast { norm }))
                } else {
                    Ok(Extended::Finite(sl))
                }
            }
        }
    }

    /// Length of the orthogonal projection of `ξ` onto `Γ_fa`.
    fn fast_component(&self, xi: &[f64]) -> f64 {
        let g = self.net.structure().gamma_fast_matrix();
        if g.ncols() == 0 {
            return 0.0;
        }
        let x = DVector::from_column_slice(xi);
        let gtg = g.tr_mul(&g);
        let coef = gtg.cholesky().map(|ch| ch.solve(&g.tr_mul(&x)));
        match coef {
            Some(a) => (&g * a).norm(),
            None => f64::INFINITY,
        }
    }

    /// `∂_ξ R*_ε(c, ξ)`; in the limit only the slow part.
    pub fn dual_gradient(&self, c: &[f64], xi: &[f64]) -> Result<DVector<f64>> {
        self.net.check_state(c)?;
        self.check_len(xi)?;
        let log_c = log_state(c);
        let mut out = DVector::zeros(self.net.num_species());
        for r in 0..self.net.num_reactions() {
            let Some(k) = self.speed_factor(r) else { continue };
            let s = gamma_dot(&self.net.gamma(r), xi);
            let d = match self.shape {
                Shape::Cosh => weighted_cosh_star_prime(self.log_prefactor(r, &log_c) + k.ln(), s),
                Shape::Quadratic => k * self.quadratic_mobility(r, c) * s,
            };
            out.axpy(d, &self.net.gamma_f64(r), 1.0);
        }
        Ok(out)
    }

    /// `(S_sl(c), S_fa(c))`, the fast part without `1/ε`.
    pub fn slope_parts(&self, c: &[f64]) -> Result<(f64, f64)> {
        self.net.check_state(c)?;
        let (mut sl, mut fa) = (0.0, 0.0);
        for r in 0..self.net.num_reactions() {
            let f = self.net.flux(r, c);
            let k = self.net.reactions()[r].kappa;
            let term = match self.shape {
                Shape::Cosh => {
                    let d = f.fw.sqrt() - f.bw.sqrt();
                    2.0 * k * d * d
                }
                Shape::Quadratic => {
                    if f.fw == f.bw {
                        0.0
                    } else if f.fw == 0.0 || f.bw == 0.0 {
                        f64::INFINITY
                    } else {
                        0.5 * k * (f.fw - f.bw) * (f.fw.ln() - f.bw.ln())
                    }
                }
            };
            if self.net.is_fast(r) {
                fa += term;
            } else {
                sl += term;
            }
        }
        Ok((sl, fa))
    }

    /// Natural size of `S_fa(c)`, used to scale equilibrium tests.
    pub fn fast_slope_scale(&self, c: &[f64]) -> f64 {
        let mut s = 1.0;
        for r in 0..self.net.num_reactions() {
            if self.net.is_fast(r) {
                let f = self.net.flux(r, c);
                s += 2.0 * self.net.reactions()[r].kappa * (f.fw + f.bw);
            }
        }
        s
    }

    /// `S_ε(c)`, or `S_0(c) = S_sl(c) + χ_{E_fast}(c)` in the limit.
    pub fn slope(&self, c: &[f64]) -> Result<Extended> {
        let (sl, fa) = self.slope_parts(c)?;
        match self.scale {
            Scale::Eps(e) => Ok(Extended::Finite(sl + fa / e)),
            Scale::Limit => {
                if fa <= self.eq_tol * self.fast_slope_scale(c) {
                    Ok(Extended::Finite(sl))
                } else {
                    Ok(Extended::Infinite(Violation::OffFastEquilibria { slope_fast: fa }))
                }
            }
        }
    }

    /// `R_ε(c, v)`, or `R_eff(c, v)` in the limit.
    pub fn primal(&self, c: &[f64], v: &[f64]) -> Result<Extended> {
        match self.scale {
            Scale::Eps(_) => self.primal_dissipation(c, v),
            Scale::Limit => self.effective_primal(c, v),
        }
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.net.num_species() {
            return Err(Error::Dimension { expected: self.net.num_species(), got: v.len() });
        }
        Ok(())
    }

    /// `|Q v|` if it exceeds the membership tolerance for `Γ`.
    fn outside_gamma(&self, v: &[f64]) -> Option<f64> {
        let q = self.net.structure().q_matrix();
        if q.nrows() == 0 {
            return None;
        }
        let vv = DVector::from_column_slice(v);
        let qv = (&q * &vv).norm();
        let row = q.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
        (qv > 1e-10 * (1.0 + vv.norm()) * row).then_some(qv)
    }

    /// Legendre transform of `R*_ε(c, ·)` at `v`.
    pub fn primal_dissipation(&self, c: &[f64], v: &[f64]) -> Result<Extended> {
        self.net.check_state(c)?;
        self.check_len(v)?;
        if let Scale::Limit = self.scale {
            return self.effective_primal(c, v);
        }
        if let Some(norm) = self.outside_gamma(v) {
            return Ok(Extended::Infinite(Violation::OutsideStoichiometricSubspace { norm }));
        }
        let b = DVector::from_column_slice(v);
        let dirs: Vec<DVector<f64>> = (0..self.net.num_reactions()).map(|r| self.net.gamma_f64(r)).collect();
        match self.shape {
            Shape::Cosh => {
                let log_c = log_state(c);
                let lw: Vec<f64> = (0..self.net.num_reactions())
                    .map(|r| self.log_prefactor(r, &log_c) + self.speed_factor(r).unwrap_or(1.0).ln())
                    .collect();
                self.sup_to_extended(maximize(&b, &dirs, &lw, &self.legendre)?)
            }
            Shape::Quadratic => {
                let w: Vec<f64> = (0..self.net.num_reactions())
                    .map(|r| self.speed_factor(r).unwrap_or(1.0) * self.quadratic_mobility(r, c))
                    .collect();
                quadratic_conjugate(&b, &dirs, &w)
            }
        }
    }

    fn sup_to_extended(&self, sup: Sup) -> Result<Extended> {
        Ok(match sup {
            Sup::Finite { value, .. } => Extended::Finite(value),
            Sup::OutsideSpan(norm) => Extended::Infinite(Violation::DegenerateBoundary { norm }),
            Sup::Unbounded => Extended::Infinite(Violation::Unbounded { cap: self.legendre.cap }),
        })
    }

    /// `R_eff(c, v) = R̃(c, Q_fa v)`.
    pub fn effective_primal(&self, c: &[f64], v: &[f64]) -> Result<Extended> {
        self.net.check_state(c)?;
        self.check_len(v)?;
        if let Some(norm) = self.outside_gamma(v) {
            return Ok(Extended::Infinite(Violation::OutsideStoichiometricSubspace { norm }));
        }
        let w = self.net.coarse_graining() * DVector::from_column_slice(v);
        self.reduced_primal(c, w.as_slice())
    }

    /// `R̃(c, w) = sup_ζ { ζ·w − R*_sl(c, Q_faᵀζ) }`.
    pub fn reduced_primal(&self, c: &[f64], w: &[f64]) -> Result<Extended> {
        self.net.check_state(c)?;
        let qf = self.net.coarse_graining();
        if w.len() != qf.nrows() {
            return Err(Error::Dimension { expected: qf.nrows(), got: w.len() });
        }
        let slow: Vec<usize> = (0..self.net.num_reactions()).filter(|&r| !self.net.is_fast(r)).collect();
        let dirs: Vec<DVector<f64>> = slow.iter().map(|&r| &qf * self.net.gamma_f64(r)).collect();
        let b = DVector::from_column_slice(w);
        let sup = match self.shape {
            Shape::Cosh => {
                let log_c = log_state(c);
                let lw: Vec<f64> = slow.iter().map(|&r| self.log_prefactor(r, &log_c)).collect();
                maximize(&b, &dirs, &lw, &self.legendre)?
            }
            Shape::Quadratic => {
                let w: Vec<f64> = slow.iter().map(|&r| self.quadratic_mobility(r, c)).collect();
                return quadratic_conjugate(&b, &dirs, &w);
            }
        };
        if let Sup::OutsideSpan(norm) = sup {
            // distinguish a velocity outside Q_fa Γ from a degenerate boundary state
            let lw_all = vec![0.0; dirs.len()];
            if let Sup::OutsideSpan(_) = maximize(&b, &dirs, &lw_all, &self.legendre)? {
                return Ok(Extended::Infinite(Violation::OutsideStoichiometricSubspace { norm }));
            }
        }
        self.sup_to_extended(sup)
    }

    /// `∂_ξ R*_Φ(c, −DE(c))`, computed from the mobility form.
    pub fn gradient_flow_field(&self, c: &[f64]) -> Result<DVector<f64>> {
        let Scale::Eps(_) = self.scale else {
            return Err(Error::Invalid("gradient flow field needs a finite eps".into()));
        };
        let xi = -d_energy(self.net, c)?;
        let mut out = DVector::zeros(self.net.num_species());
        for r in 0..self.net.num_reactions() {
            let k = self.speed_factor(r).unwrap_or(1.0) * self.net.reactions()[r].kappa;
            let f = self.net.flux(r, c);
            let s = gamma_dot(&self.net.gamma(r), xi.as_slice());
            // κ δ* Λ(a, b) Φ′(s), with δ*·a = fw and δ*·b = bw
            let d = match self.shape {
                Shape::Cosh => k * phi::geometric_mean(f.fw, f.bw) * cosh_star_prime(s),
                Shape::Quadratic => k * phi::log_mean(f.fw, f.bw) * s,
            };
            out.axpy(d, &self.net.gamma_f64(r), 1.0);
        }
        Ok(out)
    }
}

fn gamma_dot(g: &[i64], xi: &[f64]) -> f64 {
    g.iter().zip(xi).map(|(&a, &b)| a as f64 * b).sum()
}

/// `sup_y { b·y − ½ Σ w_r (m_r·y)² }`.
fn quadratic_conjugate(b: &DVector<f64>, dirs: &[DVector<f64>], w: &[f64]) -> Result<Extended> {
    let d = b.len();
    let mut k = DMatrix::zeros(d, d);
    for (m, &wr) in dirs.iter().zip(w) {
        k.ger(wr, m, m, 1.0);
    }
    let svd = k.svd(true, true);
    let tol = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    let y = svd.solve(b, tol).map_err(|e| Error::Numerical(e.to_string()))?;
    let u = svd.u.as_ref().ok_or_else(|| Error::Numerical("SVD failed".into()))?;
    let mut proj = DVector::zeros(d);
    for (j, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            let col = u.column(j);
            proj.axpy(col.dot(b), &col, 1.0);
        }
    }
    let perp = (b - proj).norm();
    if perp > 1e-9 * (1.0 + b.norm()) {
        return Ok(Extended::Infinite(Violation::DegenerateBoundary { norm: perp }));
    }
    Ok(Extended::Finite((0.5 * b.dot(&y)).max(0.0)))
}

/// Constants `(b_M, b_Q)` of the superlinear bound
/// `R_ε(c, v) ≥ b_M C(|Q_fa v| / (b_M b_Q))`, valid for all states with `max_j c_j ≤ m_ener`.
pub fn superlinear_constants(net: &ReactionNetwork, m_ener: f64) -> (f64, f64) {
    let qf = net.coarse_graining();
    let mut b_m = 0.0;
    let mut b_q: f64 = 0.0;
    for r in 0..net.num_reactions() {
        if net.is_fast(r) {
            continue;
        }
        let rx = &net.reactions()[r];
        let order: u32 = rx.alpha.iter().sum::<u32>() + rx.beta.iter().sum::<u32>();
        b_m += rx.kappa * m_ener.powf(0.5 * order as f64);
        b_q = b_q.max((&qf * net.gamma_f64(r)).norm());
    }
    (b_m, b_q)
}
