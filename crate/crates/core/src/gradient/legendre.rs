//! Numerical Legendre transform of weighted cosh sums.
//!
//! Maximizes `b·y − Σ_r w_r C*(m_r·y)` over `y`. Weights are passed as
//! logarithms so that prefactors far below the smallest normal float still
//! contribute; a weight of `-inf` drops the term.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegendreOptions {
    /// Bound on `|y|∞` beyond which the supremum is declared infinite.
    pub cap: f64,
    pub max_iter: usize,
    /// Gradient tolerance, relative to the size of the gradient terms.
    pub grad_tol: f64,
    /// Relative tolerance for `b` lying in the span of the active directions.
    pub span_tol: f64,
}

impl Default for LegendreOptions {
    fn default() -> Self {
        LegendreOptions { cap: 1e3, max_iter: 500, grad_tol: 1e-10, span_tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sup {
    Finite { value: f64, argmax: DVector<f64>, iterations: usize },
    /// `b` has a component of this size outside the span of the active directions.
    OutsideSpan(f64),
    /// Maximizer left the box `|y|∞ ≤ cap`.
    Unbounded,
}

/// `w C*(s)` with `w = e^{lw}`.
pub fn weighted_cosh_star(lw: f64, s: f64) -> f64 {
    if lw == f64::NEG_INFINITY {
        return 0.0;
    }
    let a = s.abs();
    let t = -(-0.5 * a).exp_m1();
    2.0 * (lw + 0.5 * a).exp() * t * t
}

/// `w C*′(s)`.
pub fn weighted_cosh_star_prime(lw: f64, s: f64) -> f64 {
    if lw == f64::NEG_INFINITY {
        return 0.0;
    }
    let a = s.abs();
    s.signum() * (lw + 0.5 * a).exp() * -(-a).exp_m1()
}

/// `w C*″(s)`.
pub fn weighted_cosh_star_second(lw: f64, s: f64) -> f64 {
    if lw == f64::NEG_INFINITY {
        return 0.0;
    }
    let a = s.abs();
    0.5 * (lw + 0.5 * a).exp() * (1.0 + (-a).exp())
}

/// Euclidean norm without underflow for tiny entries.
pub fn scaled_norm(v: &DVector<f64>) -> f64 {
    let m = v.amax();
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    m * (v / m).norm()
}

struct Reduced {
    b: DVector<f64>,
    dirs: Vec<DVector<f64>>,
    lw: Vec<f64>,
}

impl Reduced {
    fn value(&self, z: &DVector<f64>) -> f64 {
        let mut f = self.b.dot(z);
        for (n, &lw) in self.dirs.iter().zip(&self.lw) {
            f -= weighted_cosh_star(lw, n.dot(z));
        }
        f
    }

    /// Gradient, negated Hessian and the size of the terms entering the gradient.
    fn grad_hess(&self, z: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>, f64) {
        let p = z.len();
        let mut g = self.b.clone();
        let mut h = DMatrix::zeros(p, p);
        let mut size = scaled_norm(&self.b);
        for (n, &lw) in self.dirs.iter().zip(&self.lw) {
            let s = n.dot(z);
            let d1 = weighted_cosh_star_prime(lw, s);
            g.axpy(-d1, n, 1.0);
            h.ger(weighted_cosh_star_second(lw, s), n, n, 1.0);
            size += d1.abs() * scaled_norm(n);
        }
        (g, h, size)
    }
}

/// Maximize `b·y − Σ e^{lw_r} C*(dirs_r·y)`.
pub fn maximize(b: &DVector<f64>, dirs: &[DVector<f64>], lw: &[f64], opts: &LegendreOptions) -> Result<Sup> {
    let d = b.len();
    let active: Vec<usize> = (0..dirs.len())
        .filter(|&r| lw[r] > f64::NEG_INFINITY && dirs[r].amax() > 0.0)
        .collect();
    let bnorm = scaled_norm(b);
    if active.is_empty() {
        return Ok(if bnorm == 0.0 {
            Sup::Finite { value: 0.0, argmax: DVector::zeros(d), iterations: 0 }
        } else {
            Sup::OutsideSpan(bnorm)
        });
    }

    // orthonormal basis of span{dirs_r : r active}
    let m = DMatrix::from_columns(&active.iter().map(|&r| dirs[r].clone()).collect::<Vec<_>>());
    let svd = m.svd(true, false);
    let u = svd.u.ok_or_else(|| Error::Numerical("SVD failed".into()))?;
    let smax = svd.singular_values.max();
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 1e-12 * smax)
        .map(|(k, _)| u.column(k).into_owned())
        .collect();
    let basis = DMatrix::from_columns(&cols);
    let bz = basis.tr_mul(b);
    let perp = scaled_norm(&(b - &basis * &bz));
    if perp > opts.span_tol * (1.0 + bnorm) {
        return Ok(Sup::OutsideSpan(perp));
    }

    let prob = Reduced {
        b: bz,
        dirs: active.iter().map(|&r| basis.tr_mul(&dirs[r])).collect(),
        lw: active.iter().map(|&r| lw[r]).collect(),
    };
    let p = basis.ncols();
    let mut z = DVector::zeros(p);
    let mut f = prob.value(&z);
    let mut trust = 8.0;
    let mut last_grad = f64::INFINITY;
    for it in 0..opts.max_iter {
        let (g, h, scale) = prob.grad_hess(&z);
        last_grad = scaled_norm(&g);
        if last_grad <= opts.grad_tol * scale {
            return Ok(finish(&prob, &basis, z, it));
        }
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            None => {
                let reg = 1e-14 * h.diagonal().amax().max(1e-300);
                match (h + DMatrix::identity(p, p) * reg).cholesky() {
                    Some(ch) => ch.solve(&g),
                    None => g.clone(),
                }
            }
        };
        if step.iter().any(|x| !x.is_finite()) {
            return Err(Error::LegendreNonConvergence { iterations: it, gradient: last_grad });
        }
        let reach = prob.dirs.iter().map(|n| n.dot(&step).abs()).fold(0.0, f64::max);
        let mut t = if reach > trust { trust / reach } else { 1.0 };
        let slope = g.dot(&step);
        let mut accepted = false;
        for _ in 0..60 {
            let zt = &z + &step * t;
            let ft = prob.value(&zt);
            if ft.is_finite() && ft >= f + 1e-4 * t * slope - 1e-15 * f.abs() {
                let small = (&zt - &z).amax() <= 1e-13 * (1.0 + z.amax());
                z = zt;
                f = ft;
                accepted = true;
                if t == 1.0 || reach > trust {
                    trust *= 2.0;
                }
                if small {
                    let (g2, _, size2) = prob.grad_hess(&z);
                    if scaled_norm(&g2) <= 1e-6 * size2 {
                        return Ok(finish(&prob, &basis, z, it + 1));
                    }
                }
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no ascent possible at working precision
            if last_grad <= 1e-6 * scale {
                return Ok(finish(&prob, &basis, z, it));
            }
            return Err(Error::LegendreNonConvergence { iterations: it, gradient: last_grad });
        }
        if z.amax() > opts.cap {
            return Ok(Sup::Unbounded);
        }
    }
    Err(Error::LegendreNonConvergence { iterations: opts.max_iter, gradient: last_grad })
}

fn finish(prob: &Reduced, basis: &DMatrix<f64>, z: DVector<f64>, iterations: usize) -> Sup {
    let value = prob.value(&z).max(0.0);
    Sup::Finite { value, argmax: basis * z, iterations }
}
