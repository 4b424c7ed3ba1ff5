//! TR-BDF2 written as a stiffly accurate ESDIRK with an embedded third-order
//! estimate, for the stiff rate equation.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector};

use super::{wrms, IntegratorOptions, RawOutput, Stepper};
use crate::error::{Error, Result};

const GAMMA: f64 = 2.0 - SQRT_2;
const D: f64 = GAMMA / 2.0;
const W: f64 = SQRT_2 / 4.0;
const B_HAT: [f64; 3] = [(1.0 - W) / 3.0, (3.0 * W + 1.0) / 3.0, D / 3.0];
const NEWTON_MAX: usize = 10;
const NEWTON_TOL: f64 = 1e-3;

struct Newton<'a, F> {
    f: &'a mut F,
    lu: &'a nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    hd: f64,
    scale: &'a DVector<f64>,
    rhs_evals: &'a mut usize,
}

impl<F: FnMut(&DVector<f64>) -> DVector<f64>> Newton<'_, F> {
    /// Solves `z − h d f(z) = rhs`; returns `(z, f(z))`.
    fn solve(&mut self, rhs: &DVector<f64>, mut z: DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let mut prev = f64::INFINITY;
        for it in 0..NEWTON_MAX {
            let fz = (self.f)(&z);
            *self.rhs_evals += 1;
            let r = &z - &fz * self.hd - rhs;
            let dz = self.lu.solve(&r)?;
            z -= &dz;
            let nrm = wrms(&dz, self.scale);
            if !nrm.is_finite() {
                return None;
            }
            let rate = nrm / prev;
            if nrm <= NEWTON_TOL || (it > 0 && rate < 1.0 && rate / (1.0 - rate) * nrm <= NEWTON_TOL) {
                let fz = (self.f)(&z);
                *self.rhs_evals += 1;
                return fz.iter().all(|x| x.is_finite()).then_some((z, fz));
            }
            if it > 0 && rate > 0.9 {
                return None;
            }
            prev = nrm;
        }
        None
    }
}

pub(crate) fn integrate<F, J>(
    mut f: F,
    mut jac: J,
    y0: DVector<f64>,
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<RawOutput>
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
    J: FnMut(&DVector<f64>) -> DMatrix<f64>,
{
    let n = y0.len();
    let mut st = Stepper::new(y0, t_end, opts)?;
    let mut k1 = f(&st.y);
    st.out.stats.rhs_evals += 1;
    st.record_initial(&k1);
    let mut h = st.initial_step(&k1, 2);
    let floor = 1e-14 * t_end;
    let ident = DMatrix::<f64>::identity(n, n);
    while !st.done() {
        let (h_used, clipped) = st.clip(h);
        let jm = jac(&st.y);
        st.out.stats.jacobian_evals += 1;
        let lu = (&ident - jm * (h_used * D)).lu();
        let scale0 = st.scale(&st.y);
        let mut newton = Newton { f: &mut f, lu: &lu, hd: h_used * D, scale: &scale0, rhs_evals: &mut st.out.stats.rhs_evals };
        let rhs2 = &st.y + &k1 * (h_used * D);
        let stage2 = newton.solve(&rhs2, &st.y + &k1 * (h_used * GAMMA));
        let stages = stage2.and_then(|(_, k2)| {
            let rhs3 = &st.y + (&k1 + &k2) * (h_used * W);
            let pred = &st.y + (&k1 * W + &k2 * (W + D)) * h_used;
            newton.solve(&rhs3, pred).map(|(z3, k3)| (k2, z3, k3))
        });
        let Some((k2, y_new, k3)) = stages else {
            st.out.stats.newton_failures += 1;
            st.out.stats.rejected += 1;
            h = h_used * 0.25;
            if h < floor {
                return Err(Error::Integration { t: st.t, reason: "Newton iteration failed at the step-size floor".into() });
            }
            continue;
        };
        let est = (&k1 * (W - B_HAT[0]) + &k2 * (W - B_HAT[1]) + &k3 * (D - B_HAT[2])) * h_used;
        let est = lu.solve(&est).unwrap_or(est);
        let scale = st.scale2(&y_new);
        let err = wrms(&est, &scale);
        if !err.is_finite() || err > 1.0 {
            st.out.stats.rejected += 1;
            let fac = if err.is_finite() { (0.9 * err.powf(-1.0 / 3.0)).clamp(0.2, 1.0) } else { 0.25 };
            h = h_used * fac;
            if h < floor {
                return Err(Error::Integration { t: st.t, reason: "step size fell below the floor".into() });
            }
            continue;
        }
        let min = y_new.min();
        if min < -opts.negativity_tol {
            st.out.stats.negativity_rejections += 1;
            st.out.stats.rejected += 1;
            h = h_used * 0.5;
            if h < floor {
                return Err(Error::Integration { t: st.t, reason: "negative state at the step-size floor".into() });
            }
            continue;
        }
        let (y_new, k_new) = if min < 0.0 {
            let clamped = y_new.map(|x| x.max(0.0));
            let k = f(&clamped);
            st.out.stats.rhs_evals += 1;
            (clamped, k)
        } else {
            (y_new, k3)
        };
        st.accept(h_used, y_new, &k_new);
        k1 = k_new;
        let fac = (0.9 * err.max(1e-10).powf(-1.0 / 3.0)).clamp(0.2, 5.0);
        h = h_used * fac;
        if clipped {
            h = h.max(st.last_unclipped);
        }
    }
    Ok(st.finish())
}
