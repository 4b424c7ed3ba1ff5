//! Dormand–Prince 5(4) for the nonstiff limit equations.

use nalgebra::DVector;

use super::{wrms, IntegratorOptions, RawOutput, Stepper};
use crate::error::{Error, Result};

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// What to do after an accepted step.
pub(crate) enum PostStep {
    /// `true` if the state was modified and the derivative must be recomputed.
    Continue(bool),
    Stop(String),
}

pub(crate) fn integrate<F, P>(mut f: F, mut post: P, y0: DVector<f64>, t_end: f64, opts: &IntegratorOptions) -> Result<RawOutput>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    P: FnMut(&mut DVector<f64>) -> Result<PostStep>,
{
    let mut st = Stepper::new(y0, t_end, opts)?;
    let mut k1 = f(&st.y)?;
    st.out.stats.rhs_evals += 1;
    st.record_initial(&k1);
    let mut h = st.initial_step(&k1, 5);
    let floor = 1e-14 * t_end;
    while !st.done() {
        let (h_used, clipped) = st.clip(h);
        let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
        k.push(k1.clone());
        let mut failed = false;
        for s in 1..7 {
            let mut ys = st.y.clone();
            for (j, kj) in k.iter().enumerate() {
                if A[s][j] != 0.0 {
                    ys.axpy(h_used * A[s][j], kj, 1.0);
                }
            }
            st.out.stats.rhs_evals += 1;
            match f(&ys) {
                Ok(v) if v.iter().all(|x| x.is_finite()) => k.push(v),
                _ => {
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            st.out.stats.rejected += 1;
            h = h_used * 0.5;
            if h < floor {
                // re-evaluate at the current point to surface the underlying error
                f(&st.y)?;
                return Err(Error::Integration { t: st.t, reason: "right-hand side failed at the step-size floor".into() });
            }
            continue;
        }
        let mut y_new = st.y.clone();
        for (j, kj) in k.iter().enumerate().take(6) {
            if A[6][j] != 0.0 {
                y_new.axpy(h_used * A[6][j], kj, 1.0);
            }
        }
        let mut est = DVector::zeros(y_new.len());
        for (j, kj) in k.iter().enumerate() {
            if E[j] != 0.0 {
                est.axpy(h_used * E[j], kj, 1.0);
            }
        }
        let err = wrms(&est, &st.scale2(&y_new));
        if !err.is_finite() || err > 1.0 {
            st.out.stats.rejected += 1;
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.2, 1.0) } else { 0.25 };
            h = h_used * fac;
            if h < floor {
                return Err(Error::Integration { t: st.t, reason: "step size fell below the floor".into() });
            }
            continue;
        }
        let mut k_new = k.pop().expect("seven stages");
        match post(&mut y_new)? {
            PostStep::Continue(changed) => {
                if changed {
                    k_new = f(&y_new)?;
                    st.out.stats.rhs_evals += 1;
                }
            }
            PostStep::Stop(reason) => {
                st.out.completed = false;
                st.out.diagnostic = Some(format!("stopped at t = {}: {reason}", st.t));
                return Ok(st.finish());
            }
        }
        st.accept(h_used, y_new, &k_new);
        k1 = k_new;
        let fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
        h = h_used * fac;
        if clipped {
            h = h.max(st.last_unclipped);
        }
    }
    Ok(st.finish())
}
