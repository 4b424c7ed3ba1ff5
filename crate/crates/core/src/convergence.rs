//! Numerical ε → 0 experiments: sweeps over ε and recovery-sequence curves.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dissipation::{self, QuadratureOptions};
use crate::dynamics::{self, fmt17, DynamicsKind, IntegratorOptions, Trajectory};
use crate::equilibria::{positivity_shift_direction, SlowManifoldSolver};
use crate::error::{Error, Result};
use crate::gradient::{GradientEvaluator, Scale};
use crate::network::{ReactionNetwork, TiltVector};
use crate::value::Extended;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepParams {
    pub c0: Vec<f64>,
    pub t_end: f64,
    pub eps_list: Vec<f64>,
    /// Fixed burn-in; `None` means `10 ε |log ε|` per row.
    pub delta: Option<f64>,
    pub integrator: IntegratorOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub delta: f64,
    /// `sup_{t ≥ δ} |c(t) − Ψ(Q_fa c(t))|∞` over the output grid.
    pub dist_manifold: Option<f64>,
    /// `sup_t |Q_fa c(t) − q(t)|∞` against the reduced solution.
    pub dist_reduced: Option<f64>,
    /// `D_ε` on `[δ, T]`.
    pub dissipation: Option<f64>,
    pub edb_residual: Option<f64>,
    /// `∫_δ^T S_fa(c) dt`.
    pub fast_slope_integral: Option<f64>,
    pub accepted_steps: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub params: SweepParams,
    pub rows: Vec<SweepRow>,
    /// `D_0` of the lifted reduced solution on `[δ, T]` (δ of the last row).
    pub limit_dissipation: Option<f64>,
    #[serde(skip)]
    pub trajectories: Vec<Option<Trajectory>>,
}

/// Default burn-in for ill-prepared data.
pub fn default_burn_in(eps: f64) -> f64 {
    10.0 * eps * eps.ln().abs()
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_default()
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "eps,delta,dist_manifold,dist_reduced,dissipation,edb_residual,fast_slope_integral,accepted_steps,error\n",
        );
        for r in &self.rows {
            let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                fmt17(r.eps),
                fmt17(r.delta),
                opt(r.dist_manifold),
                opt(r.dist_reduced),
                opt(r.dissipation),
                opt(r.edb_residual),
                opt(r.fast_slope_integral),
                r.accepted_steps,
                err
            ));
        }
        s
    }

    /// Long format `eps,t,species,value` of the stored trajectories.
    pub fn long_format_csv(&self, species: &[String]) -> String {
        let mut s = String::from("eps,t,species,value\n");
        for (row, tr) in self.rows.iter().zip(&self.trajectories) {
            let Some(tr) = tr else { continue };
            for (t, c) in tr.times.iter().zip(&tr.states) {
                for (name, v) in species.iter().zip(c) {
                    s.push_str(&format!("{},{},{},{}\n", fmt17(row.eps), fmt17(*t), name, fmt17(*v)));
                }
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SweepOptions {
    /// Keep the full trajectories for plotting.
    pub keep_trajectories: bool,
}

fn sup_manifold_distance(solver: &SlowManifoldSolver, tr: &Trajectory, delta: f64) -> Result<f64> {
    let mut mu = None;
    let mut best: f64 = 0.0;
    for (t, c) in tr.times.iter().zip(&tr.states) {
        if *t < delta {
            continue;
        }
        let sol = solver.solve(solver.project(c).as_slice(), mu.as_ref())?;
        best = best.max((DVector::from_column_slice(c) - &sol.c).amax());
        mu = Some(sol.mu);
    }
    Ok(best)
}

/// One integration per ε (run in parallel), compared against `Ψ` and the
/// reduced solution from `Q_fa c0`.
pub fn eps_sweep(
    net: &ReactionNetwork,
    c0: &[f64],
    t_end: f64,
    eps_list: &[f64],
    delta: Option<f64>,
    integrator: &IntegratorOptions,
    options: SweepOptions,
) -> Result<SweepResult> {
    net.check_state(c0)?;
    if eps_list.is_empty() || eps_list.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::Invalid("eps list must be nonempty and positive".into()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Invalid("eps list must be strictly decreasing".into()));
    }
    if let Some(d) = delta {
        if !(0.0..t_end).contains(&d) {
            return Err(Error::Invalid("burn-in must lie in [0, T)".into()));
        }
    }
    let solver = SlowManifoldSolver::new(net);
    let q0 = solver.project(c0);
    let reduced = dynamics::integrate_reduced(net, q0.as_slice(), t_end, integrator)?;
    let qf = net.coarse_graining();

    let results: Vec<(SweepRow, Option<Trajectory>)> = eps_list
        .par_iter()
        .map(|&eps| {
            let d = delta.unwrap_or_else(|| default_burn_in(eps).min(0.5 * t_end));
            let mut row = SweepRow {
                eps,
                delta: d,
                dist_manifold: None,
                dist_reduced: None,
                dissipation: None,
                edb_residual: None,
                fast_slope_integral: None,
                accepted_steps: 0,
                error: None,
            };
            let mut run = || -> Result<Trajectory> {
                let tr = dynamics::integrate_full(net, eps, c0, t_end, integrator)?;
                row.accepted_steps = tr.meta.stats.accepted;
                row.dist_manifold = Some(sup_manifold_distance(&solver, &tr, d)?);
                let dr = tr
                    .times
                    .iter()
                    .zip(&tr.states)
                    .map(|(&t, c)| (&qf * DVector::from_column_slice(c) - reduced.eval(t)).amax())
                    .fold(0.0, f64::max);
                row.dist_reduced = Some(dr);
                let tail = tr.tail_from(d);
                let rep = dissipation::dissipation_eps(&tail, net, eps, &TiltVector::zero(net.num_species()))?;
                row.dissipation = rep.total.finite();
                row.edb_residual = rep.edb_residual;
                row.fast_slope_integral = Some(dissipation::fast_slope_integral(&tail, net)?);
                Ok(tr)
            };
            match run() {
                Ok(tr) => {
                    let keep = options.keep_trajectories.then_some(tr);
                    (row, keep)
                }
                Err(e) => {
                    row.error = Some(e.to_string());
                    (row, None)
                }
            }
        })
        .collect();

    let last_delta = results.last().map_or(0.0, |(r, _)| r.delta);
    let limit_dissipation = dissipation::dissipation_zero(&reduced.tail_from(last_delta), net)?.total.finite();
    let (rows, trajectories) = results.into_iter().unzip();
    Ok(SweepResult {
        params: SweepParams {
            c0: c0.to_vec(),
            t_end,
            eps_list: eps_list.to_vec(),
            delta,
            integrator: integrator.clone(),
        },
        rows,
        limit_dissipation,
        trajectories,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub eps: f64,
    pub dissipation: Extended,
    pub gap: f64,
    pub relative_gap: f64,
    pub quadrature_error: f64,
}

/// Measured quantities behind the Jensen step of the recovery construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JensenDiagnostic {
    /// `‖c̄^k − ĉ^k‖∞ + ‖ĉ^k − Ψ(q)‖∞` on the evaluation grid.
    pub alpha_k: f64,
    /// `∫ R̃(c̄^k, dq̂^k/dt) dt`.
    pub interpolant_velocity: f64,
    /// `∫ R̃(c̄^k, dq/dt) dt`.
    pub path_velocity: f64,
    pub jensen_holds: bool,
    /// `D_0(Ψ(q̂^k)) / D_0(Ψ(q))`.
    pub ratio: f64,
    /// Smallest `Λ` with `ratio ≤ (1 + Λ α_k)²`.
    pub lambda_implied: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub theta: f64,
    pub k: u32,
    pub q_bar: Vec<f64>,
    pub nodes: usize,
    /// `D_0` of the recovery curve `Ψ(q̂^k + θ q̄)`.
    pub limit_dissipation: Extended,
    /// `D_0` of the unshifted input path.
    pub path_dissipation: Extended,
    pub rows: Vec<RecoveryRow>,
    pub jensen: Option<JensenDiagnostic>,
}

/// Sub-intervals per affine piece on the evaluation grid.
const SUB: usize = 4;

/// Builds `c(t) = Ψ(q̂^k(t) + θ q̄)` from the dyadic affine interpolant of
/// `q_path`, evaluates `D_ε` for each ε and `D_0` of the same curve.
pub fn recovery_sequence(
    net: &ReactionNetwork,
    q_path: &Trajectory,
    eps_list: &[f64],
    k: u32,
    theta: f64,
    q_bar: Option<&[f64]>,
) -> Result<RecoveryReport> {
    if q_path.meta.kind != DynamicsKind::Reduced || q_path.dim() != net.m_fast() {
        return Err(Error::Invalid("recovery needs a reduced-coordinate path".into()));
    }
    if k > 16 {
        return Err(Error::Invalid("dyadic level above 16 is not supported".into()));
    }
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::Invalid("theta must be nonnegative".into()));
    }
    if eps_list.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::Invalid("eps values must be positive".into()));
    }
    let m = net.m_fast();
    let q_bar: Vec<f64> = match q_bar {
        Some(b) if b.len() == m => b.to_vec(),
        Some(b) => return Err(Error::Dimension { expected: m, got: b.len() }),
        None if theta == 0.0 => vec![0.0; m],
        None => {
            let rep = positivity_shift_direction(net)?;
            if !rep.verified {
                return Err(Error::Invalid(format!(
                    "no verified positivity shift: {}",
                    rep.failure.unwrap_or_default()
                )));
            }
            rep.q_bar
        }
    };
    let solver = SlowManifoldSolver::new(net);
    let t0 = q_path.times[0];
    let t_end = q_path.t_end();
    let pieces = 1usize << k;
    let tau: Vec<f64> = (0..=pieces).map(|j| t0 + (t_end - t0) * j as f64 / pieces as f64).collect();
    let knots: Vec<DVector<f64>> = tau.iter().map(|&t| q_path.eval(t)).collect();
    let qb = DVector::from_vec(q_bar.clone());
    let q_hat = |t: f64| -> DVector<f64> {
        let s = ((t - t0) / (t_end - t0) * pieces as f64).clamp(0.0, pieces as f64);
        let j = (s.floor() as usize).min(pieces - 1);
        let w = s - j as f64;
        &knots[j] * (1.0 - w) + &knots[j + 1] * w
    };
    let curve = |t: f64| -> Result<Vec<f64>> { Ok(solver.psi((q_hat(t) + &qb * theta).as_slice())?.as_slice().to_vec()) };

    let n_int = pieces * SUB;
    let times: Vec<f64> = (0..=n_int).map(|j| t0 + (t_end - t0) * j as f64 / n_int as f64).collect();
    let states = times.iter().map(|&t| curve(t)).collect::<Result<Vec<_>>>()?;
    let traj = Trajectory::from_samples(times.clone(), states)?;
    let qopts = QuadratureOptions::default();
    let refine = |t: f64| curve(t);
    let limit = dissipation::dissipation_zero_with(&traj, net, &qopts, Some(&refine))?;
    let d0 = limit.total.clone();
    let zero_tilt = TiltVector::zero(net.num_species());
    let rows = eps_list
        .par_iter()
        .map(|&eps| {
            let rep = dissipation::dissipation_eps_with(&traj, net, eps, &zero_tilt, &qopts, Some(&refine))?;
            let (gap, rel) = match (rep.total.finite(), d0.finite()) {
                (Some(a), Some(b)) => {
                    let g = (a - b).abs();
                    (g, if b > 0.0 { g / b } else { g })
                }
                _ => (f64::INFINITY, f64::INFINITY),
            };
            Ok(RecoveryRow { eps, dissipation: rep.total, gap, relative_gap: rel, quadrature_error: rep.quadrature_error })
        })
        .collect::<Result<Vec<_>>>()?;

    let path_dissipation = dissipation::dissipation_zero(q_path, net)?.total;
    let jensen = jensen_diagnostic(net, &solver, q_path, &tau, &knots)?;
    Ok(RecoveryReport {
        theta,
        k,
        q_bar,
        nodes: times.len(),
        limit_dissipation: d0,
        path_dissipation,
        rows,
        jensen,
    })
}

fn jensen_diagnostic(
    net: &ReactionNetwork,
    solver: &SlowManifoldSolver,
    q_path: &Trajectory,
    tau: &[f64],
    knots: &[DVector<f64>],
) -> Result<Option<JensenDiagnostic>> {
    let ev = GradientEvaluator::new(net, Scale::Limit)?;
    let (mut lhs, mut rhs, mut alpha_bar, mut alpha_hat) = (0.0, 0.0, 0.0f64, 0.0f64);
    // D_0 of ĉ^k = Ψ(q̂^k) and of Ψ(q) on a common fine grid
    let (mut d_hat, mut d_path) = (0.0, 0.0);
    for j in 0..tau.len() - 1 {
        let h = tau[j + 1] - tau[j];
        let c_bar = solver.psi(knots[j].as_slice())?;
        let w_hat = (&knots[j + 1] - &knots[j]) / h;
        let Some(r) = ev.reduced_primal(c_bar.as_slice(), w_hat.as_slice())?.finite() else {
            return Ok(None);
        };
        lhs += h * r;
        for s in 0..SUB {
            let t = tau[j] + h * (s as f64 + 0.5) / SUB as f64;
            let sub_h = h / SUB as f64;
            let w = q_path.eval_derivative(t);
            let Some(r) = ev.reduced_primal(c_bar.as_slice(), w.as_slice())?.finite() else {
                return Ok(None);
            };
            rhs += sub_h * r;
            let s_lin = (t - tau[j]) / h;
            let q_hat = &knots[j] * (1.0 - s_lin) + &knots[j + 1] * s_lin;
            let c_hat = solver.psi(q_hat.as_slice())?;
            let c0 = solver.psi(q_path.eval(t).as_slice())?;
            alpha_bar = alpha_bar.max((&c_bar - &c_hat).amax());
            alpha_hat = alpha_hat.max((&c_hat - &c0).amax());
            let (sl_hat, _) = ev.slope_parts(c_hat.as_slice())?;
            let (sl0, _) = ev.slope_parts(c0.as_slice())?;
            let (Some(r_hat), Some(r0)) = (
                ev.reduced_primal(c_hat.as_slice(), w_hat.as_slice())?.finite(),
                ev.reduced_primal(c0.as_slice(), w.as_slice())?.finite(),
            ) else {
                return Ok(None);
            };
            d_hat += sub_h * (r_hat + sl_hat);
            d_path += sub_h * (r0 + sl0);
        }
    }
    let alpha_k = alpha_bar + alpha_hat;
    let ratio = if d_path > 0.0 { d_hat / d_path } else { 1.0 };
    let lambda_implied = if ratio > 1.0 && alpha_k > 0.0 { (ratio.sqrt() - 1.0) / alpha_k } else { 0.0 };
    Ok(Some(JensenDiagnostic {
        alpha_k,
        interpolant_velocity: lhs,
        path_velocity: rhs,
        jensen_holds: lhs <= rhs * (1.0 + 1e-6) + 1e-12,
        ratio,
        lambda_implied,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn sweep_at_equilibrium_is_trivial() {
        let net = fixtures::three_species();
        let r = eps_sweep(&net, net.c_star(), 1.0, &[0.5], Some(0.1), &IntegratorOptions::default(), SweepOptions::default())
            .unwrap();
        let row = &r.rows[0];
        assert!(row.error.is_none());
        assert!(row.dist_manifold.unwrap() < 1e-12);
        assert!(row.dist_reduced.unwrap() < 1e-12);
        assert!(row.dissipation.unwrap().abs() < 1e-12);
        assert!(r.to_csv().lines().count() == 2);
    }

    #[test]
    fn sweep_rejects_unsorted_eps() {
        let net = fixtures::three_species();
        let o = IntegratorOptions::default();
        assert!(eps_sweep(&net, net.c_star(), 1.0, &[0.1, 0.5], None, &o, SweepOptions::default()).is_err());
    }

    #[test]
    fn recovery_of_constant_path_is_zero() {
        let net = fixtures::three_species();
        let q = SlowManifoldSolver::new(&net).project(net.c_star());
        let mut path = Trajectory::from_fn(vec![0.0, 0.5, 1.0], |_| q.as_slice().to_vec()).unwrap();
        path.meta.kind = DynamicsKind::Reduced;
        let rep = recovery_sequence(&net, &path, &[0.1, 0.01], 3, 0.0, None).unwrap();
        assert!(rep.limit_dissipation.to_f64().abs() < 1e-12);
        for r in &rep.rows {
            assert!(r.dissipation.to_f64().abs() < 1e-12);
        }
    }
}
