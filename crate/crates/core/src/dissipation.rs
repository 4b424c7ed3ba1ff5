//! Dissipation functionals `D_ε`, `D_0` along sampled curves and the
//! energy-dissipation balance.
//!
//! The curve is reconstructed piecewise linearly. Each interval contributes
//! `h (R(c_mid, Δc/h) + S(c_mid))`; a second pass on halved intervals gives a
//! Richardson-extrapolated value and an error estimate. Midpoints for the
//! halved pass come from four-point Lagrange interpolation of the nodes, or
//! from a caller-supplied exact curve.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{DynamicsKind, Trajectory};
use crate::equilibria::SlowManifoldSolver;
use crate::error::{Error, Result};
use crate::gradient::{self, GradientEvaluator, Scale};
use crate::network::{ReactionNetwork, TiltVector};
use crate::value::{Extended, Violation};

/// Where and why a dissipation value became `+∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfiniteMarker {
    pub time: f64,
    pub violation: Violation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalContribution {
    pub t0: f64,
    pub t1: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipationReport {
    pub scale: Scale,
    pub tilted: bool,
    /// `∫ R dt`.
    pub velocity_part: Extended,
    /// `∫ S dt`, or the tilted slope integral.
    pub slope_part: Extended,
    pub total: Extended,
    pub first_violation: Option<InfiniteMarker>,
    /// `|D_fine − D_coarse| / 3`.
    pub quadrature_error: f64,
    pub energy_initial: f64,
    pub energy_final: f64,
    /// `E(c(T)) + D − E(c(0))` (tilted energy when tilted); absent when `D = +∞`.
    pub edb_residual: Option<f64>,
    pub intervals: usize,
    /// Fine-grid contribution of each trajectory interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_interval: Option<Vec<IntervalContribution>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureOptions {
    pub richardson: bool,
    pub per_interval: bool,
    /// Relative tolerance for `S_fa(c_k) = 0` at the nodes in the limit functional.
    pub node_tol: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions { richardson: true, per_interval: false, node_tol: 1e-10 }
    }
}

/// Exact curve used for the refined pass instead of interpolated midpoints.
pub type Refiner<'a> = &'a dyn Fn(f64) -> Result<Vec<f64>>;

type Integrand<'a> = dyn Fn(&[f64], &[f64]) -> Result<(Extended, Extended)> + 'a;

struct Quad {
    vel: [f64; 2],
    slope: [f64; 2],
    violation: Option<InfiniteMarker>,
    per_interval: Vec<IntervalContribution>,
}

/// Interpolated state at the midpoint of interval `k` from nearby nodes.
fn lagrange_midpoint(times: &[f64], states: &[Vec<f64>], k: usize) -> Vec<f64> {
    let n = times.len();
    let t = 0.5 * (times[k] + times[k + 1]);
    let idx: Vec<usize> = match n {
        0..=2 => return states[k].iter().zip(&states[k + 1]).map(|(a, b)| 0.5 * (a + b)).collect(),
        3 => (0..3).collect(),
        _ => {
            let s = k.saturating_sub(1).min(n - 4);
            (s..s + 4).collect()
        }
    };
    let weights: Vec<f64> = idx
        .iter()
        .map(|&i| {
            idx.iter()
                .filter(|&&j| j != i)
                .map(|&j| (t - times[j]) / (times[i] - times[j]))
                .product()
        })
        .collect();
    (0..states[k].len())
        .map(|c| idx.iter().zip(&weights).map(|(&i, w)| w * states[i][c]).sum())
        .collect()
}

/// Number of dyadic levels needed near each end of a linear piece so that
/// every sub-interval stays short relative to its distance from a zero of
/// some component; `None` if the plain midpoint rule is adequate.
fn grading_levels(a: &[f64], b: &[f64]) -> Option<usize> {
    let ratio = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| if x.max(y) == 0.0 { 1.0 } else { x.max(y) / x.min(y) })
        .fold(1.0, f64::max);
    if ratio <= 1.1 {
        return None;
    }
    let levels = if ratio.is_finite() { (ratio - 1.0).log2().ceil().max(0.0) as usize + 2 } else { MAX_LEVELS };
    Some(levels.min(MAX_LEVELS))
}

const MAX_LEVELS: usize = 40;

/// Nodes and weights on `[0, 1]`: three-point Gauss rules on dyadic
/// sub-intervals refined toward both ends.
fn graded_rule(levels: usize) -> &'static [(f64, f64)] {
    static RULES: std::sync::OnceLock<Vec<Vec<(f64, f64)>>> = std::sync::OnceLock::new();
    let rules = RULES.get_or_init(|| (0..=MAX_LEVELS).map(build_graded_rule).collect());
    &rules[levels]
}

fn build_graded_rule(levels: usize) -> Vec<(f64, f64)> {
    let g = (0.6f64).sqrt();
    let mut half = Vec::new();
    let mut push = |lo: f64, hi: f64| {
        let (m, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        half.push((m - g * r, r * 5.0 / 9.0));
        half.push((m, r * 8.0 / 9.0));
        half.push((m + g * r, r * 5.0 / 9.0));
    };
    let mut hi = 0.5;
    for _ in 0..levels {
        push(0.5 * hi, hi);
        hi *= 0.5;
    }
    push(0.0, hi);
    let mut rule: Vec<(f64, f64)> = half.iter().map(|&(s, w)| (1.0 - s, w)).collect();
    rule.extend(half);
    rule
}

/// Relative size, against the states, of a step component outside the
/// admissible velocity space that is still attributed to rounding.
const CONSERVATION_TOL: f64 = 1e-9;

/// Orthogonal projector onto the column space of `m`.
fn column_projector(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut p = DMatrix::zeros(n, n);
    if m.ncols() == 0 {
        return p;
    }
    let svd = m.clone().svd(true, false);
    let tol = 1e-10 * svd.singular_values.max();
    let u = svd.u.expect("left singular vectors requested");
    for (j, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            let col = u.column(j);
            p.ger(1.0, &col, &col, 1.0);
        }
    }
    p
}

/// `b − a`, projected onto the admissible directions when the discarded part
/// is at rounding level relative to the states.
fn admissible_step(a: &[f64], b: &[f64], proj: &DMatrix<f64>) -> Vec<f64> {
    let d = DVector::from_iterator(a.len(), a.iter().zip(b).map(|(x, y)| y - x));
    let dp = proj * &d;
    let scale = 1.0 + a.iter().chain(b).fold(0.0f64, |m, x| m.max(x.abs()));
    if (&d - &dp).amax() <= CONSERVATION_TOL * scale {
        dp.as_slice().to_vec()
    } else {
        d.as_slice().to_vec()
    }
}

fn quadrature(
    times: &[f64],
    states: &[Vec<f64>],
    proj: &DMatrix<f64>,
    mid: &dyn Fn(usize) -> Result<Vec<f64>>,
    integrand: &Integrand,
    opts: &QuadratureOptions,
) -> Result<Quad> {
    let mut q = Quad { vel: [0.0; 2], slope: [0.0; 2], violation: None, per_interval: Vec::new() };
    let piece = |t0: f64, t1: f64, a: &[f64], b: &[f64], graded: bool| -> Result<std::result::Result<(f64, f64), InfiniteMarker>> {
        let h = t1 - t0;
        let v: Vec<f64> = admissible_step(a, b, proj).iter().map(|d| d / h).collect();
        let eval = |c: &[f64], time: f64, w: f64| -> Result<std::result::Result<(f64, f64), InfiniteMarker>> {
            Ok(match integrand(c, &v)? {
                (Extended::Finite(r), Extended::Finite(s)) => Ok((w * r, w * s)),
                (Extended::Infinite(violation), _) | (_, Extended::Infinite(violation)) => {
                    Err(InfiniteMarker { time, violation })
                }
            })
        };
        // sub-pieces of a graded interval stay graded so both passes share one rule
        let Some(levels) = grading_levels(a, b).or(graded.then_some(0)) else {
            let cm: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
            return eval(&cm, 0.5 * (t0 + t1), h);
        };
        let mut acc = (0.0, 0.0);
        for &(s, w) in graded_rule(levels) {
            let c: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect();
            match eval(&c, t0 + s * h, w * h)? {
                Ok((r, sl)) => {
                    acc.0 += r;
                    acc.1 += sl;
                }
                Err(m) => return Ok(Err(m)),
            }
        }
        Ok(Ok(acc))
    };
    for k in 0..times.len().saturating_sub(1) {
        let (t0, t1) = (times[k], times[k + 1]);
        let graded = grading_levels(&states[k], &states[k + 1]).is_some();
        let coarse = match piece(t0, t1, &states[k], &states[k + 1], graded)? {
            Ok(v) => v,
            Err(m) => {
                q.violation = Some(m);
                return Ok(q);
            }
        };
        q.vel[0] += coarse.0;
        q.slope[0] += coarse.1;
        let fine = if opts.richardson {
            let m = mid(k)?;
            let tm = 0.5 * (t0 + t1);
            let mut acc = (0.0, 0.0);
            for (ta, tb, a, b) in [(t0, tm, &states[k], &m), (tm, t1, &m, &states[k + 1])] {
                match piece(ta, tb, a, b, graded)? {
                    Ok((r, s)) => {
                        acc.0 += r;
                        acc.1 += s;
                    }
                    Err(mk) => {
                        q.violation = Some(mk);
                        return Ok(q);
                    }
                }
            }
            acc
        } else {
            coarse
        };
        q.vel[1] += fine.0;
        q.slope[1] += fine.1;
        if opts.per_interval {
            q.per_interval.push(IntervalContribution { t0, t1, contribution: fine.0 + fine.1 });
        }
    }
    Ok(q)
}

fn extrapolate(coarse: f64, fine: f64) -> f64 {
    let x = fine + (fine - coarse) / 3.0;
    if x >= 0.0 {
        x
    } else {
        fine
    }
}

fn report(
    scale: Scale,
    tilted: bool,
    intervals: usize,
    quad: Quad,
    energy_initial: f64,
    energy_final: f64,
    opts: &QuadratureOptions,
) -> DissipationReport {
    let per_interval = opts.per_interval.then_some(quad.per_interval);
    if let Some(m) = quad.violation {
        let inf = Extended::Infinite(m.violation.clone());
        return DissipationReport {
            scale,
            tilted,
            velocity_part: inf.clone(),
            slope_part: inf.clone(),
            total: inf,
            first_violation: Some(m),
            quadrature_error: 0.0,
            energy_initial,
            energy_final,
            edb_residual: None,
            intervals,
            per_interval,
        };
    }
    let vel = extrapolate(quad.vel[0], quad.vel[1]);
    let slope = extrapolate(quad.slope[0], quad.slope[1]);
    let total = vel + slope;
    let err = ((quad.vel[1] + quad.slope[1]) - (quad.vel[0] + quad.slope[0])).abs() / 3.0;
    DissipationReport {
        scale,
        tilted,
        velocity_part: Extended::Finite(vel),
        slope_part: Extended::Finite(slope),
        total: Extended::Finite(total),
        first_violation: None,
        quadrature_error: err,
        energy_initial,
        energy_final,
        edb_residual: Some(energy_final + total - energy_initial),
        intervals,
        per_interval,
    }
}

/// Lagrange midpoint, or the linear one if interpolation undershoots 0.
/// Clamping instead would break the linear conservation laws.
fn nonneg_midpoint(times: &[f64], states: &[Vec<f64>], k: usize) -> Vec<f64> {
    let m = lagrange_midpoint(times, states, k);
    if m.iter().all(|&x| x >= 0.0) {
        m
    } else {
        states[k].iter().zip(&states[k + 1]).map(|(a, b)| 0.5 * (a + b)).collect()
    }
}

fn check_c_trajectory(traj: &Trajectory, net: &ReactionNetwork) -> Result<()> {
    if traj.meta.kind == DynamicsKind::Reduced {
        return Err(Error::Invalid("expected a trajectory in species coordinates".into()));
    }
    for s in &traj.states {
        net.check_state(s)?;
    }
    Ok(())
}

/// `D_ε` (or the tilted `D^η_ε`) along a species trajectory.
pub fn dissipation_eps(traj: &Trajectory, net: &ReactionNetwork, eps: f64, eta: &TiltVector) -> Result<DissipationReport> {
    dissipation_eps_with(traj, net, eps, eta, &QuadratureOptions::default(), None)
}

pub fn dissipation_eps_with(
    traj: &Trajectory,
    net: &ReactionNetwork,
    eps: f64,
    eta: &TiltVector,
    opts: &QuadratureOptions,
    refine: Option<Refiner>,
) -> Result<DissipationReport> {
    check_c_trajectory(traj, net)?;
    let scale = Scale::Eps(eps);
    let ev = GradientEvaluator::new(net, scale)?;
    let tilted = !eta.is_zero();
    let tilted_net = if tilted { Some(net.tilt(eta)?.0) } else { None };
    let slope_ev = match &tilted_net {
        Some(t) => GradientEvaluator::new(t, scale)?,
        None => ev.clone(),
    };
    let integrand = |c: &[f64], v: &[f64]| -> Result<(Extended, Extended)> {
        Ok((ev.primal_dissipation(c, v)?, slope_ev.slope(c)?))
    };
    let mid = |k: usize| -> Result<Vec<f64>> {
        match refine {
            Some(f) => f(0.5 * (traj.times[k] + traj.times[k + 1])),
            None => Ok(nonneg_midpoint(&traj.times, &traj.states, k)),
        }
    };
    let quad = quadrature(&traj.times, &traj.states, &column_projector(&net.structure().gamma_matrix()), &mid, &integrand, opts)?;
    let e0 = gradient::tilted_energy(net, traj.initial_state(), eta)?;
    let e1 = gradient::tilted_energy(net, traj.final_state(), eta)?;
    Ok(report(scale, tilted, traj.len() - 1, quad, e0, e1, opts))
}

/// `D_0` along a curve on `ℳ_slow`, given in species or reduced coordinates.
pub fn dissipation_zero(traj: &Trajectory, net: &ReactionNetwork) -> Result<DissipationReport> {
    dissipation_zero_with(traj, net, &QuadratureOptions::default(), None)
}

pub fn dissipation_zero_with(
    traj: &Trajectory,
    net: &ReactionNetwork,
    opts: &QuadratureOptions,
    refine: Option<Refiner>,
) -> Result<DissipationReport> {
    let ev = GradientEvaluator::new(net, Scale::Limit)?;
    let reduced = traj.meta.kind == DynamicsKind::Reduced;
    if reduced {
        if traj.dim() != net.m_fast() {
            return Err(Error::Dimension { expected: net.m_fast(), got: traj.dim() });
        }
        let solver = SlowManifoldSolver::new(net);
        let integrand = |q: &[f64], w: &[f64]| -> Result<(Extended, Extended)> {
            let c = solver.psi(q)?;
            let (sl, _) = ev.slope_parts(c.as_slice())?;
            Ok((ev.reduced_primal(c.as_slice(), w)?, Extended::Finite(sl)))
        };
        let mid = |k: usize| -> Result<Vec<f64>> {
            match refine {
                Some(f) => f(0.5 * (traj.times[k] + traj.times[k + 1])),
                None => Ok(lagrange_midpoint(&traj.times, &traj.states, k)),
            }
        };
        let reduced_velocities = column_projector(&(net.coarse_graining() * net.structure().gamma_matrix()));
        let quad = quadrature(&traj.times, &traj.states, &reduced_velocities, &mid, &integrand, opts)?;
        let e0 = solver.reduced_energy(traj.initial_state())?;
        let e1 = solver.reduced_energy(traj.final_state())?;
        return Ok(report(Scale::Limit, false, traj.len() - 1, quad, e0, e1, opts));
    }
    check_c_trajectory(traj, net)?;
    let e0 = gradient::energy(net, traj.initial_state())?;
    let e1 = gradient::energy(net, traj.final_state())?;
    for (t, c) in traj.times.iter().zip(&traj.states) {
        let (_, fa) = ev.slope_parts(c)?;
        if fa > opts.node_tol * ev.fast_slope_scale(c) {
            let quad = Quad {
                vel: [0.0; 2],
                slope: [0.0; 2],
                violation: Some(InfiniteMarker { time: *t, violation: Violation::OffFastEquilibria { slope_fast: fa } }),
                per_interval: Vec::new(),
            };
            return Ok(report(Scale::Limit, false, traj.len() - 1, quad, e0, e1, opts));
        }
    }
    let integrand = |c: &[f64], v: &[f64]| -> Result<(Extended, Extended)> {
        let (sl, _) = ev.slope_parts(c)?;
        Ok((ev.effective_primal(c, v)?, Extended::Finite(sl)))
    };
    let mid = |k: usize| -> Result<Vec<f64>> {
        match refine {
            Some(f) => f(0.5 * (traj.times[k] + traj.times[k + 1])),
            None => Ok(nonneg_midpoint(&traj.times, &traj.states, k)),
        }
    };
    let quad = quadrature(&traj.times, &traj.states, &column_projector(&net.structure().gamma_matrix()), &mid, &integrand, opts)?;
    Ok(report(Scale::Limit, false, traj.len() - 1, quad, e0, e1, opts))
}

/// EDB residual `E(c(T)) + D − E(c(0))`; `+∞` when `D` is infinite.
pub fn edb_check(traj: &Trajectory, net: &ReactionNetwork, scale: Scale, eta: &TiltVector) -> Result<f64> {
    let rep = match scale {
        Scale::Eps(e) => dissipation_eps(traj, net, e, eta)?,
        Scale::Limit => {
            if !eta.is_zero() {
                return Err(Error::Invalid("tilted limit functional is not supported; tilt the network instead".into()));
            }
            dissipation_zero(traj, net)?
        }
    };
    Ok(rep.edb_residual.unwrap_or(f64::INFINITY))
}

/// `∫ S_fa(c) dt` by the composite midpoint rule on the nodes.
pub fn fast_slope_integral(traj: &Trajectory, net: &ReactionNetwork) -> Result<f64> {
    let ev = GradientEvaluator::new(net, Scale::Limit)?;
    let mut acc = 0.0;
    for k in 0..traj.len().saturating_sub(1) {
        let a = DVector::from_column_slice(&traj.states[k]);
        let b = DVector::from_column_slice(&traj.states[k + 1]);
        let m = (a + b) * 0.5;
        acc += (traj.times[k + 1] - traj.times[k]) * ev.slope_parts(m.as_slice())?.1;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate_full, uniform_times, IntegratorOptions};
    use crate::fixtures;

    fn constant(c: &[f64], n: usize) -> Trajectory {
        let mut ts = vec![0.0];
        ts.extend(uniform_times(1.0, n));
        Trajectory::from_fn(ts, |_| c.to_vec()).unwrap()
    }

    #[test]
    fn equilibrium_has_zero_dissipation() {
        let net = fixtures::three_species();
        let tr = constant(net.c_star(), 10);
        let z = TiltVector::zero(3);
        let r = dissipation_eps(&tr, &net, 0.1, &z).unwrap();
        assert!(r.total.to_f64().abs() < 1e-14);
        assert!(r.edb_residual.unwrap().abs() < 1e-14);
        let r0 = dissipation_zero(&tr, &net).unwrap();
        assert!(r0.total.to_f64().abs() < 1e-14);
    }

    #[test]
    fn off_manifold_constant_is_infinite() {
        let net = fixtures::three_species();
        let tr = constant(&[10.0, 4.0, 0.0], 5);
        let r = dissipation_zero(&tr, &net).unwrap();
        let m = r.first_violation.unwrap();
        assert_eq!(m.time, 0.0);
        match m.violation {
            Violation::OffFastEquilibria { slope_fast } => assert!((slope_fast - 80.0).abs() < 1e-10),
            v => panic!("unexpected {v:?}"),
        }
    }

    #[test]
    fn conservation_violation_is_infinite() {
        let net = fixtures::three_species();
        let tr = Trajectory::from_fn(vec![0.0, 0.5, 1.0], |t| vec![1.0 + t, 9.0, 3.0]).unwrap();
        let r = dissipation_eps(&tr, &net, 1.0, &TiltVector::zero(3)).unwrap();
        assert!(matches!(r.total, Extended::Infinite(Violation::OutsideStoichiometricSubspace { .. })));
        assert_eq!(r.edb_residual, None);
    }

    #[test]
    fn solution_satisfies_edb() {
        let net = fixtures::three_species();
        let opts = IntegratorOptions::with_tolerances(1e-9, 1e-11);
        let tr = integrate_full(&net, 0.5, &[10.0, 4.0, 0.1], 2.0, &opts).unwrap();
        let r = dissipation_eps(&tr, &net, 0.5, &TiltVector::zero(3)).unwrap();
        let e0 = r.energy_initial;
        assert!(r.edb_residual.unwrap().abs() <= 1e-6 * (1.0 + e0), "{r:?}");
    }

    #[test]
    fn non_solution_has_positive_residual() {
        let net = fixtures::three_species();
        let g = [1.0, 1.0, -2.0];
        let tr = Trajectory::from_fn((0..=50).map(|k| k as f64 / 50.0).collect(), |t| {
            net.c_star().iter().zip(&g).map(|(c, gi)| c + 0.3 * t * gi).collect()
        })
        .unwrap();
        let res = edb_check(&tr, &net, Scale::Eps(1.0), &TiltVector::zero(3)).unwrap();
        assert!(res > 1e-3);
    }

    #[test]
    fn tilt_consistency() {
        let net = fixtures::three_species();
        let opts = IntegratorOptions::with_tolerances(1e-8, 1e-10);
        let tr = integrate_full(&net, 0.5, &[6.0, 5.0, 3.0], 1.0, &opts).unwrap();
        let eta = TiltVector::new(vec![0.3, -0.2, 0.1]);
        let (tnet, _) = net.tilt(&eta).unwrap();
        let a = dissipation_eps(&tr, &net, 0.5, &eta).unwrap();
        let b = dissipation_eps(&tr, &tnet, 0.5, &TiltVector::zero(3)).unwrap();
        assert!((a.total.to_f64() - b.total.to_f64()).abs() <= 1e-9 * (1.0 + b.total.to_f64()));
    }

    #[test]
    fn node_only_midpoints_are_exact_for_cubics() {
        let times = vec![0.0, 0.3, 0.7, 1.2, 2.0];
        let f = |t: f64| 1.0 + t - 2.0 * t * t + 0.5 * t * t * t;
        let states: Vec<Vec<f64>> = times.iter().map(|&t| vec![f(t)]).collect();
        for k in 0..4 {
            let m = lagrange_midpoint(&times, &states, k);
            assert!((m[0] - f(0.5 * (times[k] + times[k + 1]))).abs() < 1e-12);
        }
    }
}
