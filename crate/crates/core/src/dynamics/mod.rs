//! Time integration of the fast-slow rate equation and its limit forms.

mod dopri;
mod tr_bdf2;

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::equilibria::SlowManifoldSolver;
use crate::error::{Error, Result};
use crate::network::ReactionNetwork;
use dopri::PostStep;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsKind {
    Full,
    Projected,
    Reduced,
    /// Built from samples or read from a file.
    External,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverStats {
    pub accepted: usize,
    pub rejected: usize,
    pub negativity_rejections: usize,
    pub newton_failures: usize,
    pub rhs_evals: usize,
    pub jacobian_evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub kind: DynamicsKind,
    pub eps: Option<f64>,
    pub solver: Option<String>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub stats: SolverStats,
    pub completed: bool,
    pub diagnostic: Option<String>,
}

impl TrajectoryMeta {
    fn external() -> Self {
        TrajectoryMeta {
            kind: DynamicsKind::External,
            eps: None,
            solver: None,
            rtol: None,
            atol: None,
            stats: SolverStats::default(),
            completed: true,
            diagnostic: None,
        }
    }
}

/// Sampled curve `t ↦ c(t)` (or `q(t)` for reduced runs).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `ċ` at the nodes, used for Hermite dense output when present.
    pub derivatives: Option<Vec<Vec<f64>>>,
    /// `λ(t)` for projected runs.
    pub multipliers: Option<Vec<Vec<f64>>>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    /// Trajectory from raw samples; times must be strictly increasing.
    pub fn from_samples(times: Vec<f64>, states: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != states.len() {
            return Err(Error::Invalid("times and states must be nonempty and of equal length".into()));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("times must be finite and strictly increasing".into()));
        }
        let dim = states[0].len();
        if states.iter().any(|s| s.len() != dim) {
            return Err(Error::Invalid("states have inconsistent dimensions".into()));
        }
        if states.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("states must be finite".into()));
        }
        Ok(Trajectory { times, states, derivatives: None, multipliers: None, meta: TrajectoryMeta::external() })
    }

    /// Samples `f` at the given times.
    pub fn from_fn(times: Vec<f64>, mut f: impl FnMut(f64) -> Vec<f64>) -> Result<Self> {
        let states = times.iter().map(|&t| f(t)).collect();
        Self::from_samples(times, states)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.states[0]
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("nonempty")
    }

    /// Dense output: cubic Hermite when derivatives are stored, linear otherwise.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let n = self.len();
        if t <= self.times[0] || n == 1 {
            return DVector::from_column_slice(&self.states[0]);
        }
        if t >= self.times[n - 1] {
            return DVector::from_column_slice(&self.states[n - 1]);
        }
        let k = self.times.partition_point(|&x| x <= t) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let y0 = &self.states[k];
        let y1 = &self.states[k + 1];
        match &self.derivatives {
            Some(d) => {
                let (h00, h10) = ((1.0 + 2.0 * s) * (1.0 - s).powi(2), s * (1.0 - s).powi(2));
                let (h01, h11) = (s * s * (3.0 - 2.0 * s), s * s * (s - 1.0));
                DVector::from_fn(y0.len(), |i, _| {
                    h00 * y0[i] + h10 * h * d[k][i] + h01 * y1[i] + h11 * h * d[k + 1][i]
                })
            }
            None => DVector::from_fn(y0.len(), |i, _| (1.0 - s) * y0[i] + s * y1[i]),
        }
    }

    /// Time derivative of the dense output.
    pub fn eval_derivative(&self, t: f64) -> DVector<f64> {
        let n = self.len();
        if n == 1 {
            return DVector::zeros(self.dim());
        }
        let k = (self.times.partition_point(|&x| x <= t).max(1) - 1).min(n - 2);
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let h = t1 - t0;
        let s = ((t - t0) / h).clamp(0.0, 1.0);
        let y0 = &self.states[k];
        let y1 = &self.states[k + 1];
        match &self.derivatives {
            Some(d) => {
                let (g00, g10) = (6.0 * s * (s - 1.0) / h, (1.0 - s) * (1.0 - 3.0 * s));
                let (g01, g11) = (-6.0 * s * (s - 1.0) / h, s * (3.0 * s - 2.0));
                DVector::from_fn(y0.len(), |i, _| g00 * y0[i] + g10 * d[k][i] + g01 * y1[i] + g11 * d[k + 1][i])
            }
            None => DVector::from_fn(y0.len(), |i, _| (y1[i] - y0[i]) / h),
        }
    }

    /// Restriction to `[t0, T]`; a dense-output node is inserted at `t0` unless
    /// it would be negative in species coordinates.
    pub fn tail_from(&self, t0: f64) -> Trajectory {
        let first = self.times.partition_point(|&x| x < t0);
        if first == 0 || first >= self.len() {
            return self.clone();
        }
        let mut out = self.clone();
        out.times = self.times[first..].to_vec();
        out.states = self.states[first..].to_vec();
        out.derivatives = self.derivatives.as_ref().map(|d| d[first..].to_vec());
        out.multipliers = self.multipliers.as_ref().map(|m| m[first..].to_vec());
        let y = self.eval(t0);
        let ok = self.meta.kind == DynamicsKind::Reduced || y.iter().all(|&x| x >= 0.0);
        if ok && self.times[first] > t0 {
            out.times.insert(0, t0);
            out.states.insert(0, y.as_slice().to_vec());
            if let Some(d) = out.derivatives.as_mut() {
                d.insert(0, self.eval_derivative(t0).as_slice().to_vec());
            }
            if let Some(m) = out.multipliers.as_mut() {
                m.insert(0, m[0].clone());
            }
        }
        out
    }

    fn state_prefix(&self) -> &'static str {
        if self.meta.kind == DynamicsKind::Reduced {
            "q"
        } else {
            "c"
        }
    }

    /// CSV with header `t,c1,...` (or `t,q1,...`), plus `lambda1,...` columns
    /// when multipliers are present. Floats carry 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let extra: Vec<(String, Vec<Vec<f64>>)> = self
            .multipliers
            .iter()
            .map(|m| ("lambda".to_string(), m.clone()))
            .collect();
        write_columns(w, &self.times, self.state_prefix(), &self.states, &extra)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
    }

    /// Reads a CSV written by [`Self::write_csv`]. Columns other than `t`,
    /// `c*`/`q*` and `lambda*` are ignored.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header = rdr.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
        if header.get(0) != Some("t") {
            return Err(Error::Format("first CSV column must be `t`".into()));
        }
        let numbered = |prefix: &str| -> Vec<usize> {
            header
                .iter()
                .enumerate()
                .filter(|(_, h)| h.strip_prefix(prefix).is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit())))
                .map(|(i, _)| i)
                .collect()
        };
        let (kind, cols) = match (numbered("c"), numbered("q")) {
            (c, q) if !c.is_empty() && q.is_empty() => (DynamicsKind::External, c),
            (c, q) if c.is_empty() && !q.is_empty() => (DynamicsKind::Reduced, q),
            _ => return Err(Error::Format("CSV needs either c1.. or q1.. state columns".into())),
        };
        let lam = numbered("lambda");
        let mut times = Vec::new();
        let mut states = Vec::new();
        let mut lambdas = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
            let num = |i: usize| -> Result<f64> {
                let s = rec.get(i).ok_or_else(|| Error::Format("short CSV row".into()))?;
                s.trim().parse::<f64>().map_err(|e| Error::Format(format!("bad number `{s}`: {e}")))
            };
            times.push(num(0)?);
            states.push(cols.iter().map(|&i| num(i)).collect::<Result<Vec<_>>>()?);
            if !lam.is_empty() {
                lambdas.push(lam.iter().map(|&i| num(i)).collect::<Result<Vec<_>>>()?);
            }
        }
        let mut traj = Self::from_samples(times, states)?;
        traj.meta.kind = kind;
        if !lam.is_empty() {
            traj.multipliers = Some(lambdas);
        }
        Ok(traj)
    }

    pub fn meta_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.meta).map_err(|e| Error::Format(e.to_string()))
    }
}

pub(crate) fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `t` followed by numbered column groups.
pub fn write_columns<W: Write>(
    w: W,
    times: &[f64],
    prefix: &str,
    states: &[Vec<f64>],
    extra: &[(String, Vec<Vec<f64>>)],
) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    let io = |e: csv::Error| Error::Format(e.to_string());
    let dim = states.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    header.extend((1..=dim).map(|i| format!("{prefix}{i}")));
    for (name, cols) in extra {
        header.extend((1..=cols.first().map_or(0, Vec::len)).map(|i| format!("{name}{i}")));
    }
    wtr.write_record(&header).map_err(io)?;
    for (k, &t) in times.iter().enumerate() {
        let mut row = vec![fmt17(t)];
        row.extend(states[k].iter().map(|&x| fmt17(x)));
        for (_, cols) in extra {
            row.extend(cols[k].iter().map(|&x| fmt17(x)));
        }
        wtr.write_record(&row).map_err(io)?;
    }
    wtr.flush().map_err(|e| Error::Format(e.to_string()))
}

/// Tolerances and output control shared by both integrators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: Option<f64>,
    pub max_steps: usize,
    /// Record only at these times (steps land on them exactly); every accepted
    /// step is recorded when `None`.
    pub output_times: Option<Vec<f64>>,
    /// Components below `-negativity_tol` reject the step; smaller undershoots are clamped.
    pub negativity_tol: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            rtol: 1e-8,
            atol: 1e-10,
            max_step: None,
            max_steps: 2_000_000,
            output_times: None,
            negativity_tol: 1e-12,
        }
    }
}

impl IntegratorOptions {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        IntegratorOptions { rtol, atol, ..Default::default() }
    }

    pub fn with_output_times(mut self, times: Vec<f64>) -> Self {
        self.output_times = Some(times);
        self
    }

    pub fn with_max_step(mut self, h: f64) -> Self {
        self.max_step = Some(h);
        self
    }
}

/// `n + 1` equally spaced times on `[0, t_end]`, excluding 0.
pub fn uniform_times(t_end: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|k| if k == n { t_end } else { t_end * k as f64 / n as f64 }).collect()
}

pub(crate) fn wrms(v: &DVector<f64>, scale: &DVector<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().zip(scale.iter()).map(|(x, s)| (x / s).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

pub(crate) struct RawOutput {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub derivs: Vec<DVector<f64>>,
    pub stats: SolverStats,
    pub completed: bool,
    pub diagnostic: Option<String>,
}

/// Bookkeeping shared by the one-step methods: clock, output times, scales.
pub(crate) struct Stepper<'o> {
    pub t: f64,
    pub y: DVector<f64>,
    t_end: f64,
    opts: &'o IntegratorOptions,
    stops: Vec<f64>,
    next_stop: usize,
    landing: bool,
    pub last_unclipped: f64,
    pub out: RawOutput,
}

impl<'o> Stepper<'o> {
    pub fn new(y0: DVector<f64>, t_end: f64, opts: &'o IntegratorOptions) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::Invalid(format!("final time must be positive, got {t_end}")));
        }
        if !(opts.rtol > 0.0 && opts.atol > 0.0 && opts.rtol.is_finite() && opts.atol.is_finite()) {
            return Err(Error::Invalid("tolerances must be positive".into()));
        }
        if opts.max_step.is_some_and(|h| !(h > 0.0)) {
            return Err(Error::Invalid("max_step must be positive".into()));
        }
        let mut stops = match &opts.output_times {
            Some(ts) => {
                if ts.iter().any(|&t| !(t > 0.0 && t <= t_end)) || ts.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Invalid("output times must be increasing in (0, T]".into()));
                }
                ts.clone()
            }
            None => Vec::new(),
        };
        if stops.last() != Some(&t_end) {
            stops.push(t_end);
        }
        Ok(Stepper {
            t: 0.0,
            y: y0,
            t_end,
            opts,
            stops,
            next_stop: 0,
            landing: false,
            last_unclipped: 0.0,
            out: RawOutput {
                times: Vec::new(),
                states: Vec::new(),
                derivs: Vec::new(),
                stats: SolverStats::default(),
                completed: true,
                diagnostic: None,
            },
        })
    }

    pub fn record_initial(&mut self, k: &DVector<f64>) {
        self.out.times.push(0.0);
        self.out.states.push(self.y.clone());
        self.out.derivs.push(k.clone());
    }

    pub fn scale(&self, y: &DVector<f64>) -> DVector<f64> {
        y.map(|x| self.opts.atol + self.opts.rtol * x.abs())
    }

    pub fn scale2(&self, y_new: &DVector<f64>) -> DVector<f64> {
        self.y.zip_map(y_new, |a, b| self.opts.atol + self.opts.rtol * a.abs().max(b.abs()))
    }

    pub fn initial_step(&self, k1: &DVector<f64>, order: i32) -> f64 {
        let sc = self.scale(&self.y);
        let d0 = wrms(&self.y, &sc);
        let d1 = wrms(k1, &sc);
        let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 * self.t_end } else { 0.01 * d0 / d1 };
        if d1 > 0.0 {
            h = h.min((0.01 / d1).powf(1.0 / (order as f64 + 1.0)).max(1e-3 * h));
        }
        if let Some(m) = self.opts.max_step {
            h = h.min(m);
        }
        h.min(self.t_end).max(1e-12 * self.t_end)
    }

    pub fn done(&self) -> bool {
        self.t >= self.t_end
    }

    /// Limits `h` by `max_step` and the next output time.
    pub fn clip(&mut self, h: f64) -> (f64, bool) {
        let mut h = h;
        if let Some(m) = self.opts.max_step {
            h = h.min(m);
        }
        self.last_unclipped = h;
        let stop = self.stops[self.next_stop];
        if self.t + 1.01 * h >= stop {
            self.landing = true;
            let hs = stop - self.t;
            (hs, hs < h)
        } else {
            self.landing = false;
            (h, false)
        }
    }

    pub fn accept(&mut self, h: f64, y: DVector<f64>, k: &DVector<f64>) {
        self.out.stats.accepted += 1;
        let record = if self.landing {
            self.t = self.stops[self.next_stop];
            self.next_stop += 1;
            true
        } else {
            self.t += h;
            self.opts.output_times.is_none()
        };
        self.y = y;
        if record {
            self.out.times.push(self.t);
            self.out.states.push(self.y.clone());
            self.out.derivs.push(k.clone());
        }
        if self.out.stats.accepted >= self.opts.max_steps && !self.done() {
            self.out.completed = false;
            self.out.diagnostic = Some(format!("step limit {} reached at t = {}", self.opts.max_steps, self.t));
            self.t = self.t_end;
        }
    }

    pub fn finish(self) -> RawOutput {
        self.out
    }
}

fn into_trajectory(raw: RawOutput, kind: DynamicsKind, eps: Option<f64>, solver: &str, opts: &IntegratorOptions) -> Trajectory {
    Trajectory {
        times: raw.times,
        states: raw.states.iter().map(|v| v.as_slice().to_vec()).collect(),
        derivatives: Some(raw.derivs.iter().map(|v| v.as_slice().to_vec()).collect()),
        multipliers: None,
        meta: TrajectoryMeta {
            kind,
            eps,
            solver: Some(solver.to_string()),
            rtol: Some(opts.rtol),
            atol: Some(opts.atol),
            stats: raw.stats,
            completed: raw.completed,
            diagnostic: raw.diagnostic,
        },
    }
}

/// Solves `ċ = R_ε(c)` on `[0, T]` with adaptive TR-BDF2.
pub fn integrate_full(
    net: &ReactionNetwork,
    eps: f64,
    c0: &[f64],
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Invalid(format!("eps must be positive, got {eps}")));
    }
    net.check_state(c0)?;
    let f = |y: &DVector<f64>| {
        let (s, fa) = net.rate_parts_unchecked(y.as_slice());
        s + fa / eps
    };
    let jac = |y: &DVector<f64>| net.jacobian_unchecked(y.as_slice(), eps);
    let raw = tr_bdf2::integrate(f, jac, DVector::from_column_slice(c0), t_end, opts)?;
    Ok(into_trajectory(raw, DynamicsKind::Full, Some(eps), "tr-bdf2", opts))
}

/// Oblique projector onto `Γ_fa` along `H(c)⁻¹ Γ_fa^⊥`, `H(c) = diag(1/c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    pub matrix: DMatrix<f64>,
}

impl Projector {
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }
}

/// `P = G (GᵀHG)⁻¹ GᵀH` with `G` the stored basis of `Γ_fa`.
pub fn projector(net: &ReactionNetwork, c: &[f64]) -> Result<Projector> {
    let n = net.num_species();
    if c.len() != n {
        return Err(Error::Dimension { expected: n, got: c.len() });
    }
    if let Some(i) = c.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::NegativeState { index: i, value: c[i] });
    }
    let g = net.structure().gamma_fast_matrix();
    if g.ncols() == 0 {
        return Ok(Projector { matrix: DMatrix::zeros(n, n) });
    }
    let hg = DMatrix::from_fn(n, g.ncols(), |i, j| g[(i, j)] / c[i]);
    let m = g.tr_mul(&hg);
    let inv = m
        .cholesky()
        .ok_or_else(|| Error::Numerical("fast basis is rank deficient".into()))?
        .inverse();
    Ok(Projector { matrix: &g * inv * hg.transpose() })
}

/// `(I − P(c)) R_sl(c)` and `λ = −P(c) R_sl(c)`.
fn projected_field(net: &ReactionNetwork, c: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let p = projector(net, c.as_slice())?;
    let (r_sl, _) = net.rate_parts_unchecked(c.as_slice());
    let lam = -(&p.matrix * &r_sl);
    Ok((&r_sl + &lam, lam))
}

/// `Ψ(Q_fa c0)`.
pub fn well_prepare(net: &ReactionNetwork, c0: &[f64]) -> Result<DVector<f64>> {
    SlowManifoldSolver::new(net).well_prepare(c0)
}

/// Solves `ċ = (I − P(c)) R_sl(c)` on `ℳ_slow`, renormalizing onto the
/// manifold after every step and recording `λ(t)`.
pub fn integrate_projected(net: &ReactionNetwork, c0: &[f64], t_end: f64, opts: &IntegratorOptions) -> Result<Trajectory> {
    net.check_state(c0)?;
    let solver = SlowManifoldSolver::new(net);
    let start = solver.solve(solver.project(c0).as_slice(), None)?;
    let c0v = DVector::from_column_slice(c0);
    if (&start.c - &c0v).amax() > 1e-8 * (1.0 + c0v.amax()) {
        return Err(Error::Invalid("initial state is not on the slow manifold".into()));
    }
    if c0.iter().any(|&x| x <= 0.0) {
        return Err(Error::Invalid("projected dynamics needs a positive initial state".into()));
    }
    let f = |c: &DVector<f64>| projected_field(net, c).map(|(v, _)| v);
    let mut mu = Some(start.mu);
    let post = |c: &mut DVector<f64>| -> Result<PostStep> {
        if c.iter().any(|&x| !(x > 0.0)) {
            return Ok(PostStep::Stop("state left the positive cone".into()));
        }
        let sol = solver.solve(solver.project(c.as_slice()).as_slice(), mu.as_ref())?;
        if sol.c.iter().any(|&x| !(x > 0.0)) {
            return Ok(PostStep::Stop("slow-manifold point reached the boundary".into()));
        }
        *c = sol.c;
        mu = Some(sol.mu);
        Ok(PostStep::Continue(true))
    };
    let raw = dopri::integrate(f, post, c0v, t_end, opts)?;
    let mut traj = into_trajectory(raw, DynamicsKind::Projected, None, "dopri5", opts);
    let lam = traj
        .states
        .iter()
        .map(|c| projected_field(net, &DVector::from_column_slice(c)).map(|(_, l)| l.as_slice().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    traj.multipliers = Some(lam);
    Ok(traj)
}

/// Solves `q̇ = Q_fa R_sl(Ψ(q))` in the reduced coordinates.
pub fn integrate_reduced(net: &ReactionNetwork, q0: &[f64], t_end: f64, opts: &IntegratorOptions) -> Result<Trajectory> {
    let solver = SlowManifoldSolver::new(net);
    let qf = solver.coarse_graining().clone();
    let mut mu = Some(solver.solve(q0, None)?.mu);
    let f = |q: &DVector<f64>| -> Result<DVector<f64>> {
        let sol = solver.solve(q.as_slice(), mu.as_ref())?;
        let (r_sl, _) = net.rate_parts_unchecked(sol.c.as_slice());
        mu = Some(sol.mu);
        Ok(&qf * r_sl)
    };
    let raw = dopri::integrate(f, |_: &mut DVector<f64>| Ok(PostStep::Continue(false)), DVector::from_column_slice(q0), t_end, opts)?;
    Ok(into_trajectory(raw, DynamicsKind::Reduced, None, "dopri5", opts))
}

/// `t ↦ Ψ(q(t))` on the same grid; derivatives are lifted with `DΨ`.
pub fn lift_reduced(net: &ReactionNetwork, traj: &Trajectory) -> Result<Trajectory> {
    let solver = SlowManifoldSolver::new(net);
    if traj.dim() != net.m_fast() {
        return Err(Error::Dimension { expected: net.m_fast(), got: traj.dim() });
    }
    let mut states = Vec::with_capacity(traj.len());
    let mut derivs = Vec::with_capacity(traj.len());
    let mut mu = None;
    for (k, q) in traj.states.iter().enumerate() {
        let sol = solver.solve(q, mu.as_ref())?;
        if let Some(d) = &traj.derivatives {
            let dpsi = solver.d_psi_at(&sol.c)?;
            derivs.push((dpsi * DVector::from_column_slice(&d[k])).as_slice().to_vec());
        }
        states.push(sol.c.as_slice().to_vec());
        mu = Some(sol.mu);
    }
    let mut meta = traj.meta.clone();
    meta.kind = DynamicsKind::External;
    Ok(Trajectory {
        times: traj.times.clone(),
        states,
        derivatives: traj.derivatives.as_ref().map(|_| derivs),
        multipliers: None,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn equilibrium_is_stationary() {
        let net = fixtures::three_species();
        let tr = integrate_full(&net, 0.1, net.c_star(), 3.0, &IntegratorOptions::default()).unwrap();
        assert!(tr.states.iter().all(|s| max_diff(s, net.c_star()) < 1e-12));
        let q0 = SlowManifoldSolver::new(&net).project(net.c_star());
        let red = integrate_reduced(&net, q0.as_slice(), 3.0, &IntegratorOptions::default()).unwrap();
        assert!(red.states.iter().all(|s| max_diff(s, q0.as_slice()) < 1e-12));
        let pr = integrate_projected(&net, net.c_star(), 3.0, &IntegratorOptions::default()).unwrap();
        assert!(pr.states.iter().all(|s| max_diff(s, net.c_star()) < 1e-10));
        assert!(pr.multipliers.unwrap().iter().all(|l| l.iter().all(|x| x.abs() < 1e-10)));
    }

    #[test]
    fn three_species_fast_then_slow() {
        let net = fixtures::three_species();
        let opts = IntegratorOptions::with_tolerances(1e-8, 1e-10);
        let tr = integrate_full(&net, 0.2, &[10.0, 4.0, 0.0], 40.0, &opts).unwrap();
        let q = [[1.0, 1.0, 1.0]];
        for s in &tr.states {
            let m: f64 = s.iter().zip(&q[0]).map(|(a, b)| a * b).sum();
            assert!((m - 14.0).abs() < 1e-8 * 15.0);
        }
        let e: Vec<f64> = tr.states.iter().map(|s| crate::gradient::energy(&net, s).unwrap()).collect();
        assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        let sigma = 14.0 / 13.0;
        assert!(max_diff(tr.final_state(), &[sigma, 9.0 * sigma, 3.0 * sigma]) < 1e-5);
    }

    #[test]
    fn jump_solution_matches_closed_form() {
        let net = fixtures::autocatalytic_single();
        let eps = 0.01;
        let ts = 0.5;
        let exact = |t: f64| {
            let x = (t - ts) / eps;
            1.0 / (1.0 + (-x).exp())
        };
        // atol below c(0) ≈ 2e-22 so the growth phase is error controlled
        let rtol = 1e-8;
        let opts = IntegratorOptions::with_tolerances(rtol, 1e-300).with_output_times(uniform_times(1.0, 200));
        let tr = integrate_full(&net, eps, &[exact(0.0)], 1.0, &opts).unwrap();
        // global error bounded by the accumulated local tolerance
        let bound = tr.meta.stats.accepted as f64 * rtol;
        for (t, s) in tr.times.iter().zip(&tr.states) {
            let e = exact(*t);
            assert!((s[0] - e).abs() <= bound * e, "t = {t}: {} vs {e}", s[0]);
        }
    }

    #[test]
    fn projector_kernel_and_image() {
        let net = fixtures::three_species();
        let p = projector(&net, &[8.0, 2.0, 4.0]).unwrap().matrix;
        assert!((&p * &p - &p).amax() < 1e-12);
        let g = net.structure().gamma_fast_matrix();
        assert!((&p * &g - &g).amax() < 1e-12);
        for k in [DVector::from_vec(vec![8.0, 2.0, 4.0]), DVector::from_vec(vec![8.0, -2.0, 0.0])] {
            assert!((&p * k).amax() < 1e-12);
        }
    }

    #[test]
    fn projected_initial_velocity() {
        let net = fixtures::three_species();
        let c = DVector::from_vec(vec![8.0, 2.0, 4.0]);
        let (v, lam) = projected_field(&net, &c).unwrap();
        assert!((v[0] - v[1] - (c[2] - 3.0 * c[0])).abs() < 1e-12);
        assert!((v[0] - v[1] + 20.0).abs() < 1e-12);
        assert!(v.sum().abs() < 1e-12);
        let qf = net.coarse_graining();
        assert!((qf * lam).amax() < 1e-12);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let net = fixtures::three_species();
        let tr = integrate_full(&net, 0.5, &[10.0, 4.0, 0.0], 1.0, &IntegratorOptions::default()).unwrap();
        let text = tr.to_csv_string().unwrap();
        assert!(text.starts_with("t,c1,c2,c3\n"));
        let back = Trajectory::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.times, tr.times);
        assert_eq!(back.states, tr.states);
    }

    #[test]
    fn rejects_bad_input() {
        let net = fixtures::three_species();
        let o = IntegratorOptions::default();
        assert!(integrate_full(&net, 0.0, &[1.0, 1.0, 1.0], 1.0, &o).is_err());
        assert!(integrate_full(&net, 1.0, &[-1.0, 1.0, 1.0], 1.0, &o).is_err());
        assert!(integrate_full(&net, 1.0, &[1.0, 1.0, 1.0], -1.0, &o).is_err());
        assert!(integrate_projected(&net, &[10.0, 4.0, 0.1], 1.0, &o).is_err());
        assert!(Trajectory::from_samples(vec![0.0, 0.0], vec![vec![1.0], vec![1.0]]).is_err());
    }
}
