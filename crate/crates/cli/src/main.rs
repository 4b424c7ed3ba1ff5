//! `dbrs`: command-line front end for fast-slow reaction networks.
//!
//! Exit codes: 0 success, 2 usage error, 3 input or validation error,
//! 4 numerical failure (a JSON diagnostic is written to stderr).

mod report;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dbrs_core::convergence::{eps_sweep, recovery_sequence, SweepOptions};
use dbrs_core::dissipation::{dissipation_eps_with, dissipation_zero_with, QuadratureOptions};
use dbrs_core::dynamics::{
    integrate_full, integrate_projected, integrate_reduced, lift_reduced, uniform_times, well_prepare, write_columns,
};
use dbrs_core::equilibria::ufec_check;
use dbrs_core::{parse_network, Error, IntegratorOptions, ReactionNetwork, TiltVector, Trajectory};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::json;

use report::{emit, emit_meta, envelope, pretty, Input};

/// Comma-separated list of finite decimals.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl FromStr for Vector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_list(s).map(Vector)
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    let v = s
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    if v.is_empty() {
        return Err("empty vector".into());
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err("vector entries must be finite".into());
    }
    Ok(v)
}

fn positive(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(format!("expected a positive number, got {s}"))
    }
}

fn nonnegative(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if x.is_finite() && x >= 0.0 {
        Ok(x)
    } else {
        Err(format!("expected a nonnegative number, got {s}"))
    }
}

#[derive(Parser, Debug)]
#[command(name = "dbrs", version, about = "Fast-slow detailed-balance reaction networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a network and summarize its stoichiometric structure.
    Validate(ValidateArgs),
    /// Integrate the full rate equation at a given eps (CSV).
    Simulate(SimulateArgs),
    /// Integrate the reduced equation in slow coordinates (CSV with lifted states).
    Reduce(ReduceArgs),
    /// Integrate the constrained limit equation on the slow manifold (CSV with multipliers).
    Project(ProjectArgs),
    /// Dissipation functional along a trajectory CSV (JSON).
    Dissipation(DissipationArgs),
    /// Check uniqueness of fast equilibria on boundary faces (JSON).
    Ufec(UfecArgs),
    /// Integrate over a decreasing list of eps and compare with the limit.
    Sweep(SweepArgs),
    /// Recovery-sequence dissipation along a reduced path (JSON).
    Recovery(RecoveryArgs),
}

#[derive(Args, Debug, Serialize)]
struct ValidateArgs {
    network: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct IntegratorArgs {
    #[arg(long, default_value_t = 1e-8, value_parser = positive)]
    rtol: f64,
    #[arg(long, default_value_t = 1e-10, value_parser = positive)]
    atol: f64,
    /// Equally spaced output intervals; every accepted step is written when omitted.
    #[arg(long)]
    points: Option<usize>,
    #[arg(long, value_parser = positive)]
    max_step: Option<f64>,
}

impl IntegratorArgs {
    fn options(&self, t_end: f64) -> Result<IntegratorOptions, Failure> {
        let mut o = IntegratorOptions::with_tolerances(self.rtol, self.atol);
        if let Some(n) = self.points {
            if n == 0 {
                return Err(Failure::Input("--points must be positive".into()));
            }
            o = o.with_output_times(uniform_times(t_end, n));
        }
        if let Some(h) = self.max_step {
            o = o.with_max_step(h);
        }
        Ok(o)
    }
}

/// Initial state given inline or in a file; the file wins when both are given.
#[derive(Args, Debug, Serialize)]
struct StateArgs {
    #[arg(long)]
    c0: Option<Vector>,
    #[arg(long)]
    c0_file: Option<PathBuf>,
}

impl StateArgs {
    fn resolve(&self) -> Result<Option<Vec<f64>>, Failure> {
        vector_from(self.c0.as_ref(), self.c0_file.as_deref())
    }
}

fn vector_from(inline: Option<&Vector>, file: Option<&Path>) -> Result<Option<Vec<f64>>, Failure> {
    if let Some(p) = file {
        let input = Input::read(p)?;
        return parse_list(&input.text).map(Some).map_err(|e| Failure::Input(format!("{}: {e}", p.display())));
    }
    Ok(inline.map(|v| v.0.clone()))
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    network: PathBuf,
    #[arg(long, value_parser = positive)]
    eps: f64,
    #[command(flatten)]
    state: StateArgs,
    #[arg(long = "T", value_parser = positive)]
    t_end: f64,
    #[command(flatten)]
    integrator: IntegratorArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ReduceArgs {
    network: PathBuf,
    /// Initial slow coordinates; alternatively `--c0`, mapped through the coarse-graining.
    #[arg(long, conflicts_with_all = ["c0", "c0_file"])]
    q0: Option<Vector>,
    #[command(flatten)]
    state: StateArgs,
    #[arg(long = "T", value_parser = positive)]
    t_end: f64,
    #[command(flatten)]
    integrator: IntegratorArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ProjectArgs {
    network: PathBuf,
    #[command(flatten)]
    state: StateArgs,
    /// Replace c0 by the slow-manifold point with the same slow coordinates.
    #[arg(long)]
    well_prepare: bool,
    #[arg(long = "T", value_parser = positive)]
    t_end: f64,
    #[command(flatten)]
    integrator: IntegratorArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
#[command(group(clap::ArgGroup::new("scale").required(true).args(["eps", "limit"])))]
struct DissipationArgs {
    network: PathBuf,
    #[arg(long)]
    traj: PathBuf,
    #[arg(long, value_parser = positive)]
    eps: Option<f64>,
    /// Evaluate the eps → 0 functional.
    #[arg(long)]
    limit: bool,
    #[arg(long)]
    tilt: Option<Vector>,
    /// Single midpoint pass without extrapolation.
    #[arg(long)]
    no_richardson: bool,
    #[arg(long)]
    per_interval: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct UfecArgs {
    network: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    network: PathBuf,
    #[command(flatten)]
    state: StateArgs,
    /// Strictly decreasing.
    #[arg(long)]
    eps_list: Vector,
    #[arg(long = "T", value_parser = positive)]
    t_end: f64,
    /// Burn-in excluded from the comparisons; defaults to 10 eps |log eps| per row.
    #[arg(long, value_parser = nonnegative)]
    delta: Option<f64>,
    #[command(flatten)]
    integrator: IntegratorArgs,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Also write `eps,t,species,value` rows of every trajectory here.
    #[arg(long)]
    long: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct RecoveryArgs {
    network: PathBuf,
    /// CSV with `t,q1,...` columns, e.g. the output of `reduce`.
    #[arg(long)]
    qpath: PathBuf,
    #[arg(long)]
    eps_list: Vector,
    #[arg(long, default_value_t = 1e-3, value_parser = nonnegative)]
    theta: f64,
    #[arg(long, default_value_t = 8)]
    k: u32,
    /// Shift direction; a verified default is used when omitted.
    #[arg(long)]
    qbar: Option<Vector>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Why a command failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Numerical { kind: String, message: String },
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) => write!(f, "{m}"),
            Failure::Numerical { kind, message } => write!(f, "{kind}: {message}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::LegendreNonConvergence { .. } => "legendre_nonconvergence",
            Error::Infeasible { .. } => "infeasible",
            Error::Integration { .. } => "integration",
            Error::Numerical(_) => "numerical",
            _ => return Failure::Input(e.to_string()),
        };
        Failure::Numerical { kind: kind.into(), message: e.to_string() }
    }
}

fn load_network(path: &Path) -> Result<(Input, ReactionNetwork), Failure> {
    let input = Input::read(path)?;
    let net = parse_network(&input.text)?;
    Ok((input, net))
}

fn require_state(state: Option<Vec<f64>>, net: &ReactionNetwork, what: &str) -> Result<Vec<f64>, Failure> {
    let c = state.ok_or_else(|| Failure::Input(format!("{what} is required")))?;
    if c.len() != net.num_species() {
        return Err(Failure::Input(format!("{what} has {} entries, network has {} species", c.len(), net.num_species())));
    }
    Ok(c)
}

fn validate(a: &ValidateArgs) -> Result<(), Failure> {
    let (input, net) = load_network(&a.network)?;
    let s = net.structure();
    let residual = net.reaction_rate(net.c_star(), 1.0)?.amax();
    let scale = 1.0 + net.c_star().iter().cloned().fold(0.0, f64::max);
    let summary = json!({
        "species": net.species(),
        "reactions": net.num_reactions(),
        "fast_reactions": (0..net.num_reactions()).filter(|&r| net.is_fast(r)).count(),
        "m": s.m(),
        "m_fa": s.m_fast(),
        "dim_gamma": s.dim_gamma(),
        "dim_gamma_fast": s.dim_gamma_fast(),
        "gamma_basis": s.gamma_basis,
        "gamma_fast_basis": s.gamma_fast_basis,
        "q": s.q,
        "q_fast": s.q_fast,
        "coarse_graining": net.coarse_graining_rows(),
        "c_star": net.c_star(),
        "kappa": net.kappa(),
        "detailed_balance": { "verified": residual <= 1e-10 * scale, "residual": residual },
    });
    emit(a.out.as_deref(), &pretty(&envelope("validate", &[&input], a, &summary)?))
}

fn simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let (input, net) = load_network(&a.network)?;
    let c0 = require_state(a.state.resolve()?, &net, "c0")?;
    let tr = integrate_full(&net, a.eps, &c0, a.t_end, &a.integrator.options(a.t_end)?)?;
    emit(a.out.as_deref(), &tr.to_csv_string()?)?;
    emit_meta(a.out.as_deref(), &envelope("simulate", &[&input], a, &tr.meta)?)
}

fn reduce(a: &ReduceArgs) -> Result<(), Failure> {
    let (input, net) = load_network(&a.network)?;
    let q0 = match &a.q0 {
        Some(q) => q.0.clone(),
        None => {
            let c0 = require_state(a.state.resolve()?, &net, "q0 or c0")?;
            (net.coarse_graining() * DVector::from_vec(c0)).as_slice().to_vec()
        }
    };
    if q0.len() != net.m_fast() {
        return Err(Failure::Input(format!("q0 has {} entries, expected {}", q0.len(), net.m_fast())));
    }
    let red = integrate_reduced(&net, &q0, a.t_end, &a.integrator.options(a.t_end)?)?;
    let lifted = lift_reduced(&net, &red)?;
    let mut buf = Vec::new();
    write_columns(&mut buf, &red.times, "q", &red.states, &[("psi".into(), lifted.states)])?;
    emit(a.out.as_deref(), &String::from_utf8(buf).expect("CSV is ASCII"))?;
    emit_meta(a.out.as_deref(), &envelope("reduce", &[&input], a, &red.meta)?)
}

fn project(a: &ProjectArgs) -> Result<(), Failure> {
    let (input, net) = load_network(&a.network)?;
    let mut c0 = require_state(a.state.resolve()?, &net, "c0")?;
    if a.well_prepare {
        c0 = well_prepare(&net, &c0)?.as_slice().to_vec();
    }
    let tr = integrate_projected(&net, &c0, a.t_end, &a.integrator.options(a.t_end)?)?;
    emit(a.out.as_deref(), &tr.to_csv_string()?)?;
    emit_meta(a.out.as_deref(), &envelope("project", &[&input], a, &tr.meta)?)?;
    if !tr.meta.completed {
        return Err(Failure::Numerical {
            kind: "incomplete".into(),
            message: tr.meta.diagnostic.clone().unwrap_or_else(|| "integration stopped early".into()),
        });
    }
    Ok(())
}

fn dissipation(a: &DissipationArgs) -> Result<(), Failure> {
    let (input, net) = load_network(&a.network)?;
    let traj_in = Input::read(&a.traj)?;
    let traj = Trajectory::read_csv(traj_in.text.as_bytes())?;
    let opts = QuadratureOptions { richardson: !a.no_richardson, per_interval: a.per_interval, ..Default::default() };
    let rep = match (a.eps, &a.tilt) {
        (Some(eps), tilt) => {
            let eta = match tilt {
                Some(t) => TiltVector::new(t.0.clone()),
                None => TiltVector::zero(net.num_species()),
            };
            dissipation_eps_with(&traj, &net, eps, &eta, &opts, None)?
        }
        (None, None) => dissipation_zero_with(&traj, &net, &opts, None)?,
        (None, Some(_)) => return Err(Failure::Input("--tilt applies to --eps only; tilt the network file instead".into())),
    };
    emit(a.out.as_deref(), &pretty(&envelope("dissipation", &[&input, &traj_in], a, &rep)?))
}

fn ufec(a: &UfecArgs) -> Result<(), Failure> {
    let (input, net) = load_network(&a.network)?;
    let rep = ufec_check(&net)?;
    emit(a.out.as_deref(), &pretty(&envelope("ufec", &[&input], a, &rep)?))
}

fn sweep(a: &SweepArgs) -> Result<(), Failure> {
    let (input, net) = load_network(&a.network)?;
    let c0 = require_state(a.state.resolve()?, &net, "c0")?;
    let opts = a.integrator.options(a.t_end)?;
    let res = eps_sweep(&net, &c0, a.t_end, &a.eps_list.0, a.delta, &opts, SweepOptions { keep_trajectories: a.long.is_some() })?;
    if let Some(p) = &a.long {
        emit(Some(p), &res.long_format_csv(net.species()))?;
    }
    let env = envelope("sweep", &[&input], a, &res)?;
    match a.format {
        Format::Csv => {
            emit(a.out.as_deref(), &res.to_csv())?;
            emit_meta(a.out.as_deref(), &env)
        }
        Format::Json => emit(a.out.as_deref(), &pretty(&env)),
    }
}

fn recovery(a: &RecoveryArgs) -> Result<(), Failure> {
    let (input, net) = load_network(&a.network)?;
    let path_in = Input::read(&a.qpath)?;
    let path = Trajectory::read_csv(path_in.text.as_bytes())?;
    let rep = recovery_sequence(&net, &path, &a.eps_list.0, a.k, a.theta, a.qbar.as_ref().map(|v| v.0.as_slice()))?;
    emit(a.out.as_deref(), &pretty(&envelope("recovery", &[&input, &path_in], a, &rep)?))
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Validate(a) => validate(a),
        Command::Simulate(a) => simulate(a),
        Command::Reduce(a) => reduce(a),
        Command::Project(a) => project(a),
        Command::Dissipation(a) => dissipation(a),
        Command::Ufec(a) => ufec(a),
        Command::Sweep(a) => sweep(a),
        Command::Recovery(a) => recovery(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Numerical { kind, message }) => {
            eprintln!("{}", json!({ "error": kind, "message": message, "tool": report::TOOL, "version": report::VERSION }));
            ExitCode::from(4)
        }
    }
}
