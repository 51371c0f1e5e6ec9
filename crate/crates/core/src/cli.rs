//! Command-line front end.
//!
//! Every command reads a JSON network config (see [`crate::config`]) and
//! writes CSV files into the output directory. Exit codes: 0 success,
//! 2 invalid config or arguments, 3 unstable system, 4 infeasible problem,
//! 5 numerical failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use thiserror::Error;

use crate::config::{load_config, ConfigError, LoadedConfig};
use crate::dcsolve::{DcError, SolveOptions};
use crate::gains::{
    conditional_linf_gain, empirical_gain, gain, l1_gain, linf_gain, simulate_mjls, stability_check,
    GainError, GainNorm, InitialMode, InputSignal, SimError, SimulationConfig, TrajectoryBatch,
};
use crate::netmodel::{BufferNetwork, ModelError, SwitchedSystem, TuningParams};
use crate::problems::{optimize, CostModel, ProblemError, ProblemKind, TuningResult};
use crate::report::{write_table, Cell, Report};

#[derive(Debug, Parser)]
#[command(name = "bufnet", version, about = "Analyze and tune Markov-switching buffer networks")]
pub struct Cli {
    /// Network config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// RNG seed; required by optimize, simulate and compare-gp.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Maximum outer iterations of the DC solver.
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    /// Stationarity and feasibility tolerance of the DC solver.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Number of DC solver starts.
    #[arg(long, global = true)]
    pub multistarts: Option<usize>,
    /// Overrides the output weight of the config.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Objective {
    L1,
    Linf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputKind {
    /// Unit-mass pulse on one origin.
    Impulse,
    /// Constant unit inflow at every origin.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StartMode {
    Uniform,
    Stationary,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stability verdict, both gains and their certificates for the
    /// configured parameters.
    Analyze,
    /// Tunes parameters: minimize the L1 gain under a cost budget, or the
    /// cost under an L∞ gain bound.
    Optimize {
        #[arg(long, value_enum)]
        objective: Objective,
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long)]
        gamma_bound: Option<f64>,
    },
    /// Monte Carlo simulation of the configured parameters.
    Simulate {
        /// Defaults to ten time constants of the lifted system.
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        trajectories: usize,
        #[arg(long, value_enum, default_value = "impulse")]
        input: InputKind,
        /// Origin receiving the impulse, as an index into the origin list.
        #[arg(long, default_value_t = 0)]
        channel: usize,
        /// Impulse width; defaults to horizon / 1000.
        #[arg(long)]
        pulse_width: Option<f64>,
        /// Number of individual trajectories written out.
        #[arg(long, default_value_t = 3)]
        paths: usize,
        #[arg(long, value_enum, default_value = "stationary")]
        initial_mode: StartMode,
    },
    /// Sweeps budgets and compares DC tuning with the shared-parameter GP
    /// baseline.
    CompareGp {
        #[arg(long, value_delimiter = ',', required = true)]
        budgets: Vec<f64>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("system is not mean stable: lifted spectral abscissa {abscissa:.6e} >= 0")]
    Unstable { abscissa: f64 },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Unstable { .. } => 3,
            CliError::Infeasible(_) => 4,
            CliError::Numerical(_) => 5,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("cannot write output: {e}"))
    }
}

impl From<GainError> for CliError {
    fn from(e: GainError) -> Self {
        match e {
            GainError::Unstable { abscissa } => CliError::Unstable { abscissa },
            GainError::Model(m) => m.into(),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<DcError> for CliError {
    fn from(e: DcError) -> Self {
        match e {
            DcError::NoFeasiblePointFound { .. } => CliError::Infeasible(e.to_string()),
            DcError::InvalidOptions(_) => CliError::Config(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<ProblemError> for CliError {
    fn from(e: ProblemError) -> Self {
        match e {
            ProblemError::Solve(d) => d.into(),
            ProblemError::Gain(g) => g.into(),
            ProblemError::Model(m) => m.into(),
            ProblemError::UnsatisfiableRow { .. } => CliError::Infeasible(e.to_string()),
            ProblemError::NonPosynomialCost(_)
            | ProblemError::EmptyDestinations
            | ProblemError::NonpositiveGammaBound(_)
            | ProblemError::NonpositiveBudget(_)
            | ProblemError::MissingTarget(..)
            | ProblemError::Posy(_) => CliError::Config(e.to_string()),
            ProblemError::BoundViolation { .. }
            | ProblemError::SolutionLength { .. }
            | ProblemError::Verification(_) => CliError::Numerical(e.to_string()),
        }
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = load_config(path)?;
    if let Some(alpha) = cli.alpha {
        cfg.net = cfg.net.clone().with_alpha(alpha)?;
    }
    std::fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Analyze => cmd_analyze(&cfg, &cli.out),
        Command::Optimize {
            objective,
            budget,
            gamma_bound,
        } => {
            let opts = solve_options(cli)?;
            cmd_optimize(&cfg, *objective, *budget, *gamma_bound, &opts, &cli.out)
        }
        Command::Simulate {
            horizon,
            trajectories,
            input,
            channel,
            pulse_width,
            paths,
            initial_mode,
        } => {
            let seed = require_seed(cli)?;
            let sim = SimulateArgs {
                horizon: *horizon,
                trajectories: *trajectories,
                input: *input,
                channel: *channel,
                pulse_width: *pulse_width,
                paths: *paths,
                initial_mode: *initial_mode,
                seed,
            };
            cmd_simulate(&cfg, &sim, &cli.out)
        }
        Command::CompareGp { budgets } => {
            let opts = solve_options(cli)?;
            cmd_compare_gp(&cfg, budgets, &opts, &cli.out)
        }
    }
}

fn require_seed(cli: &Cli) -> Result<u64, CliError> {
    cli.seed
        .ok_or_else(|| CliError::Config("--seed is required for this command".into()))
}

fn solve_options(cli: &Cli) -> Result<SolveOptions, CliError> {
    let mut opts = SolveOptions {
        seed: require_seed(cli)?,
        ..SolveOptions::default()
    };
    if let Some(m) = cli.max_iter {
        opts.max_outer_iters = m;
    }
    if let Some(t) = cli.tol {
        opts.tol_stationarity = t;
        opts.tol_feasibility = t;
    }
    if let Some(k) = cli.multistarts {
        opts.multistarts = k;
    }
    opts.validate()?;
    Ok(opts)
}

fn fixed_params(cfg: &LoadedConfig) -> Result<&TuningParams, CliError> {
    cfg.params
        .as_ref()
        .ok_or_else(|| CliError::Config("config has no \"params\" section".into()))
}

fn push_certificates(report: &mut Report, prefix: &str, certs: &[nalgebra::DVector<f64>]) {
    for (m, v) in certs.iter().enumerate() {
        for (i, x) in v.iter().enumerate() {
            report.push(format!("{prefix}_m{m}_x{i}"), *x);
        }
    }
}

fn push_params(report: &mut Report, net: &BufferNetwork, p: &TuningParams) {
    for (k, b) in p.beta.iter().enumerate() {
        report.push(net.beta_name(k), *b);
    }
    for (k, d) in p.delta.iter().enumerate() {
        report.push(net.delta_name(k), *d);
    }
}

/// Checks mean stability and both gains of fixed parameters, and writes
/// `report.csv`. An unstable system still gets a report before failing.
pub fn cmd_analyze(cfg: &LoadedConfig, out: &Path) -> Result<(), CliError> {
    let p = fixed_params(cfg)?;
    let sys = cfg.net.switched_system(p)?;
    let stab = stability_check(&sys);
    let mut report = Report::new();
    report.push("nodes", cfg.net.n());
    report.push("edges", cfg.net.edges().len());
    report.push("modes", cfg.net.modes());
    report.push("alpha", cfg.net.alpha());
    report.push("stable", stab.stable);
    report.push("abscissa", stab.abscissa);
    if !stab.stable {
        report.write(&out.join("report.csv"))?;
        return Err(CliError::Unstable {
            abscissa: stab.abscissa,
        });
    }
    let l1 = l1_gain(&sys)?;
    let linf = linf_gain(&sys)?;
    info!("gamma_l1 = {}, gamma_linf = {}", l1.gamma, linf.gamma);
    report.push("gamma_l1", l1.gamma);
    report.push("gamma_linf", linf.gamma);
    report.push("l1_worst_mode", l1.worst_mode);
    report.push("l1_worst_input", l1.worst_index);
    report.push("linf_worst_mode", linf.worst_mode);
    report.push("linf_worst_output", linf.worst_index);
    report.push("l1_max_residual", l1.max_residual);
    report.push("linf_max_residual", linf.max_residual);
    report.push("cost", cfg.cost.evaluate(p));
    if let Some(cert) = &stab.certificate {
        push_certificates(&mut report, "cert_stability", cert);
    }
    push_certificates(&mut report, "cert_l1", &l1.certificates);
    push_certificates(&mut report, "cert_linf", &linf.certificates);
    report.write(&out.join("report.csv"))?;
    Ok(())
}

fn cost_with_targets(
    cost: &CostModel,
    budget: Option<f64>,
    gamma_bound: Option<f64>,
) -> CostModel {
    let mut cost = cost.clone();
    if budget.is_some() {
        cost.budget = budget;
    }
    if gamma_bound.is_some() {
        cost.gamma_bound = gamma_bound;
    }
    cost
}

/// Recomputes both gains of a tuned parameter set and checks the claimed
/// target before anything is written.
fn revalidate(net: &BufferNetwork, cost: &CostModel, r: &TuningResult) -> Result<(SwitchedSystem, f64, f64), CliError> {
    let sys = net.switched_system(&r.params)?;
    let g1 = gain(&sys, GainNorm::L1)?.gamma;
    let ginf = gain(&sys, GainNorm::Linf)?.gamma;
    let ok = match r.kind {
        ProblemKind::L1 | ProblemKind::GpBaseline => {
            g1 <= r.solver_value * (1.0 + 1e-6) + 1e-9
                && cost.budget.is_some_and(|b| r.cost <= b * (1.0 + 1e-6))
        }
        ProblemKind::Linf => cost.gamma_bound.is_some_and(|b| ginf <= b * (1.0 + 1e-6)),
    };
    if !ok {
        return Err(CliError::Numerical(format!(
            "revalidation failed: gamma_l1 {g1}, gamma_linf {ginf}, cost {}",
            r.cost
        )));
    }
    Ok((sys, g1, ginf))
}

pub fn cmd_optimize(
    cfg: &LoadedConfig,
    objective: Objective,
    budget: Option<f64>,
    gamma_bound: Option<f64>,
    opts: &SolveOptions,
    out: &Path,
) -> Result<(), CliError> {
    let cost = cost_with_targets(&cfg.cost, budget, gamma_bound);
    let kind = match objective {
        Objective::L1 => ProblemKind::L1,
        Objective::Linf => ProblemKind::Linf,
    };
    let r = optimize(&cfg.net, &cost, kind, opts)?;
    let (_, g1, ginf) = revalidate(&cfg.net, &cost, &r)?;
    info!(
        "{} optimum {} after {} iterations from start {}",
        objective_label(objective),
        r.solver_value,
        r.solution.trace.rows.len(),
        r.solution.start
    );
    if !r.solution.trace.converged {
        warn!("best start stopped at the iteration limit");
    }

    let mut solution = Vec::new();
    for (k, b) in r.params.beta.iter().enumerate() {
        solution.push(vec![Cell::from(cfg.net.beta_name(k)), Cell::from(*b)]);
    }
    for (k, d) in r.params.delta.iter().enumerate() {
        solution.push(vec![Cell::from(cfg.net.delta_name(k)), Cell::from(*d)]);
    }
    write_table(&out.join("solution.csv"), &header(&["name", "value"]), &solution)?;
    write_table(&out.join("trace.csv"), &header(&["iter", "objective", "violation", "penalty"]), &trace_rows(&r))?;

    let mut report = Report::new();
    report.push("objective", objective_label(objective));
    match kind {
        ProblemKind::Linf => report.push("gamma_bound", cost.gamma_bound.unwrap_or(f64::NAN)),
        _ => report.push("budget", cost.budget.unwrap_or(f64::NAN)),
    }
    report.push("solver_value", r.solver_value);
    report.push("gamma_l1", g1);
    report.push("gamma_linf", ginf);
    report.push("cost", r.cost);
    report.push("violation", r.solution.violation);
    report.push("iterations", r.solution.trace.rows.len());
    report.push("best_start", r.solution.start);
    report.push("converged", r.solution.trace.converged);
    report.push("guarantee", "local");
    push_params(&mut report, &cfg.net, &r.params);
    report.write(&out.join("report.csv"))?;
    Ok(())
}

fn objective_label(o: Objective) -> &'static str {
    match o {
        Objective::L1 => "l1",
        Objective::Linf => "linf",
    }
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

/// Trace of the winning start with objectives in natural scale (`γ` or
/// cost).
fn trace_rows(r: &TuningResult) -> Vec<Vec<Cell>> {
    r.solution
        .trace
        .rows
        .iter()
        .map(|row| {
            vec![
                Cell::from(row.iter),
                Cell::from(row.objective.exp()),
                Cell::from(row.violation),
                Cell::from(row.penalty),
            ]
        })
        .collect()
}

pub fn cmd_compare_gp(cfg: &LoadedConfig, budgets: &[f64], opts: &SolveOptions, out: &Path) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for &b in budgets {
        let cost = cost_with_targets(&cfg.cost, Some(b), None);
        let dc = optimize(&cfg.net, &cost, ProblemKind::L1, opts)?;
        let (_, dc_gain, _) = revalidate(&cfg.net, &cost, &dc)?;
        let gp = optimize(&cfg.net, &cost, ProblemKind::GpBaseline, opts)?;
        let (_, gp_gain, _) = revalidate(&cfg.net, &cost, &gp)?;
        info!("budget {b}: dc {} (certified {dc_gain}), gp {} (certified {gp_gain})", dc.solver_value, gp.solver_value);
        rows.push(vec![
            Cell::from(b),
            Cell::from(dc.solver_value),
            Cell::from(gp.solver_value),
            Cell::from(dc.solver_value / gp.solver_value),
        ]);
    }
    write_table(
        &out.join("compare_gp.csv"),
        &header(&["budget", "gamma_dc", "gamma_gp", "ratio"]),
        &rows,
    )?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub horizon: Option<f64>,
    pub trajectories: usize,
    pub input: InputKind,
    pub channel: usize,
    pub pulse_width: Option<f64>,
    pub paths: usize,
    pub initial_mode: StartMode,
    pub seed: u64,
}

pub fn cmd_simulate(cfg: &LoadedConfig, args: &SimulateArgs, out: &Path) -> Result<(), CliError> {
    let p = fixed_params(cfg)?;
    let sys = cfg.net.switched_system(p)?;
    let stab = stability_check(&sys);
    if !stab.stable {
        return Err(CliError::Unstable {
            abscissa: stab.abscissa,
        });
    }
    let horizon = args.horizon.unwrap_or(10.0 / stab.abscissa.abs());
    let (input, norm) = match args.input {
        InputKind::Impulse => {
            if args.channel >= sys.inputs() {
                return Err(CliError::Config(format!(
                    "channel {} out of range ({} origins)",
                    args.channel,
                    sys.inputs()
                )));
            }
            let width = args.pulse_width.unwrap_or(horizon * 1e-3);
            (InputSignal::impulse(sys.inputs(), args.channel, width), GainNorm::L1)
        }
        InputKind::Constant => (InputSignal::Constant(vec![1.0; sys.inputs()]), GainNorm::Linf),
    };
    let mut sim = SimulationConfig::new(horizon, args.trajectories, args.seed);
    sim.keep_paths = args.paths.min(args.trajectories);
    sim.initial_mode = match args.initial_mode {
        StartMode::Uniform => InitialMode::Uniform,
        StartMode::Stationary => InitialMode::Stationary,
    };
    let batch = simulate_mjls(&sys, &input, &sim)?;
    let lp = gain(&sys, norm)?;
    let est = match norm {
        GainNorm::L1 => empirical_gain(&batch, norm)?,
        GainNorm::Linf => conditional_linf_gain(&batch, (args.trajectories / 100).max(2))?,
    };
    info!("empirical {} gain {} ± {}, LP {}", norm.label(), est.estimate, est.half_width, lp.gamma);

    let (n, r) = (sys.n(), sys.outputs());
    let columns = |with_mode: bool| {
        let mut h = vec!["t".to_string()];
        if with_mode {
            h.push("mode".into());
        }
        h.extend((1..=n).map(|i| format!("x_{i}")));
        h.extend((1..=r).map(|l| format!("y_{l}")));
        h
    };
    for (k, path) in batch.paths.iter().enumerate() {
        let rows: Vec<Vec<Cell>> = batch
            .times
            .iter()
            .enumerate()
            .map(|(g, &t)| {
                let mut row = vec![Cell::from(t), Cell::from(path.modes[g])];
                row.extend(path.states[g].iter().map(|&x| Cell::from(x)));
                row.extend(path.outputs[g].iter().map(|&y| Cell::from(y)));
                row
            })
            .collect();
        write_table(&out.join(format!("trajectory_{k}.csv")), &columns(true), &rows)?;
    }
    write_table(&out.join("mean.csv"), &columns(false), &mean_rows(&batch))?;

    let mut report = Report::new();
    report.push("input", match args.input {
        InputKind::Impulse => "impulse",
        InputKind::Constant => "constant",
    });
    report.push("norm", norm.label());
    report.push("trajectories", args.trajectories);
    report.push("horizon", horizon);
    report.push("step", batch.step);
    report.push("empirical_gain", est.estimate);
    report.push("half_width", est.half_width);
    for m in &est.by_initial_mode {
        report.push(format!("empirical_gain_mode{}", m.mode), m.estimate);
    }
    report.push("lp_gain", lp.gamma);
    report.push("min_state", batch.min_state);
    report.write(&out.join("report.csv"))?;
    Ok(())
}

fn mean_rows(batch: &TrajectoryBatch) -> Vec<Vec<Cell>> {
    batch
        .times
        .iter()
        .enumerate()
        .map(|(g, &t)| {
            let mut row = vec![Cell::from(t)];
            row.extend(batch.mean_state[g].iter().map(|&x| Cell::from(x)));
            row.extend(batch.mean_output[g].iter().map(|&y| Cell::from(y)));
            row
        })
        .collect()
}
