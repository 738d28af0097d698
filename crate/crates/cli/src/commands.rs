use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use emsolver::ems::estimate_table;
use emsolver::solver::{multistep_sample, singlestep_sample, Trajectory};
use emsolver::{Corrector, EmsConfig, EmsTable, GridKind, IntegralTable, ModelSpec, Schedule, SolverConfig};

use crate::bench::{self, Baseline, Settings};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "emsolver", version, about = "Diffusion ODE sampling with empirical model statistics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate an EMS table for a model and schedule.
    Ems(EmsArgs),
    /// Sample one trajectory.
    Solve(SolveArgs),
    /// Error against the reference solution over a range of NFE.
    BenchConvergence(ConvergenceArgs),
    /// Estimated EMS versus baseline solvers.
    BenchCompare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct EmsArgs {
    /// Model JSON file.
    #[arg(long)]
    pub model: PathBuf,
    /// `vp-linear`, `vp-cosine`, `edm`, or a schedule JSON file.
    #[arg(long)]
    pub schedule: String,
    #[arg(long = "num-timesteps", default_value_t = 1200)]
    pub num_timesteps: usize,
    #[arg(long = "num-datapoints", default_value_t = 1000)]
    pub num_datapoints: usize,
    #[arg(long, default_value_t = 1)]
    pub probes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "lam-min", allow_hyphen_values = true)]
    pub lam_min: Option<f64>,
    #[arg(long = "lam-max", allow_hyphen_values = true)]
    pub lam_max: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SamplingArgs {
    #[arg(long, default_value = "uniform-lambda")]
    pub grid: GridKind,
    /// Defaults to the lower end of the table's λ range.
    #[arg(long = "t-start")]
    pub t_start: Option<f64>,
    /// Defaults to the upper end of the table's λ range.
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    #[arg(long, default_value = "none")]
    pub corrector: Corrector,
    #[arg(long = "pseudo-predictor")]
    pub pseudo_predictor: bool,
    #[arg(long = "pseudo-corrector")]
    pub pseudo_corrector: bool,
    /// Use the singlestep driver instead of multistep.
    #[arg(long)]
    pub singlestep: bool,
    /// Fails unless the table was built for this schedule.
    #[arg(long)]
    pub schedule: Option<String>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub ems: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    #[arg(long = "noise-seed", default_value_t = 0)]
    pub noise_seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Include the per-step trace in the output.
    #[arg(long)]
    pub trace: bool,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub ems: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub orders: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "10,20,40,80")]
    pub nfe: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    /// Record wall-clock seconds per run; otherwise the column is 0.
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub ems: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "noise-pred,data-pred,ddim")]
    pub baselines: Vec<Baseline>,
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    #[arg(long, value_delimiter = ',', default_value = "5,8,10")]
    pub nfe: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

/// Smallest time used when the schedule's own domain reaches `σ = 0`.
pub const DEFAULT_T_EPS: f64 = 1e-3;

pub fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Ems(a) => cmd_ems(&a, out),
        Command::Solve(a) => cmd_solve(&a, out),
        Command::BenchConvergence(a) => cmd_bench_convergence(&a, out),
        Command::BenchCompare(a) => cmd_bench_compare(&a, out),
    }
}

pub fn parse_schedule(spec: &str) -> Result<Schedule, CliError> {
    Ok(match spec {
        "vp-linear" => Schedule::vp_linear_default(),
        "vp-cosine" => Schedule::vp_cosine_default(),
        "edm" => Schedule::edm(),
        path => serde_json::from_str(&std::fs::read_to_string(path)?).map_err(emsolver::Error::from)?,
    })
}

pub fn load_model(path: &Path) -> Result<ModelSpec, CliError> {
    let model: ModelSpec = serde_json::from_str(&std::fs::read_to_string(path)?).map_err(emsolver::Error::from)?;
    model.validate()?;
    Ok(model)
}

fn load_table(path: &Path, model: &ModelSpec, sampling: &SamplingArgs) -> Result<IntegralTable, CliError> {
    let table = EmsTable::load(path)?;
    if let Some(s) = &sampling.schedule {
        if let Some(msg) = table.schedule_mismatch(&parse_schedule(s)?) {
            return Err(CliError::Runtime(msg));
        }
    }
    if table.dim() != model.dimension() {
        return Err(CliError::Runtime(format!(
            "table dimension {} does not match model dimension {}",
            table.dim(),
            model.dimension()
        )));
    }
    Ok(IntegralTable::new(table)?)
}

fn settings(tab: &IntegralTable, s: &SamplingArgs, timing: bool) -> Result<Settings, CliError> {
    let (t0, t1) = bench::default_interval(&tab.ems)?;
    let mut out = Settings::new(s.grid, s.t_start.unwrap_or(t0), s.t_end.unwrap_or(t1));
    out.corrector = s.corrector;
    out.pseudo_predictor = s.pseudo_predictor;
    out.pseudo_corrector = s.pseudo_corrector;
    out.singlestep = s.singlestep;
    out.timing = timing;
    Ok(out)
}

pub fn cmd_ems(a: &EmsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let sched = parse_schedule(&a.schedule)?;
    let (lo, mut hi) = sched.lambda_range();
    if !hi.is_finite() {
        hi = sched.lambda_of_t(DEFAULT_T_EPS)?;
    }
    let range = (a.lam_min.unwrap_or(lo), a.lam_max.unwrap_or(hi));
    let mut cfg = EmsConfig::new(a.num_timesteps, a.num_datapoints, a.seed, range);
    cfg.probes_per_point = a.probes;
    let table = estimate_table(&model, &sched, &cfg)?;
    table.save(&a.out)?;

    let summary = table.summary();
    let rows = summary.len() as f64;
    let mean = |f: fn(&(f64, f64, f64, f64)) -> f64| summary.iter().map(f).sum::<f64>() / rows;
    writeln!(
        out,
        "ems: {} on {}, N = {}, K = {}, D = {}, λ in [{}, {}]",
        table.meta.model,
        sched.name(),
        a.num_timesteps,
        a.num_datapoints,
        table.dim(),
        range.0,
        range.1
    )?;
    writeln!(out, "l mean = {:.6}", mean(|r| r.1))?;
    writeln!(out, "s mean = {:.6}", mean(|r| r.2))?;
    writeln!(out, "b mean = {:.6}", mean(|r| r.3))?;
    Ok(())
}

pub fn cmd_solve(a: &SolveArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let tab = load_table(&a.ems, &model, &a.sampling)?;
    let st = settings(&tab, &a.sampling, false)?;
    let sched = tab.ems.schedule;
    let grid = st.time_grid(&sched, a.steps)?;
    let x_init = bench::initial_state(&sched, st.t_start, model.dimension(), a.noise_seed)?;
    let cfg = SolverConfig::new(a.order, st.corrector, grid.clone()).with_pseudo(st.pseudo_predictor, st.pseudo_corrector);
    let result = if st.singlestep {
        singlestep_sample(&model, &tab, &cfg, &x_init)?
    } else {
        multistep_sample(&model, &tab, &cfg, &x_init)?
    };
    let traj = Trajectory::new(&grid, &result, a.trace);
    let mut text = serde_json::to_string_pretty(&traj).map_err(emsolver::Error::from)?;
    text.push('\n');
    std::fs::write(&a.out, text)?;
    writeln!(out, "solve: {} steps, nfe = {}, |x_final| = {:.6}", a.steps, result.nfe, emsolver::real::vec::norm2(&result.x_final))?;
    Ok(())
}

pub fn cmd_bench_convergence(a: &ConvergenceArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let tab = load_table(&a.ems, &model, &a.sampling)?;
    let st = settings(&tab, &a.sampling, a.timing)?;
    let report = bench::convergence(&model, &tab, &st, &a.orders, &a.nfe, &a.seeds)?;
    report.write(&a.out)?;
    for line in &report.summary {
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn cmd_bench_compare(a: &CompareArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let tab = load_table(&a.ems, &model, &a.sampling)?;
    let st = settings(&tab, &a.sampling, a.timing)?;
    let report = bench::compare(&model, &tab, &st, a.order, &a.baselines, &a.nfe, &a.seeds)?;
    report.write(&a.out)?;
    for line in &report.summary {
        writeln!(out, "{line}")?;
    }
    Ok(())
}
