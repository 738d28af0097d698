//! Convergence and comparison runs against the reference integrator.

use std::time::Instant;

use rayon::prelude::*;

use emsolver::ems::{degenerate_table, DegenerateKind};
use emsolver::real::vec;
use emsolver::rng::{SeededRng, STREAM_INIT};
use emsolver::solver::{ddim_step, multistep_sample, singlestep_sample};
use emsolver::{
    reference_solve, Corrector, EmsTable, GridKind, IntegralTable, ModelSpec, Schedule, SolverConfig, TimeGrid,
};

use crate::report::{slope_line, ReportRow, RunReport};
use crate::CliError;

/// Tolerance of the reference solution.
pub const REFERENCE_TOL: f64 = 1e-10;

/// `x_T = σ_T z` with `z` drawn from the initial-state stream of `seed`.
pub fn initial_state(sched: &Schedule, t_start: f64, d: usize, seed: u64) -> Result<Vec<f64>, CliError> {
    let sigma = sched.sigma(t_start)?;
    let z: Vec<f64> = SeededRng::with_stream(seed, STREAM_INIT).normal_vec(d);
    Ok(vec::scale(&z, sigma))
}

/// Default sampling interval: the full λ range of the table.
pub fn default_interval(table: &EmsTable) -> Result<(f64, f64), CliError> {
    let (lo, hi) = table.lam_range();
    Ok((table.schedule.t_of_lambda(lo)?, table.schedule.t_of_lambda(hi)?))
}

#[derive(Clone, Debug)]
pub struct Settings {
    pub grid: GridKind,
    pub t_start: f64,
    pub t_end: f64,
    pub corrector: Corrector,
    pub pseudo_predictor: bool,
    pub pseudo_corrector: bool,
    pub singlestep: bool,
    pub timing: bool,
}

impl Settings {
    pub fn new(grid: GridKind, t_start: f64, t_end: f64) -> Self {
        Settings {
            grid,
            t_start,
            t_end,
            corrector: Corrector::None,
            pseudo_predictor: false,
            pseudo_corrector: false,
            singlestep: false,
            timing: false,
        }
    }

    pub fn time_grid(&self, sched: &Schedule, nfe: usize) -> Result<TimeGrid, CliError> {
        Ok(sched.make_time_grid(nfe, self.grid, self.t_start, self.t_end)?)
    }

    fn config(&self, order: usize, grid: TimeGrid) -> SolverConfig {
        SolverConfig::new(order, self.corrector, grid).with_pseudo(self.pseudo_predictor, self.pseudo_corrector)
    }
}

fn errors(x: &[f64], reference: &[f64]) -> (f64, f64) {
    let diff = vec::sub(x, reference);
    (vec::norm2(&diff), vec::norm_inf(&diff))
}

/// Samples with `tab` and measures the error against the reference solution
/// between the same effective endpoints.
#[allow(clippy::too_many_arguments)]
pub fn run_cell(
    model: &ModelSpec,
    tab: &IntegralTable,
    settings: &Settings,
    solver: &str,
    order: usize,
    nfe: usize,
    seed: u64,
) -> Result<ReportRow, CliError> {
    let sched = &tab.ems.schedule;
    let grid = settings.time_grid(sched, nfe)?;
    let x_init = initial_state(sched, settings.t_start, model.dimension(), seed)?;
    let lam0 = tab.locate(grid.lambdas[0])?.lam;
    let lam1 = tab.locate(grid.lambdas[nfe])?.lam;
    let h_max = grid.h_max();
    let cfg = settings.config(order, grid);
    let start = Instant::now();
    let out = if settings.singlestep {
        singlestep_sample(model, tab, &cfg, &x_init)?
    } else {
        multistep_sample(model, tab, &cfg, &x_init)?
    };
    let seconds = if settings.timing { start.elapsed().as_secs_f64() } else { 0.0 };
    if out.nfe != nfe {
        return Err(CliError::Runtime(format!("expected {nfe} model calls, counted {}", out.nfe)));
    }
    let reference = reference_solve(model, sched, &x_init, lam0, lam1, REFERENCE_TOL)?;
    let (l2_error, linf_error) = errors(&out.x_final, &reference);
    Ok(ReportRow {
        solver: solver.to_owned(),
        order,
        corrector: settings.corrector.name().to_owned(),
        nfe,
        h_max,
        l2_error,
        linf_error,
        seconds,
        seed,
    })
}

/// DDIM over the sampling grid, one model call per step.
pub fn ddim_sample(model: &ModelSpec, sched: &Schedule, grid: &TimeGrid, x_init: &[f64]) -> Result<Vec<f64>, CliError> {
    let mut x = x_init.to_vec();
    for w in 0..grid.steps() {
        let eps = emsolver::NoiseModel::eps(model, sched, &x, grid.lambdas[w])?;
        x = ddim_step(sched, &x, &eps, grid.timesteps[w], grid.timesteps[w + 1])?;
    }
    Ok(x)
}

fn ddim_cell(model: &ModelSpec, sched: &Schedule, settings: &Settings, nfe: usize, seed: u64) -> Result<ReportRow, CliError> {
    let grid = settings.time_grid(sched, nfe)?;
    let x_init = initial_state(sched, settings.t_start, model.dimension(), seed)?;
    let start = Instant::now();
    let x = ddim_sample(model, sched, &grid, &x_init)?;
    let seconds = if settings.timing { start.elapsed().as_secs_f64() } else { 0.0 };
    let reference = reference_solve(model, sched, &x_init, grid.lambdas[0], grid.lambdas[nfe], REFERENCE_TOL)?;
    let (l2_error, linf_error) = errors(&x, &reference);
    Ok(ReportRow {
        solver: "ddim".into(),
        order: 1,
        corrector: "none".into(),
        nfe,
        h_max: grid.h_max(),
        l2_error,
        linf_error,
        seconds,
        seed,
    })
}

/// Every `(order, nfe, seed)` cell, plus one slope line per order.
pub fn convergence(
    model: &ModelSpec,
    tab: &IntegralTable,
    settings: &Settings,
    orders: &[usize],
    nfes: &[usize],
    seeds: &[u64],
) -> Result<RunReport, CliError> {
    let cells: Vec<(usize, usize, u64)> = orders
        .iter()
        .flat_map(|&o| nfes.iter().flat_map(move |&n| seeds.iter().map(move |&s| (o, n, s))))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(o, n, s)| run_cell(model, tab, settings, "v3", o, n, s))
        .collect::<Result<Vec<_>, _>>()?;
    let mut report = RunReport::new(rows);
    let corr = settings.corrector.name();
    for &o in orders {
        let group: Vec<ReportRow> = report.rows.iter().filter(|r| r.order == o).cloned().collect();
        report.summary.push(slope_line(&group, "v3", o, corr));
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Baseline {
    Degenerate(DegenerateKind),
    Ddim,
}

impl std::str::FromStr for Baseline {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "ddim" => Ok(Baseline::Ddim),
            other => Ok(Baseline::Degenerate(other.parse()?)),
        }
    }
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::Ddim => "ddim",
            Baseline::Degenerate(k) => k.name(),
        }
    }
}

/// The estimated table and each baseline on identical initial states, with
/// one mean-error line per `(solver, nfe)`.
pub fn compare(
    model: &ModelSpec,
    tab: &IntegralTable,
    settings: &Settings,
    order: usize,
    baselines: &[Baseline],
    nfes: &[usize],
    seeds: &[u64],
) -> Result<RunReport, CliError> {
    let sched = tab.ems.schedule;
    let degenerate = baselines
        .iter()
        .filter_map(|b| match b {
            Baseline::Degenerate(k) => Some(*k),
            Baseline::Ddim => None,
        })
        .map(|k| {
            let ems = degenerate_table(k, &sched, tab.ems.n(), tab.ems.lam_range(), tab.dim())?;
            Ok((k, IntegralTable::new(ems)?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let mut jobs: Vec<(Option<usize>, bool, usize, u64)> = Vec::new();
    for &n in nfes {
        for &s in seeds {
            jobs.push((None, false, n, s));
            for i in 0..degenerate.len() {
                jobs.push((Some(i), false, n, s));
            }
            if baselines.contains(&Baseline::Ddim) {
                jobs.push((None, true, n, s));
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(which, ddim, n, s)| match (which, ddim) {
            (_, true) => ddim_cell(model, &sched, settings, n, s),
            (Some(i), _) => run_cell(model, &degenerate[i].1, settings, degenerate[i].0.name(), order, n, s),
            (None, _) => run_cell(model, tab, settings, "v3", order, n, s),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut report = RunReport::new(rows);
    for ((solver, o, c, n), e) in report.mean_l2() {
        report
            .summary
            .push(format!("mean_l2 solver={solver} order={o} corrector={c} nfe={n} value={e:e}"));
    }
    Ok(report)
}
