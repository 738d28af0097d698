//! Sampling with the generalized exponential integrator: the local update,
//! multistep predictor-corrector and singlestep drivers, and DDIM.

mod derivatives;
mod local;
mod multistep;
mod singlestep;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrals::{IntegralTable, Node, Quadrature};
use crate::real::Real;
use crate::schedule::TimeGrid;

pub use derivatives::{estimate_derivatives, estimate_derivatives_pseudo, MAX_EXTRAS};
pub use local::{ddim_step, ddim_step_lambda, g_value, lupdate};
pub use multistep::{multistep_sample, SolverState};
pub use singlestep::{singlestep_partition, singlestep_sample};

/// Highest supported order (the `n+1`).
pub const MAX_ORDER: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Corrector {
    None,
    Full,
    Half,
}

impl Corrector {
    pub fn name(self) -> &'static str {
        match self {
            Corrector::None => "none",
            Corrector::Full => "full",
            Corrector::Half => "half",
        }
    }
}

impl std::fmt::Display for Corrector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Corrector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Corrector::None),
            "full" => Ok(Corrector::Full),
            "half" => Ok(Corrector::Half),
            other => Err(Error::arg(format!("unknown corrector '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig<T: Real = f64> {
    pub order: usize,
    pub corrector: Corrector,
    pub pseudo_predictor: bool,
    pub pseudo_corrector: bool,
    pub grid: TimeGrid<T>,
}

impl<T: Real> SolverConfig<T> {
    pub fn new(order: usize, corrector: Corrector, grid: TimeGrid<T>) -> Self {
        SolverConfig {
            order,
            corrector,
            pseudo_predictor: false,
            pseudo_corrector: false,
            grid,
        }
    }

    pub fn with_pseudo(mut self, predictor: bool, corrector: bool) -> Self {
        self.pseudo_predictor = predictor;
        self.pseudo_corrector = corrector;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_ORDER).contains(&self.order) {
            return Err(Error::arg(format!("order must be in 1..={MAX_ORDER}, got {}", self.order)));
        }
        if self.corrector != Corrector::None && self.order < 2 {
            return Err(Error::arg("a corrector needs order ≥ 2"));
        }
        if self.pseudo_corrector && self.corrector != Corrector::None && self.order >= MAX_ORDER {
            return Err(Error::arg("pseudo-order corrector needs order < 4"));
        }
        if self.grid.timesteps.len() < 2 || self.grid.timesteps.len() != self.grid.lambdas.len() {
            return Err(Error::arg("sampling grid needs at least one step"));
        }
        Ok(())
    }
}

/// One entry per step, describing the state reached at its end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TraceStep<T: Real = f64> {
    pub step: usize,
    pub t: T,
    pub lambda: T,
    pub x: Vec<T>,
    /// Absent at the last step, which is never evaluated.
    pub eps_norm: Option<T>,
    pub g_norm: T,
    pub order: usize,
    pub corrected: bool,
}

/// `ĝ_m` before and after the corrector's ε adjustment.
#[derive(Clone, Debug, PartialEq)]
pub struct Correction<T> {
    pub step: usize,
    pub g_predicted: Vec<T>,
    pub g_corrected: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleOutput<T: Real = f64> {
    pub x_final: Vec<T>,
    pub trace: Vec<TraceStep<T>>,
    pub nfe: usize,
    pub corrections: Vec<Correction<T>>,
}

/// Serialized sampling result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Trajectory<T: Real = f64> {
    pub grid: Vec<T>,
    pub x_final: Vec<T>,
    pub trace: Vec<TraceStep<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn new(grid: &TimeGrid<T>, out: &SampleOutput<T>, with_trace: bool) -> Self {
        Trajectory {
            grid: grid.timesteps.clone(),
            x_final: out.x_final.clone(),
            trace: if with_trace { out.trace.clone() } else { Vec::new() },
        }
    }
}

/// Table nodes for every grid point; trapezoid mode requires distinct nodes.
pub(crate) fn grid_nodes<T: Real>(tab: &IntegralTable<T>, grid: &TimeGrid<T>) -> Result<Vec<Node<T>>> {
    let nodes = grid.lambdas.iter().map(|&l| tab.locate(l)).collect::<Result<Vec<_>>>()?;
    if tab.mode() != Quadrature::Exact && nodes.windows(2).any(|w| w[1].j <= w[0].j) {
        return Err(Error::arg(
            "sampling grid is finer than the EMS grid: two timesteps snap to the same node",
        ));
    }
    Ok(nodes)
}
