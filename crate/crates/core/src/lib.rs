pub mod ems;
pub mod error;
pub mod integrals;
pub mod models;
pub mod real;
pub mod reference;
pub mod rng;
pub mod schedule;
pub mod solver;

pub use error::{Error, Result};
pub use models::{ModelSpec, NoiseModel};
pub use real::Real;
pub use reference::reference_solve;
pub use rng::SeededRng;
pub use schedule::{GridKind, Schedule, TimeGrid};

pub use ems::{EmsConfig, EmsTable};
pub use integrals::{IntegralTable, Quadrature};
pub use solver::{Corrector, SampleOutput, SolverConfig};

pub type EmsTable64 = EmsTable<f64>;
pub type EmsTable32 = EmsTable<f32>;
pub type IntegralTable64 = IntegralTable<f64>;
pub type IntegralTable32 = IntegralTable<f32>;
pub type Schedule64 = Schedule<f64>;
pub type Schedule32 = Schedule<f32>;
pub type ModelSpec64 = ModelSpec<f64>;
pub type ModelSpec32 = ModelSpec<f32>;
pub type SolverConfig64 = SolverConfig<f64>;
pub type SolverConfig32 = SolverConfig<f32>;
