//! Day-ahead scheduling and reserve procurement for cascaded hydropower
//! under net-load uncertainty.
//!
//! The crate builds linear programs for the deterministic day-ahead problem,
//! the balancing recourse problem and its dual, and combines them into
//! two-stage stochastic, robust and mixed stochastic-robust models. A Monte
//! Carlo simulator evaluates the resulting schedules.

pub mod balancing;
mod blocks;
pub mod ccg;
pub mod composite;
pub mod dayahead;
pub mod error;
pub mod fixtures;
pub mod lp;
pub mod schedule;
pub mod simulator;
pub mod system;
pub mod uncertainty;

pub use error::{Error, LpError, Result};
pub use schedule::{ModuleSchedule, Schedule};
pub use system::{load_system, save_system, HydroModule, HydroSystem, TimeGrid};
pub use ccg::{solve_robust, CcgOptions, CcgTrace};
pub use composite::{solve_model, ModelKind, ModelSolution, ModelSpec};
pub use dayahead::{DayAheadConfig, ReserveRequirement};
pub use simulator::{CostReport, SimulationConfig};
pub use uncertainty::{Distribution, NetLoadScenario, Origin, UncertaintySet};
