//! Planner and phase-alternating simulator for drone teams deploying
//! landscape-scale structures (walls, pipelines, suspended lines).
//!
//! The pipeline is: load a [`scenario::Scenario`], cut the structure into
//! compartments, grow goal trees per compartment, expand a virtual fleet,
//! then alternate C* coordination phases and E* work phases in
//! [`engine::Simulation`] until the work is done or the run stalls.

pub mod compartment;
pub mod coordination;
pub mod engine;
pub mod error;
pub mod fleet;
pub mod goal;
pub mod ids;
pub mod logistics;
pub mod plan;
pub mod report;
pub mod scenario;
pub mod trace;
pub mod work_os;

pub use engine::{run, run_with, RunOutput, SimOptions, Simulation};
pub use error::{CoordinationError, PlanError, ReportError, ScenarioError, SimError};
pub use report::{check_time_budget, compute_metrics, emit_report, render_report, ReportFormat, SimReport};
pub use scenario::{load_scenario, Scenario};
