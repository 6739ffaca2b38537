//! Scenario runner: closed-loop simulation of a rig tracking a reference,
//! with metrics, logs and baseline comparison.

pub mod compare;
pub mod log;
pub mod metrics;
pub mod run;
pub mod scenario;
pub mod trajectory;

use thiserror::Error;

pub use compare::{compare, CompareReport, ModeReport, TracePoint};
pub use metrics::{RunMetrics, Stat, TimingStat, TimingStats};
pub use run::{run, scenario_preference, settle, AbortReason, RunOutcome, Runner, TickRecord};
pub use scenario::{
    AllocationSpec, MetricsSpec, PayloadSpec, RobotSpec, Scenario, StartSpec, TeleopSpec,
    TimedCommand, TrajectorySpec, SCENARIO_VERSION,
};
pub use trajectory::{figure8, Figure8, YawProfile};

use crate::allocation::AllocationError;
use crate::controller::ControllerError;
use crate::sim::ParamError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("allocation failed: {0}")]
    Allocation(#[from] AllocationError),
    #[error("controller failed: {0}")]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
