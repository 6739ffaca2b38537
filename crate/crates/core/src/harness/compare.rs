use serde::{Deserialize, Serialize};

use super::metrics::RunMetrics;
use super::run::{run, AbortReason, RunOutcome};
use super::scenario::Scenario;
use super::HarnessError;
use crate::allocation::AllocationMode;

pub const COMPARE_SCHEMA_VERSION: u32 = 1;

/// Minimum-distance trace sample period, s.
const TRACE_PERIOD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: AllocationMode,
    pub metrics: RunMetrics,
    pub aborted: Option<AbortReason>,
    /// First time two robots came closer than their combined radii.
    pub first_contact: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub baseline: Option<f64>,
    pub qp_cascade: Option<f64>,
}

/// Baseline and cascade runs of one scenario with identical seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub schema: u32,
    pub scenario: String,
    pub seed: u64,
    pub baseline: ModeReport,
    pub qp_cascade: ModeReport,
    /// Largest payload position difference over the ticks both runs logged, m.
    pub max_payload_divergence: f64,
    pub min_distance_trace: Vec<TracePoint>,
}

fn report(outcome: &RunOutcome) -> ModeReport {
    ModeReport {
        mode: outcome.mode,
        metrics: outcome.metrics.clone(),
        aborted: outcome.aborted.clone(),
        first_contact: outcome
            .ticks
            .iter()
            .find(|t| t.clearance_ratio < 1.0)
            .map(|t| t.t),
    }
}

/// Runs both modes. Every tick is recorded regardless of `log_every`, and
/// contact does not abort, so the traces cover the whole run.
pub fn compare(scenario: &Scenario) -> Result<(CompareReport, [RunOutcome; 2]), HarnessError> {
    let mut s = scenario.clone();
    s.log_every = 1;
    s.metrics.abort_on_contact = false;
    let base = run(&s.with_mode(AllocationMode::Baseline))?;
    let qp = run(&s.with_mode(AllocationMode::QpCascade))?;

    let divergence = base
        .ticks
        .iter()
        .zip(&qp.ticks)
        .map(|(a, b)| (a.p0 - b.p0).norm())
        .fold(0.0, f64::max);
    let stride = ((TRACE_PERIOD / s.sim.dt).round() as usize).max(1);
    let len = base.ticks.len().max(qp.ticks.len());
    let trace = (0..len)
        .step_by(stride)
        .map(|k| {
            let (a, b) = (base.ticks.get(k), qp.ticks.get(k));
            TracePoint {
                t: a.or(b).map_or(0.0, |r| r.t),
                baseline: a.map(|r| r.min_distance),
                qp_cascade: b.map(|r| r.min_distance),
            }
        })
        .collect();
    let report = CompareReport {
        schema: COMPARE_SCHEMA_VERSION,
        scenario: s.name.clone(),
        seed: s.sim.seed,
        baseline: report(&base),
        qp_cascade: report(&qp),
        max_payload_divergence: divergence,
        min_distance_trace: trace,
    };
    Ok((report, [base, qp]))
}
