//! Runs several configurations on one trace and normalizes them to round robin.

use crate::policies::PolicyKind;
use crate::trace::CallTrace;

use super::metrics::Aggregates;
use super::{run, EngineError, MigrationMode, RunConfig, RunReport};

#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub aggregates: Aggregates,
    /// Ratios to the reference row; `None` when the reference value is zero.
    pub h_vs_ref: Option<f64>,
    pub hot_calls_vs_ref: Option<f64>,
    pub hot_mps_vs_ref: Option<f64>,
    pub migrations_vs_ref: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// Index of the row everything is normalized to.
    pub reference: usize,
}

/// Round robin without migration if present, else the first round-robin row,
/// else the first row.
pub fn reference_index(cfgs: &[RunConfig]) -> usize {
    cfgs.iter()
        .position(|c| c.policy == PolicyKind::Rr && c.migration == MigrationMode::None)
        .or_else(|| cfgs.iter().position(|c| c.policy == PolicyKind::Rr))
        .unwrap_or(0)
}

fn ratio(v: u64, r: u64) -> Option<f64> {
    (r > 0).then(|| v as f64 / r as f64)
}

pub fn tabulate(cfgs: &[RunConfig], aggregates: Vec<Aggregates>) -> Comparison {
    let reference = reference_index(cfgs);
    let base = aggregates.get(reference).cloned();
    let rows = aggregates
        .into_iter()
        .map(|a| {
            let b = base.as_ref().expect("non-empty when rows exist");
            ComparisonRow {
                h_vs_ref: ratio(a.hot_participant_minutes, b.hot_participant_minutes),
                hot_calls_vs_ref: ratio(a.hot_call_minutes, b.hot_call_minutes),
                hot_mps_vs_ref: ratio(a.hot_mp_minutes, b.hot_mp_minutes),
                migrations_vs_ref: ratio(a.total_migrations, b.total_migrations),
                aggregates: a,
            }
        })
        .collect();
    Comparison { rows, reference }
}

/// Runs every configuration on `trace`, in order.
pub fn compare(cfgs: &[RunConfig], trace: &CallTrace) -> Result<(Comparison, Vec<RunReport>), EngineError> {
    let reports = cfgs.iter().map(|c| run(c, trace)).collect::<Result<Vec<_>, _>>()?;
    let table = tabulate(cfgs, reports.iter().map(|r| r.aggregates.clone()).collect());
    Ok((table, reports))
}
