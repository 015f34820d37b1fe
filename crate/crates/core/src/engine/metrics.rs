//! Per-minute cluster statistics and their whole-run aggregates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cluster::Cluster;
use crate::cpu_model::{pct_to_ticks, ticks_to_pct};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub minute: u32,
    pub max_cpu: f64,
    pub p95_cpu: f64,
    pub p50_cpu: f64,
    pub min_cpu: f64,
    pub avg_cpu: f64,
    /// MPs whose measured CPU is at or above the hot threshold.
    pub hot_mps: u32,
    pub hot_calls: u32,
    pub hot_participants: u32,
    pub active_calls: u32,
    pub active_participants: u32,
    pub cumulative_migrations: u64,
}

/// Nearest-rank percentile of an ascending slice.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn snapshot(cluster: &Cluster, minute: u32, cumulative_migrations: u64) -> MetricsSnapshot {
    let threshold = pct_to_ticks(cluster.config().hot_threshold_pct);
    let mut cpu: Vec<f64> = cluster.mps().iter().map(|m| ticks_to_pct(m.current_ticks)).collect();
    cpu.sort_by(f64::total_cmp);
    let total: i64 = cluster.mps().iter().map(|m| m.current_ticks).sum();
    let (mut hot_mps, mut hot_calls, mut hot_participants, mut participants) = (0, 0, 0, 0);
    for m in cluster.mps() {
        participants += m.participants;
        if m.current_ticks >= threshold {
            hot_mps += 1;
            hot_calls += m.hosted.len() as u32;
            hot_participants += m.participants;
        }
    }
    MetricsSnapshot {
        minute,
        max_cpu: cpu.last().copied().unwrap_or(0.0),
        p95_cpu: nearest_rank(&cpu, 0.95),
        p50_cpu: nearest_rank(&cpu, 0.50),
        min_cpu: cpu.first().copied().unwrap_or(0.0),
        avg_cpu: ticks_to_pct(total) / cpu.len().max(1) as f64,
        hot_mps,
        hot_calls,
        hot_participants,
        active_calls: cluster.active_calls() as u32,
        active_participants: participants,
        cumulative_migrations,
    }
}

/// Outcome of one planner round, kept for aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: u64,
    pub t: u32,
    pub moves: usize,
    pub deferred: usize,
    pub waves: usize,
    /// Solve status label per virtual cluster that had candidates.
    pub statuses: Vec<&'static str>,
}

/// Solver timing for one virtual-cluster solve; wall time varies between
/// machines, so it is reported apart from the aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveTiming {
    pub round: u64,
    pub vc: usize,
    pub calls: usize,
    pub mps: usize,
    pub nodes: u64,
    pub status: &'static str,
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub label: String,
    pub minutes: usize,
    /// Participant-minutes spent on hot MPs.
    pub hot_participant_minutes: u64,
    pub hot_call_minutes: u64,
    pub hot_mp_minutes: u64,
    pub peak_hot_participants: u32,
    pub max_of_max_cpu: f64,
    pub max_of_p95_cpu: f64,
    pub max_of_p50_cpu: f64,
    pub max_of_min_cpu: f64,
    pub max_of_avg_cpu: f64,
    pub busiest_minute: u32,
    pub busiest_max_to_avg: f64,
    pub total_migrations: u64,
    pub planner_rounds: u64,
    pub deferred_moves: u64,
    pub status_histogram: BTreeMap<String, u64>,
    /// Rounds that produced moves, keyed by wave count.
    pub wave_histogram: BTreeMap<usize, u64>,
    /// Share of rounds with moves that finished in at most two waves.
    pub rounds_within_two_waves: f64,
}

impl Aggregates {
    pub fn compute(label: &str, snaps: &[MetricsSnapshot], rounds: &[RoundRecord]) -> Self {
        let maxf = |f: fn(&MetricsSnapshot) -> f64| snaps.iter().map(f).fold(0.0, f64::max);
        let busiest = snaps
            .iter()
            .fold(None::<&MetricsSnapshot>, |best, s| match best {
                Some(b) if b.avg_cpu >= s.avg_cpu => Some(b),
                _ => Some(s),
            });
        let mut status_histogram = BTreeMap::new();
        let mut wave_histogram = BTreeMap::new();
        for r in rounds {
            for s in &r.statuses {
                *status_histogram.entry(s.to_string()).or_insert(0) += 1;
            }
            if r.moves > 0 {
                *wave_histogram.entry(r.waves).or_insert(0) += 1;
            }
        }
        let with_moves: u64 = wave_histogram.values().sum();
        let within: u64 = wave_histogram.range(..=2).map(|(_, n)| n).sum();
        Self {
            label: label.to_string(),
            minutes: snaps.len(),
            hot_participant_minutes: snaps.iter().map(|s| s.hot_participants as u64).sum(),
            hot_call_minutes: snaps.iter().map(|s| s.hot_calls as u64).sum(),
            hot_mp_minutes: snaps.iter().map(|s| s.hot_mps as u64).sum(),
            peak_hot_participants: snaps.iter().map(|s| s.hot_participants).max().unwrap_or(0),
            max_of_max_cpu: maxf(|s| s.max_cpu),
            max_of_p95_cpu: maxf(|s| s.p95_cpu),
            max_of_p50_cpu: maxf(|s| s.p50_cpu),
            max_of_min_cpu: maxf(|s| s.min_cpu),
            max_of_avg_cpu: maxf(|s| s.avg_cpu),
            busiest_minute: busiest.map_or(0, |s| s.minute),
            busiest_max_to_avg: busiest
                .filter(|s| s.avg_cpu > 0.0)
                .map_or(0.0, |s| s.max_cpu / s.avg_cpu),
            total_migrations: rounds.iter().map(|r| r.moves as u64).sum(),
            planner_rounds: rounds.len() as u64,
            deferred_moves: rounds.iter().map(|r| r.deferred as u64).sum(),
            status_histogram,
            wave_histogram,
            rounds_within_two_waves: if with_moves == 0 { 1.0 } else { within as f64 / with_moves as f64 },
        }
    }
}
