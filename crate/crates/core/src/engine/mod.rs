//! Trace replay: applies participant events second by second, assigns new
//! calls through the configured policy, keeps peak estimates fresh, runs the
//! migration planner and samples per-minute metrics.

pub mod compare;
pub mod metrics;
pub mod report;

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{CallId, CallState, Cluster, ClusterConfig, SeriesBackend, SeriesStore};
use crate::cpu_model::CpuModelParams;
use crate::migration::{
    plan_by_virtual_clusters, plan_greedy, BranchAndBound, MigrationPlan, MipRound, Move,
    PlannerConfig,
};
use crate::policies::{Policy, PolicyKind};
use crate::predictors::{
    build_nmax_table, estimate_nonrecurring_peak_cpu, predict_recurring, summarize_occurrence,
    CallTrajectoryDataset, NmaxConfig, NmaxTable, NominalRates, RecurringPrediction,
};
use crate::trace::{Action, CallRecord, CallTrace, ParticipantMedia, TraceGenConfig, DAY_S};

pub use compare::{compare, Comparison, ComparisonRow};
pub use metrics::{Aggregates, MetricsSnapshot, RoundRecord, SolveTiming};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid trace: {0}")]
    Trace(#[from] crate::trace::TraceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MigrationMode {
    None,
    Greedy,
    Mip,
}

impl MigrationMode {
    pub fn name(self) -> &'static str {
        match self {
            MigrationMode::None => "none",
            MigrationMode::Greedy => "greedy",
            MigrationMode::Mip => "mip",
        }
    }
}

impl FromStr for MigrationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(MigrationMode::None),
            "greedy" => Ok(MigrationMode::Greedy),
            "mip" => Ok(MigrationMode::Mip),
            other => Err(format!("unknown migration mode {other:?} (expected none, greedy or mip)")),
        }
    }
}

impl fmt::Display for MigrationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which predictors feed a call's estimated peak. Calls without a usable
/// prediction are estimated by their current CPU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorMode {
    /// Series history for recurring calls, the lookup table for the rest.
    Full,
    /// Series history only.
    Key1,
    /// Lookup table for every call.
    Key2,
    /// Current CPU only.
    Current,
}

impl EstimatorMode {
    fn uses_history(self) -> bool {
        matches!(self, EstimatorMode::Full | EstimatorMode::Key1)
    }

    fn uses_table(self) -> bool {
        matches!(self, EstimatorMode::Full | EstimatorMode::Key2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    pub nmax: NmaxConfig,
    pub rates: NominalRates,
    /// Per-participant send rate for one-off calls; learned from training calls when unset.
    pub avg_media_rate: Option<f64>,
    pub retrain_period_s: u32,
    pub training_window_s: u32,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            nmax: NmaxConfig::default(),
            rates: NominalRates::default(),
            avg_media_rate: None,
            retrain_period_s: DAY_S,
            training_window_s: 7 * DAY_S,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub policy: PolicyKind,
    pub migration: MigrationMode,
    pub estimator: EstimatorMode,
    pub metrics_period_s: u32,
    pub estimate_refresh_s: u32,
    /// Generator settings used when no trace file is supplied.
    pub trace: TraceGenConfig,
    pub cluster: ClusterConfig,
    pub cpu: CpuModelParams,
    pub predictors: PredictorConfig,
    pub planner: PlannerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            policy: PolicyKind::Tetris,
            migration: MigrationMode::Mip,
            estimator: EstimatorMode::Full,
            metrics_period_s: 60,
            estimate_refresh_s: 60,
            trace: TraceGenConfig::default(),
            cluster: ClusterConfig::default(),
            cpu: CpuModelParams::default(),
            predictors: PredictorConfig::default(),
            planner: PlannerConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::InvalidConfig(m));
        if self.metrics_period_s == 0 {
            return bad("metrics_period_s must be positive".into());
        }
        if self.estimate_refresh_s == 0 {
            return bad("estimate_refresh_s must be positive".into());
        }
        if self.predictors.retrain_period_s == 0 {
            return bad("predictors.retrain_period_s must be positive".into());
        }
        if self.predictors.avg_media_rate.is_some_and(|r| !(r >= 0.0 && r.is_finite())) {
            return bad("predictors.avg_media_rate must be non-negative".into());
        }
        self.cluster
            .validate()
            .map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
        self.cpu.validate().map_err(EngineError::InvalidConfig)?;
        self.planner.validate().map_err(EngineError::InvalidConfig)?;
        self.trace
            .validate()
            .map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    /// `policy+migration`, with the estimator appended when it is not the default.
    pub fn label(&self) -> String {
        let mut s = format!("{}+{}", self.policy, self.migration);
        if self.estimator != EstimatorMode::Full {
            s.push_str(&format!("/{:?}", self.estimator).to_ascii_lowercase());
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub snapshots: Vec<MetricsSnapshot>,
    pub rounds: Vec<RoundRecord>,
    pub timings: Vec<SolveTiming>,
    pub aggregates: Aggregates,
}

/// Everything the planner saw and produced in one round.
pub struct RoundView<'a> {
    pub t: u32,
    pub round: u64,
    /// Cluster state the plan was computed from.
    pub cluster: &'a Cluster,
    pub mip: Option<&'a MipRound>,
    pub plan: &'a MigrationPlan,
}

pub trait PlanObserver {
    fn on_round(&mut self, view: &RoundView<'_>);
}

impl PlanObserver for () {
    fn on_round(&mut self, _: &RoundView<'_>) {}
}

pub fn run(cfg: &RunConfig, trace: &CallTrace) -> Result<RunReport, EngineError> {
    run_with_observer(cfg, trace, &mut ())
}

/// Replay state of one live call.
struct LiveCall<'t> {
    record: &'t CallRecord,
    media: Vec<ParticipantMedia>,
    joined: u32,
    send_mbps: f64,
    /// Peak from series history, fixed at assignment.
    recurring_est: Option<f64>,
    next_event: usize,
    /// Event indices in replay order.
    order: Vec<u32>,
}

struct Predictors {
    table: NmaxTable,
    avg_rate: f64,
}

fn train(cfg: &RunConfig, trace: &CallTrace, now: u32) -> Predictors {
    let from = now.saturating_sub(cfg.predictors.training_window_s);
    let data = CallTrajectoryDataset::from_calls(
        trace
            .calls
            .iter()
            .filter(|c| c.series_id.is_none() && c.end_s >= from && c.end_s < now),
    );
    let table = build_nmax_table(&data, cfg.predictors.nmax.clone())
        .unwrap_or_else(|_| NmaxTable::identity(cfg.predictors.nmax.clone()));
    let rates = &cfg.predictors.rates;
    let avg_rate = cfg
        .predictors
        .avg_media_rate
        .or_else(|| data.avg_media_rate())
        .unwrap_or(rates.audio_mbps + rates.video_mbps);
    Predictors { table, avg_rate }
}

/// Rank of each string in lexicographic order.
fn ranks<'a>(items: impl Iterator<Item = &'a str>) -> Vec<u32> {
    let items: Vec<&str> = items.collect();
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.sort_by_key(|&i| (items[i], i));
    let mut rank = vec![0u32; items.len()];
    for (r, i) in idx.into_iter().enumerate() {
        rank[i] = r as u32;
    }
    rank
}

struct Sim<'a, 't> {
    cfg: &'a RunConfig,
    cluster: Cluster,
    policy: Policy,
    policy_rng: ChaCha8Rng,
    greedy_rng: ChaCha8Rng,
    series: SeriesStore,
    predictors: Predictors,
    /// Indexed by call id; emptied once a call's last event is applied.
    live: Vec<Option<LiveCall<'t>>>,
    active: BTreeSet<CallId>,
    migrations: u64,
    round: u64,
    pending_waves: Vec<(u32, u64, Vec<Move>)>,
    rounds: Vec<RoundRecord>,
    timings: Vec<SolveTiming>,
}

impl<'t> Sim<'_, 't> {
    fn estimate(&self, call: &LiveCall<'_>, now: u32) -> f64 {
        let current = self.cfg.cpu.cpu_for(call.joined as f64, call.send_mbps);
        let model = match call.recurring_est {
            Some(est) => est,
            None if self.cfg.estimator.uses_table() => estimate_nonrecurring_peak_cpu(
                call.joined,
                now.saturating_sub(call.record.start_s) / 60,
                &self.predictors.table,
                self.predictors.avg_rate,
                &self.cfg.cpu,
            ),
            None => 0.0,
        };
        model.max(current)
    }

    fn recurring_estimate(&self, record: &CallRecord) -> Option<f64> {
        if !self.cfg.estimator.uses_history() {
            return None;
        }
        let history = self.series.history(record.series_id.as_deref()?);
        match predict_recurring(&history, &self.cfg.cpu, &self.cfg.predictors.rates) {
            RecurringPrediction::Estimate(e) => Some(e.peak_cpu_pct),
            RecurringPrediction::NotEnoughHistory => None,
        }
    }

    fn apply_event(&mut self, id: CallId, now: u32) {
        let mut call = self.live[id.idx()].take().expect("event for a live call");
        let ev = call.record.events[call.order[call.next_event] as usize];
        call.next_event += 1;
        let p = &mut call.media[ev.participant as usize];
        let before = p.send_mbps();
        if p.apply(&ev.action).is_ok() {
            call.send_mbps += p.send_mbps() - before;
            match ev.action {
                Action::Join => call.joined += 1,
                Action::Leave => call.joined -= 1,
                _ => {}
            }
        }
        if call.send_mbps.abs() < 1e-9 {
            call.send_mbps = 0.0;
        }

        let ref_cpu = self.cfg.cpu.cpu_for(call.joined as f64, call.send_mbps);
        if !self.cluster.is_active(id) {
            // First event: the call's first participant arrives.
            call.recurring_est = self.recurring_estimate(call.record);
            let mut state = CallState::new(id, call.record.start_s);
            state.participants = call.joined;
            state.send_mbps = call.send_mbps;
            state.ref_cpu_pct = ref_cpu;
            state.est_peak_pct = self.estimate(&call, now);
            state.is_recurring_predicted = call.recurring_est.is_some();
            let mp = self
                .policy
                .pick_mp(self.cluster.mps(), &mut self.policy_rng)
                .expect("cluster has MPs");
            self.cluster.assign_call(state, mp).expect("new call");
            self.active.insert(id);
        } else {
            self.cluster
                .update_load(id, call.joined, call.send_mbps, ref_cpu)
                .expect("live call");
            let est = self.estimate(&call, now);
            let recurring = call.recurring_est.is_some();
            self.cluster.set_estimate(id, est, recurring).expect("live call");
        }

        if call.next_event == call.order.len() {
            self.cluster.remove_call(id).expect("live call");
            self.active.remove(&id);
            if let Some(series) = &call.record.series_id {
                self.series.record(series, summarize_occurrence(call.record));
            }
        } else {
            self.live[id.idx()] = Some(call);
        }
    }

    fn refresh_estimates(&mut self, now: u32) {
        let ids: Vec<CallId> = self.active.iter().copied().collect();
        for id in ids {
            let call = self.live[id.idx()].as_ref().expect("active calls are live");
            let est = self.estimate(call, now);
            let recurring = call.recurring_est.is_some();
            self.cluster.set_estimate(id, est, recurring).expect("live call");
        }
    }

    fn execute(&mut self, round: u64, moves: &[Move]) -> u64 {
        let mut applied = 0;
        for mv in moves {
            let still_there = self
                .cluster
                .call(mv.call)
                .is_ok_and(|c| c.assigned_mp == mv.from);
            if still_there {
                self.cluster.move_call(mv.call, mv.to, round).expect("checked");
                applied += 1;
            }
        }
        self.migrations += applied;
        applied
    }

    fn plan_round(&mut self, now: u32, observer: &mut dyn PlanObserver) {
        self.round += 1;
        let round = self.round;
        let (plan, mip) = match self.cfg.migration {
            MigrationMode::None => return,
            MigrationMode::Greedy => (
                plan_greedy(&self.cluster, self.cfg.planner.budget, &mut self.greedy_rng),
                None,
            ),
            MigrationMode::Mip => {
                let solver = BranchAndBound {
                    limits: self.cfg.planner.solver.clone(),
                };
                let r = plan_by_virtual_clusters(&self.cluster, &self.cfg.planner, &solver, now, round);
                (r.plan.clone(), Some(r))
            }
        };
        observer.on_round(&RoundView {
            t: now,
            round,
            cluster: &self.cluster,
            mip: mip.as_ref(),
            plan: &plan,
        });
        let mut statuses = Vec::new();
        if let Some(r) = &mip {
            for s in &r.solves {
                statuses.push(s.solution.status.label());
                self.timings.push(SolveTiming {
                    round,
                    vc: s.vc,
                    calls: s.model.n_calls(),
                    mps: s.model.n_mps(),
                    nodes: s.solution.nodes,
                    status: s.solution.status.label(),
                    wall_s: s.wall_s,
                });
            }
        }
        self.rounds.push(RoundRecord {
            round,
            t: now,
            moves: 0,
            deferred: plan.deferred.len(),
            waves: plan.waves.len(),
            statuses,
        });
        let mut waves = plan.waves.into_iter();
        if let Some(first) = waves.next() {
            let applied = self.execute(round, &first);
            self.rounds.last_mut().expect("pushed").moves += applied as usize;
        }
        for (k, wave) in waves.enumerate() {
            self.pending_waves.push((now + 1 + k as u32, round, wave));
        }
    }

    fn run_due_waves(&mut self, now: u32) {
        let due: Vec<(u32, u64, Vec<Move>)> = {
            let (due, rest) = std::mem::take(&mut self.pending_waves)
                .into_iter()
                .partition(|w| w.0 <= now);
            self.pending_waves = rest;
            due
        };
        for (_, round, wave) in due {
            let applied = self.execute(round, &wave);
            if let Some(r) = self.rounds.iter_mut().rev().find(|r| r.round == round) {
                r.moves += applied as usize;
            }
        }
    }
}

pub fn run_with_observer(
    cfg: &RunConfig,
    trace: &CallTrace,
    observer: &mut dyn PlanObserver,
) -> Result<RunReport, EngineError> {
    cfg.validate()?;
    trace.validate()?;
    let cluster = Cluster::new(cfg.cluster.clone(), cfg.seed)
        .map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
    let warmup = trace.warmup_s;
    let end = trace.duration_s;

    let mut series = SeriesStore::default();
    let mut history: Vec<&CallRecord> =
        trace.history_calls().filter(|c| c.series_id.is_some()).collect();
    history.sort_by_key(|c| c.end_s);
    for c in history {
        series.record(c.series_id.as_deref().expect("filtered"), summarize_occurrence(c));
    }

    let mut sim = Sim {
        cfg,
        cluster,
        policy: Policy::new(cfg.policy, cfg.cluster.llr_k),
        policy_rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15),
        greedy_rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xc2b2_ae3d_27d4_eb4f),
        series,
        predictors: train(cfg, trace, warmup),
        live: Vec::new(),
        active: BTreeSet::new(),
        migrations: 0,
        round: 0,
        pending_waves: Vec::new(),
        rounds: Vec::new(),
        timings: Vec::new(),
    };

    // Replay queue ordered by (time, call id rank); each call holds its next event.
    let live_calls: Vec<&CallRecord> =
        trace.live_calls().filter(|c| !c.events.is_empty()).collect();
    let call_rank = ranks(live_calls.iter().map(|c| c.call_id.as_str()));
    let mut queue: BinaryHeap<Reverse<(u32, u32, u32)>> = BinaryHeap::new();
    for (i, rec) in live_calls.iter().enumerate() {
        let prank = ranks(rec.participants.iter().map(String::as_str));
        let mut order: Vec<u32> = (0..rec.events.len() as u32).collect();
        order.sort_by_key(|&e| {
            let ev = &rec.events[e as usize];
            (ev.time_s, prank[ev.participant as usize])
        });
        let first = rec.events[order[0] as usize].time_s;
        sim.live.push(Some(LiveCall {
                record: rec,
                media: vec![ParticipantMedia::default(); rec.participants.len()],
                joined: 0,
                send_mbps: 0.0,
                recurring_est: None,
                next_event: 0,
                order,
        }));
        queue.push(Reverse((first, call_rank[i], i as u32)));
    }

    let mut snapshots = Vec::new();
    let mut next_retrain = warmup.saturating_add(cfg.predictors.retrain_period_s);
    for now in warmup..end {
        while let Some(&Reverse((t, rank, i))) = queue.peek() {
            if t != now {
                break;
            }
            queue.pop();
            let id = CallId(i);
            sim.apply_event(id, now);
            if let Some(call) = &sim.live[id.idx()] {
                let next = call.record.events[call.order[call.next_event] as usize].time_s;
                queue.push(Reverse((next, rank, i)));
            }
        }
        sim.run_due_waves(now);
        let since = now - warmup;
        if now == next_retrain {
            sim.predictors = train(cfg, trace, now);
            next_retrain = next_retrain.saturating_add(cfg.predictors.retrain_period_s);
        }
        if since % cfg.estimate_refresh_s == 0 {
            sim.refresh_estimates(now);
        }
        if since % cfg.metrics_period_s == 0 {
            snapshots.push(metrics::snapshot(
                &sim.cluster,
                since / cfg.metrics_period_s,
                sim.migrations,
            ));
        }
        if cfg.migration != MigrationMode::None && since > 0 && since % cfg.planner.period_s == 0 {
            sim.plan_round(now, observer);
        }
    }

    let aggregates = Aggregates::compute(&cfg.label(), &snapshots, &sim.rounds);
    Ok(RunReport {
        snapshots,
        rounds: sim.rounds,
        timings: sim.timings,
        aggregates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{Media, MediaKind, ParticipantEvent};

    fn one_mp(migration: MigrationMode) -> RunConfig {
        let mut cfg = RunConfig {
            migration,
            policy: PolicyKind::Llr,
            ..RunConfig::default()
        };
        cfg.cluster.n_mps = 1;
        cfg.cluster.n_virtual_clusters = 1;
        cfg
    }

    fn video_call(id: &str, n: u32, start: u32, end: u32) -> CallRecord {
        let mut events = Vec::new();
        for p in 0..n {
            events.push(ParticipantEvent { time_s: start, participant: p, action: Action::Join });
            events.push(ParticipantEvent {
                time_s: start,
                participant: p,
                action: Action::MediaStart(Media::new(MediaKind::Video, 1.0)),
            });
        }
        for p in 0..n {
            events.push(ParticipantEvent { time_s: end, participant: p, action: Action::Leave });
        }
        CallRecord {
            call_id: id.into(),
            series_id: None,
            start_s: start,
            end_s: end,
            participants: (0..n).map(|p| format!("{id}-p{p}")).collect(),
            events,
        }
    }

    #[test]
    fn empty_trace_gives_zero_snapshots() {
        let trace = CallTrace::empty(3600, 1);
        let r = run(&one_mp(MigrationMode::Mip), &trace).unwrap();
        assert_eq!(r.snapshots.len(), 60);
        assert!(r.snapshots.iter().all(|s| s.max_cpu == 0.0 && s.active_participants == 0));
        assert_eq!(r.aggregates.hot_participant_minutes, 0);
    }

    #[test]
    fn five_video_participants_cost_five_in_and_twenty_out() {
        let mut trace = CallTrace::empty(3600, 1);
        trace.calls.push(video_call("c", 5, 30, 1830));
        let cfg = one_mp(MigrationMode::None);
        let r = run(&cfg, &trace).unwrap();
        let want = cfg.cpu.base_pct_per_call + cfg.cpu.pct_per_mbps * (5.0 + 20.0);
        let during: Vec<_> = r.snapshots.iter().filter(|s| s.minute >= 1 && s.minute < 30).collect();
        assert!(!during.is_empty());
        for s in during {
            assert!((s.max_cpu - want).abs() < 1e-6, "{} vs {want}", s.max_cpu);
            assert_eq!(s.active_participants, 5);
        }
        assert_eq!(r.snapshots[31].max_cpu, 0.0);
    }

    #[test]
    fn overloaded_single_mp_counts_hot_participants() {
        let mut trace = CallTrace::empty(1200, 1);
        trace.calls.push(video_call("a", 25, 0, 600));
        let r = run(&one_mp(MigrationMode::Greedy), &trace).unwrap();
        // 25 all-video participants exceed the threshold for all ten minutes.
        assert_eq!(r.aggregates.hot_participant_minutes, 250);
        assert_eq!(r.aggregates.total_migrations, 0);
    }

    #[test]
    fn labels_name_policy_migration_and_estimator() {
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.label(), "tetris+mip");
        cfg.estimator = EstimatorMode::Key1;
        assert_eq!(cfg.label(), "tetris+mip/key1");
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = RunConfig::default();
        cfg.metrics_period_s = 0;
        assert!(matches!(run(&cfg, &CallTrace::empty(60, 1)), Err(EngineError::InvalidConfig(_))));
    }
}
