//! Repacking pipeline for one planner round: per virtual cluster, pick the
//! candidate calls and MPs, build the program, solve it and order the moves
//! into waves.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cluster::{CallId, Cluster, MpId};
use crate::cpu_model::pct_to_ticks;

use super::model::{RepackModel, RepackSolution, SolveStatus};
use super::solver::{RepackSolver, SolveLimits};
use super::waves::schedule_waves;
use super::{MigrationPlan, Move};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub period_s: u32,
    /// `E`: calls with an estimated peak at or below this are never moved.
    pub mice_threshold_pct: f64,
    /// `L`: moves allowed per round, split across virtual clusters.
    pub budget: usize,
    /// MPs at or above this fraction of their cap count as near-hot.
    pub near_hot_fraction: f64,
    pub min_age_s: u32,
    /// Cold MPs are added until their free capacity reaches this multiple of the overflow.
    pub cold_capacity_factor: f64,
    pub solver: SolveLimits,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            period_s: 120,
            mice_threshold_pct: 2.0,
            budget: 1000,
            near_hot_fraction: 0.95,
            min_age_s: 180,
            cold_capacity_factor: 5.0,
            solver: SolveLimits::default(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.period_s == 0 {
            return Err("planner.period_s must be positive".into());
        }
        if !(self.mice_threshold_pct >= 0.0) {
            return Err("planner.mice_threshold_pct must be non-negative".into());
        }
        if !(self.near_hot_fraction > 0.0 && self.near_hot_fraction <= 1.0) {
            return Err("planner.near_hot_fraction must be in (0, 1]".into());
        }
        if !(self.cold_capacity_factor >= 0.0) {
            return Err("planner.cold_capacity_factor must be non-negative".into());
        }
        if !(self.solver.time_limit_s > 0.0) {
            return Err("planner.solver.time_limit_s must be positive".into());
        }
        if !(self.solver.gap >= 0.0 && self.solver.gap < 1.0) {
            return Err("planner.solver.gap must be in [0, 1)".into());
        }
        Ok(())
    }

    /// Budget of virtual cluster `vc` out of `n`.
    pub fn budget_share(&self, vc: usize, n: usize) -> usize {
        self.budget / n + usize::from(vc < self.budget % n)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Candidates {
    pub calls: Vec<CallId>,
    /// Hot and near-hot MPs first, then the chosen cold MPs. Closed MPs are
    /// left out.
    pub mps: Vec<MpId>,
    /// Warm MPs whose stationary load alone exceeds the cap; their candidate
    /// calls have to leave.
    pub closed: Vec<MpId>,
    /// `B_m` per entry of `mps`.
    pub base: Vec<i64>,
    /// Overflow above cap summed over hot MPs.
    pub t1: i64,
}

impl Candidates {
    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }
}

/// Selects candidates among the MPs in `scope` using estimated peak loads.
/// A call too large for any MP in scope stays where it is.
pub fn select_candidates(
    cluster: &Cluster,
    scope: &[MpId],
    cfg: &PlannerConfig,
    now: u32,
    round: u64,
) -> Candidates {
    let mps = cluster.mps();
    let near = |id: MpId| {
        let m = &mps[id.idx()];
        m.expected_ticks as f64 >= cfg.near_hot_fraction * m.cap_ticks as f64
    };
    let mut warm: Vec<MpId> = scope.iter().copied().filter(|&id| near(id)).collect();
    warm.sort();
    if warm.is_empty() {
        return Candidates::default();
    }
    let t1: i64 = warm
        .iter()
        .map(|id| &mps[id.idx()])
        .filter(|m| m.expected_ticks >= m.cap_ticks)
        .map(|m| m.expected_ticks - m.cap_ticks)
        .sum();

    let mice = pct_to_ticks(cfg.mice_threshold_pct);
    let fits = scope
        .iter()
        .map(|id| mps[id.idx()].cap_ticks as f64 / mps[id.idx()].perf_ratio())
        .fold(0.0, f64::max);
    let mut calls = Vec::new();
    let mut chosen = Vec::with_capacity(warm.len());
    let mut closed = Vec::new();
    let mut base = Vec::with_capacity(warm.len());
    for &id in &warm {
        let m = &mps[id.idx()];
        let mut b = m.expected_ticks;
        for &cid in &m.hosted {
            let c = cluster.call(cid).expect("hosted calls are active");
            let moved_last_round = round > 0 && c.last_migration_round == Some(round - 1);
            let peak = pct_to_ticks(c.est_peak_pct);
            if peak > mice
                && peak as f64 <= fits
                && c.age_s(now) >= cfg.min_age_s
                && !moved_last_round
            {
                calls.push(cid);
                b -= c.expected_ticks();
            }
        }
        if b > m.cap_ticks {
            closed.push(id);
        } else {
            chosen.push(id);
            base.push(b.max(0));
        }
    }
    if calls.is_empty() {
        return Candidates::default();
    }

    let mut cold: Vec<MpId> = scope.iter().copied().filter(|&id| !near(id)).collect();
    cold.sort_by_key(|id| (std::cmp::Reverse(mps[id.idx()].expected_ticks), *id));
    let want = cfg.cold_capacity_factor * t1 as f64;
    let mut free = 0i64;
    for id in cold {
        if free as f64 >= want {
            break;
        }
        let m = &mps[id.idx()];
        free += (m.cap_ticks - m.expected_ticks).max(0);
        chosen.push(id);
        base.push(m.expected_ticks.max(0));
    }
    Candidates {
        calls,
        mps: chosen,
        closed,
        base,
        t1,
    }
}

/// Calls on closed MPs beyond the budget (smallest first) are left out, as
/// are all calls when no MP is open.
pub fn build_repack_model(cands: &Candidates, cluster: &Cluster, budget: usize) -> RepackModel {
    let mps = cluster.mps();
    let index: std::collections::HashMap<MpId, usize> =
        cands.mps.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut calls: Vec<_> = cands
        .calls
        .iter()
        .map(|&id| cluster.call(id).expect("candidates are active"))
        .collect();
    let mut forced: Vec<_> = calls
        .iter()
        .filter(|c| !index.contains_key(&c.assigned_mp))
        .map(|c| (std::cmp::Reverse(pct_to_ticks(c.est_peak_pct)), c.id))
        .collect();
    forced.sort();
    let dropped: std::collections::HashSet<CallId> =
        forced.iter().skip(budget).map(|&(_, id)| id).collect();
    calls.retain(|c| !dropped.contains(&c.id) && !cands.mps.is_empty());
    RepackModel {
        mps: cands.mps.clone(),
        calls: calls.iter().map(|c| c.id).collect(),
        demand: calls.iter().map(|c| pct_to_ticks(c.est_peak_pct)).collect(),
        base: cands.base.clone(),
        ratio: cands.mps.iter().map(|id| mps[id.idx()].perf_ratio()).collect(),
        cap: cands.mps.iter().map(|id| mps[id.idx()].cap_ticks).collect(),
        original: calls.iter().map(|c| index.get(&c.assigned_mp).copied()).collect(),
        budget,
    }
}

/// Result of one virtual cluster's solve.
#[derive(Debug, Clone)]
pub struct VcSolve {
    pub vc: usize,
    pub candidates: Candidates,
    pub model: RepackModel,
    pub solution: RepackSolution,
    pub wall_s: f64,
}

#[derive(Debug, Clone, Default)]
pub struct MipRound {
    pub plan: MigrationPlan,
    /// Only virtual clusters that had candidates.
    pub solves: Vec<VcSolve>,
}

fn solve_vc(
    cluster: &Cluster,
    scope: &[MpId],
    vc: usize,
    n_vc: usize,
    cfg: &PlannerConfig,
    solver: &dyn RepackSolver,
    now: u32,
    round: u64,
) -> Option<VcSolve> {
    let candidates = select_candidates(cluster, scope, cfg, now, round);
    if candidates.is_empty() {
        return None;
    }
    let model = build_repack_model(&candidates, cluster, cfg.budget_share(vc, n_vc));
    if model.n_calls() == 0 {
        return None;
    }
    let start = Instant::now();
    let solution = solver.solve(&model);
    Some(VcSolve {
        vc,
        candidates,
        model,
        solution,
        wall_s: start.elapsed().as_secs_f64(),
    })
}

/// Moves a solution implies, with loads taken from the cluster for the source
/// and from the model for the destination.
pub fn solution_moves(s: &VcSolve, cluster: &Cluster) -> Vec<Move> {
    let model = &s.model;
    s.solution
        .assignment
        .iter()
        .enumerate()
        .filter(|&(c, &m)| Some(m) != model.original[c])
        .map(|(c, &m)| Move {
            call: model.calls[c],
            from: cluster.call(model.calls[c]).expect("active").assigned_mp,
            to: model.mps[m],
            from_load: cluster.call(model.calls[c]).expect("active").expected_ticks(),
            to_load: model.weight(c, m),
        })
        .collect()
}

/// Solves every virtual cluster (in parallel when there are several) and
/// merges their waves in cluster order.
pub fn plan_by_virtual_clusters(
    cluster: &Cluster,
    cfg: &PlannerConfig,
    solver: &dyn RepackSolver,
    now: u32,
    round: u64,
) -> MipRound {
    let n_vc = cluster.config().n_virtual_clusters;
    let mut scopes: Vec<Vec<MpId>> = vec![Vec::new(); n_vc];
    for m in cluster.mps() {
        scopes[m.virtual_cluster as usize].push(m.id);
    }
    let solves: Vec<VcSolve> = if n_vc == 1 {
        solve_vc(cluster, &scopes[0], 0, 1, cfg, solver, now, round)
            .into_iter()
            .collect()
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = scopes
                .iter()
                .enumerate()
                .map(|(vc, scope)| {
                    s.spawn(move || solve_vc(cluster, scope, vc, n_vc, cfg, solver, now, round))
                })
                .collect();
            handles
                .into_iter()
                .filter_map(|h| h.join().expect("solver thread panicked"))
                .collect()
        })
    };

    let mps = cluster.mps();
    let mut plan = MigrationPlan::default();
    for s in &solves {
        let feasible = s.solution.status != SolveStatus::InfeasibleRelaxed;
        let scheduled = schedule_waves(
            solution_moves(s, cluster),
            |id| mps[id.idx()].expected_ticks,
            |id| mps[id.idx()].cap_ticks,
            feasible,
        );
        plan.merge(scheduled);
    }
    MipRound { plan, solves }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{CallState, ClusterConfig};
    use crate::migration::model::verify_solution;
    use crate::migration::solver::BranchAndBound;

    fn cluster(n: usize, n_vc: usize) -> Cluster {
        let cfg = ClusterConfig {
            n_mps: n,
            n_virtual_clusters: n_vc,
            ..ClusterConfig::default()
        };
        Cluster::new(cfg, 7).unwrap()
    }

    fn place(c: &mut Cluster, id: u32, mp: u32, est: f64, start_s: u32) {
        let mut call = CallState::new(CallId(id), start_s);
        call.ref_cpu_pct = est;
        call.est_peak_pct = est;
        call.participants = 3;
        c.assign_call(call, MpId(mp)).unwrap();
    }

    fn all(c: &Cluster) -> Vec<MpId> {
        c.mps().iter().map(|m| m.id).collect()
    }

    const NOW: u32 = 10_000;

    #[test]
    fn no_hot_mps_no_candidates() {
        let mut c = cluster(3, 1);
        place(&mut c, 0, 0, 50.0, 0);
        let cands = select_candidates(&c, &all(&c), &PlannerConfig::default(), NOW, 1);
        assert!(cands.is_empty());
        assert!(cands.mps.is_empty());
    }

    #[test]
    fn mice_stay_in_base_and_overflow_is_t1() {
        let mut c = cluster(2, 1);
        place(&mut c, 0, 0, 20.0, 0);
        place(&mut c, 1, 0, 1.5, 0);
        place(&mut c, 2, 0, 10.0, 0);
        place(&mut c, 3, 0, 53.5, NOW - 60);
        let cands = select_candidates(&c, &all(&c), &PlannerConfig::default(), NOW, 1);
        assert_eq!(cands.calls, vec![CallId(0), CallId(2)]);
        assert_eq!(cands.t1, pct_to_ticks(10.0));
        assert_eq!(cands.mps[0], MpId(0));
        assert_eq!(cands.base[0], pct_to_ticks(55.0));
    }

    #[test]
    fn cold_mps_taken_from_the_most_loaded_until_five_t1() {
        let mut c = cluster(5, 1);
        place(&mut c, 0, 0, 45.0, 0);
        place(&mut c, 9, 0, 40.0, 0);
        // Cold utilizations 10, 20, 30, 40 leave 65, 55, 45, 35 free.
        for (i, load) in [10.0, 20.0, 30.0, 40.0].iter().enumerate() {
            place(&mut c, 1 + i as u32, 1 + i as u32, *load, 0);
        }
        let cands = select_candidates(&c, &all(&c), &PlannerConfig::default(), NOW, 1);
        // 5 x 10 = 50: the 40% MP (35 free) then the 30% MP (45 free) suffice.
        assert_eq!(cands.mps, vec![MpId(0), MpId(4), MpId(3)]);
    }

    #[test]
    fn overloaded_stationary_mp_is_closed_and_oversized_calls_stay() {
        let mut c = cluster(3, 1);
        place(&mut c, 0, 0, 80.0, NOW - 60);
        place(&mut c, 1, 0, 10.0, 0);
        place(&mut c, 2, 1, 90.0, 0);
        place(&mut c, 3, 1, 5.0, 0);
        let cands = select_candidates(&c, &all(&c), &PlannerConfig::default(), NOW, 1);
        assert_eq!(cands.calls, vec![CallId(1), CallId(3)]);
        assert_eq!(cands.closed, vec![MpId(0), MpId(1)]);
        assert_eq!(cands.mps, vec![MpId(2)]);
        let model = build_repack_model(&cands, &c, 1);
        assert_eq!(model.calls, vec![CallId(1)]);
        assert_eq!(model.original, vec![None]);
    }

    #[test]
    fn recently_moved_and_young_calls_are_excluded() {
        let mut c = cluster(2, 1);
        place(&mut c, 0, 0, 40.0, 0);
        place(&mut c, 1, 0, 40.0, 0);
        place(&mut c, 2, 0, 40.0, NOW - 100);
        c.move_call(CallId(1), MpId(1), 4).unwrap();
        c.move_call(CallId(1), MpId(0), 4).unwrap();
        let cfg = PlannerConfig::default();
        let cands = select_candidates(&c, &all(&c), &cfg, NOW, 5);
        assert_eq!(cands.calls, vec![CallId(0)]);
        let later = select_candidates(&c, &all(&c), &cfg, NOW, 6);
        assert_eq!(later.calls, vec![CallId(0), CallId(1)]);
    }

    #[test]
    fn empty_candidates_give_trivial_model() {
        let m = build_repack_model(&Candidates::default(), &cluster(2, 1), 10);
        let sol = BranchAndBound::default().solve(&m);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(m.n_calls(), 0);
    }

    fn loaded(n_vc: usize) -> Cluster {
        let mut c = cluster(40, n_vc);
        let mut id = 0;
        for mp in 0..40u32 {
            let calls = if mp % 5 == 0 { 6 } else { 2 };
            for _ in 0..calls {
                place(&mut c, id, mp, 9.0 + (id % 7) as f64 * 1.5, 0);
                id += 1;
            }
        }
        c
    }

    #[test]
    fn moves_stay_inside_virtual_clusters_and_counts_add_up() {
        let c = loaded(4);
        let solver = BranchAndBound::default();
        let round = plan_by_virtual_clusters(&c, &PlannerConfig::default(), &solver, NOW, 1);
        assert!(!round.plan.is_empty());
        for mv in round.plan.moves() {
            assert_eq!(
                c.mps()[mv.from.idx()].virtual_cluster,
                c.mps()[mv.to.idx()].virtual_cluster
            );
        }
        let per_vc: usize = round.solves.iter().map(|s| solution_moves(s, &c).len()).sum();
        assert_eq!(round.plan.len() + round.plan.deferred.len(), per_vc);
        for s in &round.solves {
            verify_solution(&s.model, &s.solution).unwrap();
            assert!(s.model.budget <= 250);
        }
    }

    #[test]
    fn single_virtual_cluster_matches_global_solve() {
        let c = loaded(1);
        let cfg = PlannerConfig::default();
        let solver = BranchAndBound::default();
        let round = plan_by_virtual_clusters(&c, &cfg, &solver, NOW, 1);
        let cands = select_candidates(&c, &all(&c), &cfg, NOW, 1);
        let direct = solver.solve(&build_repack_model(&cands, &c, cfg.budget));
        assert_eq!(round.solves.len(), 1);
        assert_eq!(round.solves[0].solution, direct);
    }

    #[test]
    fn hot_spots_in_one_cluster_only_move_there() {
        let mut c = cluster(40, 4);
        let hot_vc = c.mps()[0].virtual_cluster;
        let mut id = 0;
        for m in c.mps().to_vec() {
            let est = if m.id == MpId(0) { 30.0 } else { 5.0 };
            for _ in 0..3 {
                place(&mut c, id, m.id.0, est, 0);
                id += 1;
            }
        }
        let round =
            plan_by_virtual_clusters(&c, &PlannerConfig::default(), &BranchAndBound::default(), NOW, 1);
        assert!(!round.plan.is_empty());
        assert!(round.solves.iter().all(|s| s.vc == hot_vc as usize));
        assert!(round
            .plan
            .moves()
            .all(|m| c.mps()[m.to.idx()].virtual_cluster == hot_vc));
    }

    #[test]
    fn budget_split_sums_to_l() {
        let cfg = PlannerConfig { budget: 1003, ..PlannerConfig::default() };
        let shares: Vec<usize> = (0..4).map(|v| cfg.budget_share(v, 4)).collect();
        assert_eq!(shares, vec![251, 251, 251, 250]);
    }
}
