//! Best-first branch and bound for the repacking program.
//!
//! Calls are branched in decreasing size order. A node's bound is the largest
//! of: the current maximum load, the cheapest placement of the next call, and a
//! water-filling bound where the remaining calls may be split across MPs. The
//! water-fill is computed once per expanded node and inherited by its children.
//! Warm starts come from keeping everything in place, longest-processing-time
//! placement and a move-based descent on the most loaded MP. Calls without an
//! MP in the model always move and use up budget first.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::model::{RepackModel, RepackSolution, SolveStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveLimits {
    pub time_limit_s: f64,
    /// Stop once `(y - bound) / y` is at most this.
    pub gap: f64,
    /// Cap on generated search nodes; keeps results independent of machine speed.
    pub node_limit: Option<u64>,
}

impl Default for SolveLimits {
    fn default() -> Self {
        Self {
            time_limit_s: 120.0,
            gap: 0.10,
            node_limit: Some(2_000_000),
        }
    }
}

impl SolveLimits {
    /// No gap tolerance and no limits: solve to proven optimality.
    pub fn exact() -> Self {
        Self {
            time_limit_s: f64::INFINITY,
            gap: 0.0,
            node_limit: None,
        }
    }
}

/// Seam for alternative solver backends.
pub trait RepackSolver: Sync {
    fn solve(&self, model: &RepackModel) -> RepackSolution;
}

#[derive(Debug, Clone, Default)]
pub struct BranchAndBound {
    pub limits: SolveLimits,
}

impl RepackSolver for BranchAndBound {
    fn solve(&self, model: &RepackModel) -> RepackSolution {
        solve_repack(model, &self.limits)
    }
}

pub fn solve_repack(model: &RepackModel, limits: &SolveLimits) -> RepackSolution {
    if model.n_calls() == 0 {
        return RepackSolution {
            assignment: Vec::new(),
            y: model.base.iter().copied().max().unwrap_or(0),
            status: SolveStatus::Optimal,
            nodes: 0,
        };
    }
    let search = Search::new(model, limits);
    let start = Instant::now();
    let capped = search.run(true, start);
    if let Some((assignment, y, status, nodes)) = capped {
        return RepackSolution { assignment, y, status, nodes };
    }
    let (assignment, y, _, nodes) = search
        .run(false, start)
        .expect("a model within its budget always has a relaxed solution");
    RepackSolution {
        assignment,
        y,
        status: SolveStatus::InfeasibleRelaxed,
        nodes,
    }
}

struct Search<'a> {
    model: &'a RepackModel,
    limits: &'a SolveLimits,
    /// `w[c][m]` in branching order.
    w: Vec<Vec<i64>>,
    /// Model index of the call branched at each depth.
    order: Vec<usize>,
    orig: Vec<Option<usize>>,
    /// Forced moves at depths `i ≥ d`.
    suffix_forced: Vec<usize>,
    /// Sum over depths `i ≥ d` of the smallest reference-equivalent size `min_m w / R_m`.
    suffix_eff: Vec<f64>,
}

type Outcome = (Vec<usize>, i64, SolveStatus, u64);

impl<'a> Search<'a> {
    fn new(model: &'a RepackModel, limits: &'a SolveLimits) -> Self {
        let nm = model.n_mps();
        let mut order: Vec<usize> = (0..model.n_calls()).collect();
        let size = |c: usize| (0..nm).map(|m| model.weight(c, m)).max().unwrap_or(0);
        order.sort_by_key(|&c| (Reverse(size(c)), c));
        let w: Vec<Vec<i64>> = order
            .iter()
            .map(|&c| (0..nm).map(|m| model.weight(c, m)).collect())
            .collect();
        let eff: Vec<f64> = w
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&model.ratio)
                    .map(|(&w, &r)| w as f64 / r)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let mut suffix_eff = vec![0.0; eff.len() + 1];
        for d in (0..eff.len()).rev() {
            suffix_eff[d] = suffix_eff[d + 1] + eff[d];
        }
        let orig: Vec<Option<usize>> = order.iter().map(|&c| model.original[c]).collect();
        let mut suffix_forced = vec![0; orig.len() + 1];
        for d in (0..orig.len()).rev() {
            suffix_forced[d] = suffix_forced[d + 1] + orig[d].is_none() as usize;
        }
        Self {
            model,
            limits,
            orig,
            suffix_forced,
            order,
            w,
            suffix_eff,
        }
    }

    fn cap(&self, m: usize, capped: bool) -> i64 {
        if capped {
            self.model.cap[m]
        } else {
            i64::MAX / 4
        }
    }

    fn to_model_order(&self, by_depth: &[usize]) -> Vec<usize> {
        let mut out = vec![0; by_depth.len()];
        for (d, &m) in by_depth.iter().enumerate() {
            out[self.order[d]] = m;
        }
        out
    }

    fn evaluate(&self, by_depth: &[usize], capped: bool) -> Option<i64> {
        let mut loads = self.model.base.clone();
        let mut moves = 0;
        for (d, &m) in by_depth.iter().enumerate() {
            loads[m] += self.w[d][m];
            moves += (Some(m) != self.orig[d]) as usize;
        }
        if moves > self.model.budget {
            return None;
        }
        if capped && loads.iter().enumerate().any(|(m, &l)| l > self.model.cap[m]) {
            return None;
        }
        loads.into_iter().max()
    }

    fn warm_starts(&self, capped: bool) -> Option<(Vec<usize>, i64)> {
        let nm = self.model.n_mps();
        let budget = self.model.budget;
        let cheapest = |loads: &[i64], row: &[i64], o: Option<usize>| {
            (0..nm)
                .min_by_key(|&m| (loads[m] + row[m], Some(m) != o, m))
                .expect("model has MPs")
        };

        // In place, with forced calls on the least loaded MP.
        let mut loads = self.model.base.clone();
        for (d, o) in self.orig.iter().enumerate() {
            if let Some(m) = *o {
                loads[m] += self.w[d][m];
            }
        }
        let mut kept = Vec::with_capacity(self.w.len());
        for (d, row) in self.w.iter().enumerate() {
            let m = self.orig[d].unwrap_or_else(|| cheapest(&loads, row, None));
            if self.orig[d].is_none() {
                loads[m] += row[m];
            }
            kept.push(m);
        }

        // Longest processing time first, preferring the original MP on ties.
        let mut loads = self.model.base.clone();
        let mut moves = 0;
        let mut lpt = Vec::with_capacity(self.w.len());
        for (d, row) in self.w.iter().enumerate() {
            let m = match self.orig[d] {
                Some(o) if moves + 1 + self.suffix_forced[d + 1] > budget => o,
                o => cheapest(&loads, row, o),
            };
            moves += (Some(m) != self.orig[d]) as usize;
            loads[m] += row[m];
            lpt.push(m);
        }
        let seeds = [kept, lpt];

        let mut best: Option<(Vec<usize>, i64)> = None;
        for seed in seeds {
            let improved = self.descend(seed, capped);
            if let Some(y) = self.evaluate(&improved, capped) {
                if best.as_ref().is_none_or(|b| y < b.1) {
                    best = Some((improved, y));
                }
            }
        }
        best
    }

    /// Repeatedly moves a call off the most loaded MP while that lowers the
    /// maximum, within the move budget and caps.
    fn descend(&self, mut a: Vec<usize>, capped: bool) -> Vec<usize> {
        let nm = self.model.n_mps();
        let mut loads = self.model.base.clone();
        let mut on: Vec<Vec<usize>> = vec![Vec::new(); nm];
        let mut moves = 0usize;
        for (d, &m) in a.iter().enumerate() {
            loads[m] += self.w[d][m];
            on[m].push(d);
            moves += (Some(m) != self.orig[d]) as usize;
        }
        for _ in 0..(4 * a.len() + 16) {
            let hot = (0..nm).max_by_key(|&m| (loads[m], Reverse(m))).expect("model has MPs");
            let top = loads[hot];
            // Minimize the larger of the two touched loads.
            let mut step: Option<(i64, i64, usize, usize)> = None;
            for &d in &on[hot] {
                let left = top - self.w[d][hot];
                for m in 0..nm {
                    if m == hot {
                        continue;
                    }
                    let o = self.orig[d];
                    let next_moves = moves + (Some(m) != o) as usize - (Some(hot) != o) as usize;
                    if next_moves > self.model.budget {
                        continue;
                    }
                    let after = loads[m] + self.w[d][m];
                    if after >= top || after > self.cap(m, capped) {
                        continue;
                    }
                    let key = (left.max(after), after, d, m);
                    if step.is_none_or(|s| key < s) {
                        step = Some(key);
                    }
                }
            }
            let Some((_, _, d, m)) = step else { break };
            let o = self.orig[d];
            moves = moves + (Some(m) != o) as usize - (Some(hot) != o) as usize;
            loads[hot] -= self.w[d][hot];
            loads[m] += self.w[d][m];
            on[hot].retain(|&x| x != d);
            on[m].push(d);
            a[d] = m;
        }
        a
    }

    /// Smallest level `Y` such that raising every MP below `Y` up to `Y`
    /// absorbs `demand` reference units.
    fn water_level(&self, loads: &[i64], demand: f64) -> f64 {
        if demand <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let mut idx: Vec<usize> = (0..loads.len()).collect();
        idx.sort_by_key(|&m| (loads[m], m));
        let (mut num, mut den) = (demand, 0.0);
        for (j, &m) in idx.iter().enumerate() {
            let r = self.model.ratio[m];
            num += loads[m] as f64 / r;
            den += 1.0 / r;
            let level = num / den;
            if j + 1 == idx.len() || level <= loads[idx[j + 1]] as f64 {
                return level;
            }
        }
        unreachable!("loop returns on the last MP")
    }

    fn run(&self, capped: bool, start: Instant) -> Option<Outcome> {
        let nm = self.model.n_mps();
        let n = self.w.len();
        let budget = self.model.budget;
        let time_limit = Duration::try_from_secs_f64(self.limits.time_limit_s).ok();
        let gap = self.limits.gap.max(0.0);
        let prune_at = |ub: Option<i64>| -> f64 {
            match ub {
                None => f64::INFINITY,
                Some(ub) => ub as f64 * (1.0 - gap),
            }
        };

        // Placements only add load, so a base above its cap rules out every assignment.
        if capped && (0..nm).any(|m| self.model.base[m] > self.model.cap[m]) {
            return None;
        }
        let mut incumbent = self.warm_starts(capped);
        let root_loads = &self.model.base;
        let root_bound = {
            let frac = self.water_level(root_loads, self.suffix_eff[0]);
            let next = (0..nm).map(|m| root_loads[m] + self.w[0][m]).min().unwrap_or(0);
            let max = root_loads.iter().copied().max().unwrap_or(0);
            max.max(next).max(ceil_bound(frac))
        };

        // Node arena: (parent, mp chosen at this depth). Index 0 is the root.
        let mut arena: Vec<(u32, u16)> = vec![(u32::MAX, u16::MAX)];
        let mut heap: BinaryHeap<(Reverse<i64>, u32, Reverse<u32>)> = BinaryHeap::new();
        heap.push((Reverse(root_bound), 0, Reverse(0)));
        let mut discarded_min = i64::MAX;
        let mut expansions: u64 = 0;
        let mut limit_hit = false;
        let mut path: Vec<usize> = Vec::with_capacity(n);
        let mut loads = vec![0i64; nm];

        while let Some((Reverse(bound), depth, Reverse(node))) = heap.pop() {
            let ub = incumbent.as_ref().map(|i| i.1);
            if bound as f64 >= prune_at(ub) {
                discarded_min = discarded_min.min(bound);
                break;
            }
            if self.limits.node_limit.is_some_and(|l| arena.len() as u64 >= l)
                || (expansions % 256 == 0 && time_limit.is_some_and(|t| start.elapsed() >= t))
            {
                heap.push((Reverse(bound), depth, Reverse(node)));
                limit_hit = true;
                break;
            }
            expansions += 1;

            path.clear();
            let mut cur = node;
            while cur != 0 {
                let (parent, m) = arena[cur as usize];
                path.push(m as usize);
                cur = parent;
            }
            path.reverse();
            let d = depth as usize;
            loads.copy_from_slice(&self.model.base);
            let mut moves = 0usize;
            for (i, &m) in path.iter().enumerate() {
                loads[m] += self.w[i][m];
                moves += (Some(m) != self.orig[i]) as usize;
            }
            let cur_max = loads.iter().copied().max().unwrap_or(0);
            let frac = ceil_bound(self.water_level(&loads, self.suffix_eff[d]));
            let inherited = bound.max(frac).max(cur_max);
            if inherited as f64 >= prune_at(ub) {
                discarded_min = discarded_min.min(inherited);
                continue;
            }
            let avail: f64 = if capped {
                (0..nm)
                    .map(|m| (self.model.cap[m] - loads[m]).max(0) as f64 / self.model.ratio[m])
                    .sum()
            } else {
                f64::INFINITY
            };
            // Cheapest two placements of the following call at the current loads.
            let next = (d + 1 < n).then(|| {
                let mut best = [(i64::MAX, usize::MAX); 2];
                for m in 0..nm {
                    let v = loads[m] + self.w[d + 1][m];
                    if v < best[0].0 {
                        best[1] = best[0];
                        best[0] = (v, m);
                    } else if v < best[1].0 {
                        best[1] = (v, m);
                    }
                }
                best
            });

            let o = self.orig[d];
            for m in 0..nm {
                let child_moves = moves + (Some(m) != o) as usize;
                if child_moves + self.suffix_forced[d + 1] > budget {
                    continue;
                }
                let placed = loads[m] + self.w[d][m];
                if placed > self.cap(m, capped) {
                    continue;
                }
                let child_max = cur_max.max(placed);
                if d + 1 == n {
                    let ub = incumbent.as_ref().map(|i| i.1);
                    if ub.is_none_or(|u| child_max < u) {
                        let mut full = path.clone();
                        full.push(m);
                        incumbent = Some((full, child_max));
                    }
                    continue;
                }
                if capped {
                    let freed = (self.model.cap[m] - loads[m]).max(0) as f64 / self.model.ratio[m];
                    let left = (self.model.cap[m] - placed).max(0) as f64 / self.model.ratio[m];
                    let child_avail = avail - freed + left;
                    let need = self.suffix_eff[d + 1];
                    if child_avail < need - 1e-9 * need.max(1.0) {
                        continue;
                    }
                }
                let stays = (child_moves + self.suffix_forced[d + 1] == budget)
                    .then_some(self.orig[d + 1])
                    .flatten();
                let nb = if let Some(on) = stays {
                    let base = if on == m { placed } else { loads[on] };
                    base + self.w[d + 1][on]
                } else {
                    let best = next.expect("d + 1 < n");
                    let other = if best[0].1 == m { best[1].0 } else { best[0].0 };
                    other.min(placed + self.w[d + 1][m])
                };
                let child_bound = inherited.max(child_max).max(nb);
                let ub = incumbent.as_ref().map(|i| i.1);
                if child_bound as f64 >= prune_at(ub) {
                    discarded_min = discarded_min.min(child_bound);
                    continue;
                }
                if self.limits.node_limit.is_some_and(|l| arena.len() as u64 >= l) {
                    discarded_min = discarded_min.min(child_bound);
                    limit_hit = true;
                    continue;
                }
                arena.push((node, m as u16));
                heap.push((Reverse(child_bound), depth + 1, Reverse(arena.len() as u32 - 1)));
            }
        }

        let (by_depth, y) = incumbent?;
        let open_min = heap.peek().map_or(i64::MAX, |e| e.0 .0);
        let bound = open_min.min(discarded_min).min(y).max(root_bound.min(y));
        let status = if limit_hit {
            SolveStatus::TimeLimit { best_y: y, bound }
        } else if bound >= y {
            SolveStatus::Optimal
        } else {
            SolveStatus::GapReached {
                gap: (y - bound) as f64 / y as f64,
            }
        };
        Some((self.to_model_order(&by_depth), y, status, arena.len() as u64))
    }
}

/// Integer lower bound from a real-valued one, with slack for rounding.
fn ceil_bound(v: f64) -> i64 {
    if v == f64::NEG_INFINITY {
        return i64::MIN;
    }
    (v - 1e-6 * v.abs().max(1.0)).ceil() as i64
}
