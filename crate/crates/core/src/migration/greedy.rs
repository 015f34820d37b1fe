//! Baseline migration: drain each hot MP, hottest first, by moving randomly
//! chosen calls to the lowest-numbered cold MP that stays below the threshold.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::cluster::{CallId, Cluster};
use crate::cpu_model::pct_to_ticks;

use super::{MigrationPlan, Move};

/// Max segment tree answering "first index at or after `lo` whose value exceeds `x`".
struct FirstAbove {
    size: usize,
    tree: Vec<f64>,
}

impl FirstAbove {
    fn new(values: &[f64]) -> Self {
        let size = values.len().next_power_of_two().max(1);
        let mut tree = vec![f64::NEG_INFINITY; 2 * size];
        tree[size..size + values.len()].copy_from_slice(values);
        for i in (1..size).rev() {
            tree[i] = tree[2 * i].max(tree[2 * i + 1]);
        }
        Self { size, tree }
    }

    fn set(&mut self, i: usize, v: f64) {
        let mut i = i + self.size;
        self.tree[i] = v;
        while i > 1 {
            i /= 2;
            self.tree[i] = self.tree[2 * i].max(self.tree[2 * i + 1]);
        }
    }

    fn find(&self, lo: usize, x: f64) -> Option<usize> {
        self.descend(1, 0, self.size, lo, x)
    }

    fn descend(&self, node: usize, l: usize, r: usize, lo: usize, x: f64) -> Option<usize> {
        if r <= lo || self.tree[node] <= x {
            return None;
        }
        if r - l == 1 {
            return Some(l);
        }
        let mid = (l + r) / 2;
        self.descend(2 * node, l, mid, lo, x)
            .or_else(|| self.descend(2 * node + 1, mid, r, lo, x))
    }
}

/// Uses measured CPU. At most `budget` moves; all land in one wave.
pub fn plan_greedy(cluster: &Cluster, budget: usize, rng: &mut impl Rng) -> MigrationPlan {
    let threshold = pct_to_ticks(cluster.config().hot_threshold_pct);
    let mps = cluster.mps();
    let mut load: Vec<i64> = mps.iter().map(|m| m.current_ticks).collect();

    let mut hot: Vec<usize> = (0..mps.len()).filter(|&i| load[i] >= threshold).collect();
    hot.sort_by_key(|&i| (std::cmp::Reverse(load[i]), i));
    if hot.is_empty() || budget == 0 {
        return MigrationPlan::default();
    }

    // Room left below the threshold in reference-SKU ticks; hot MPs never receive.
    let room = |i: usize, load: i64| (threshold - load) as f64 / mps[i].perf_ratio();
    let values: Vec<f64> = (0..mps.len())
        .map(|i| if load[i] >= threshold { f64::NEG_INFINITY } else { room(i, load[i]) })
        .collect();
    let mut tree = FirstAbove::new(&values);

    let mut moves = Vec::new();
    'hot: for &src in &hot {
        let mut calls: Vec<CallId> = mps[src].hosted.iter().copied().collect();
        calls.shuffle(rng);
        for id in calls {
            if load[src] < threshold {
                break;
            }
            if moves.len() == budget {
                break 'hot;
            }
            let call = cluster.call(id).expect("hosted calls are active");
            if call.current_ticks() == 0 {
                continue;
            }
            let need = pct_to_ticks(call.ref_cpu_pct) as f64;
            let mut lo = 0;
            // The float tree may admit a candidate the exact check rejects.
            while let Some(dst) = tree.find(lo, need - 1.0) {
                let add = pct_to_ticks(call.ref_cpu_pct * mps[dst].perf_ratio());
                if load[dst] + add < threshold {
                    load[src] -= call.current_ticks();
                    load[dst] += add;
                    tree.set(dst, room(dst, load[dst]));
                    moves.push(Move {
                        call: id,
                        from: mps[src].id,
                        to: mps[dst].id,
                        from_load: call.current_ticks(),
                        to_load: add,
                    });
                    break;
                }
                lo = dst + 1;
            }
        }
    }
    MigrationPlan {
        waves: if moves.is_empty() { Vec::new() } else { vec![moves] },
        deferred: Vec::new(),
    }
}
