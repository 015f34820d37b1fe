//! Initial-assignment policies, invoked when a call's first participant arrives.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{MpId, MpState};

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("cluster has no MPs")]
    EmptyCluster,
    #[error("unknown policy {0:?} (expected rr, random, ll, llr, p2 or tetris)")]
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Rr,
    Random,
    Ll,
    Llr,
    P2,
    Tetris,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::Rr,
        PolicyKind::Random,
        PolicyKind::Ll,
        PolicyKind::Llr,
        PolicyKind::P2,
        PolicyKind::Tetris,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Rr => "rr",
            PolicyKind::Random => "random",
            PolicyKind::Ll => "ll",
            PolicyKind::Llr => "llr",
            PolicyKind::P2 => "p2",
            PolicyKind::Tetris => "tetris",
        }
    }

    /// Load metric the policy ranks MPs by.
    pub fn load_view(self) -> LoadView {
        match self {
            PolicyKind::Tetris => LoadView::ExpectedPeak,
            _ => LoadView::Current,
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s.to_ascii_lowercase())
            .ok_or_else(|| PolicyError::Unknown(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadView {
    Current,
    ExpectedPeak,
}

impl LoadView {
    pub fn of(self, mp: &MpState) -> i64 {
        match self {
            LoadView::Current => mp.current_ticks,
            LoadView::ExpectedPeak => mp.expected_ticks,
        }
    }
}

/// Stateful selector: round robin keeps its rotation across decisions.
#[derive(Debug, Clone)]
pub struct Policy {
    pub kind: PolicyKind,
    pub llr_k: usize,
    cursor: usize,
}

impl Policy {
    pub fn new(kind: PolicyKind, llr_k: usize) -> Self {
        Self {
            kind,
            llr_k: llr_k.max(1),
            cursor: 0,
        }
    }

    /// Chooses an MP using the policy's load view. Tetris ranks by the sum of
    /// hosted calls' expected peaks; the new call's own estimate is added by the
    /// caller once the MP is chosen.
    pub fn pick_mp(&mut self, mps: &[MpState], rng: &mut impl Rng) -> Result<MpId, PolicyError> {
        if mps.is_empty() {
            return Err(PolicyError::EmptyCluster);
        }
        let view = self.kind.load_view();
        let load = |i: usize| view.of(&mps[i]);
        let idx = match self.kind {
            PolicyKind::Rr => {
                let i = self.cursor % mps.len();
                self.cursor = (i + 1) % mps.len();
                i
            }
            PolicyKind::Random => rng.random_range(0..mps.len()),
            PolicyKind::Ll => least_loaded(mps.len(), load),
            PolicyKind::Llr | PolicyKind::Tetris => {
                least_loaded_random(mps.len(), self.llr_k, load, rng)
            }
            PolicyKind::P2 => power_of_two(mps.len(), load, rng),
        };
        Ok(mps[idx].id)
    }
}

/// Index of the minimum load; ties go to the lowest index.
pub fn least_loaded(n: usize, load: impl Fn(usize) -> i64) -> usize {
    (0..n).min_by_key(|&i| (load(i), i)).expect("non-empty")
}

/// Indices of the `k` lowest loads, ties broken by lowest index, ascending by (load, index).
pub fn k_least_loaded(n: usize, k: usize, load: impl Fn(usize) -> i64) -> Vec<usize> {
    let k = k.min(n);
    let mut best: Vec<(i64, usize)> = Vec::with_capacity(k + 1);
    for i in 0..n {
        let key = (load(i), i);
        if best.len() == k {
            if key >= best[k - 1] {
                continue;
            }
            best.pop();
        }
        let pos = best.partition_point(|b| *b < key);
        best.insert(pos, key);
    }
    best.into_iter().map(|b| b.1).collect()
}

pub fn least_loaded_random(
    n: usize,
    k: usize,
    load: impl Fn(usize) -> i64,
    rng: &mut impl Rng,
) -> usize {
    let pool = k_least_loaded(n, k, load);
    pool[rng.random_range(0..pool.len())]
}

/// Two distinct uniform draws; the lower load wins, the first draw on ties.
pub fn power_of_two(n: usize, load: impl Fn(usize) -> i64, rng: &mut impl Rng) -> usize {
    if n == 1 {
        return 0;
    }
    let a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    if load(b) < load(a) {
        b
    } else {
        a
    }
}
