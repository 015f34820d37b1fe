//! Live simulation state: media processors, active calls and the
//! recurring-series history store.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpu_model::{pct_to_ticks, SkuProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MpId(pub u32);

impl MpId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for MpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "mp{}", self.0)
    }
}

/// Dense simulator-side handle of a call (its index in the trace).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CallId(pub u32);

impl CallId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for CallId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "call#{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("invalid cluster config: {0}")]
    InvalidConfig(String),
    #[error("unknown call {0}")]
    UnknownCall(CallId),
    #[error("unknown MP {0}")]
    UnknownMp(MpId),
    #[error("call {0} is not active")]
    CallNotActive(CallId),
    #[error("call {0} is already assigned")]
    AlreadyAssigned(CallId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkuShare {
    pub sku: SkuProfile,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub n_mps: usize,
    /// An MP is hot when its measured CPU reaches this value.
    pub hot_threshold_pct: f64,
    /// Per-MP capacity used by the repacking planner.
    pub cap_pct: f64,
    pub skus: Vec<SkuShare>,
    pub n_virtual_clusters: usize,
    pub llr_k: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            n_mps: 3000,
            hot_threshold_pct: 75.0,
            cap_pct: 75.0,
            skus: vec![SkuShare {
                sku: SkuProfile::reference(),
                share: 1.0,
            }],
            n_virtual_clusters: 4,
            llr_k: 5,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<(), ClusterError> {
        let bad = |m: &str| Err(ClusterError::InvalidConfig(m.into()));
        if self.n_mps == 0 || self.n_mps > u32::MAX as usize {
            return bad("cluster.n_mps must be positive");
        }
        if !(self.hot_threshold_pct > 0.0 && self.hot_threshold_pct <= 100.0) {
            return bad("cluster.hot_threshold_pct must be in (0, 100]");
        }
        if !(self.cap_pct > 0.0 && self.cap_pct.is_finite()) {
            return bad("cluster.cap_pct must be positive");
        }
        if self.n_virtual_clusters == 0 {
            return bad("cluster.n_virtual_clusters must be at least 1");
        }
        if self.llr_k == 0 {
            return bad("cluster.llr_k must be at least 1");
        }
        if self.skus.is_empty()
            || self
                .skus
                .iter()
                .any(|s| !(s.share >= 0.0) || !(s.sku.perf_ratio > 0.0 && s.sku.perf_ratio.is_finite()))
            || self.skus.iter().map(|s| s.share).sum::<f64>() <= 0.0
        {
            return bad("cluster.skus needs positive perf_ratio values and non-negative shares");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpState {
    pub id: MpId,
    pub sku: SkuProfile,
    pub cap_ticks: i64,
    pub virtual_cluster: u32,
    pub hosted: BTreeSet<CallId>,
    /// Measured CPU: sum of hosted calls' current CPU on this SKU.
    pub current_ticks: i64,
    /// Sum of hosted calls' estimated peak CPU on this SKU.
    pub expected_ticks: i64,
    pub participants: u32,
}

impl MpState {
    pub fn perf_ratio(&self) -> f64 {
        self.sku.perf_ratio
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallState {
    pub id: CallId,
    pub start_s: u32,
    pub participants: u32,
    pub send_mbps: f64,
    /// Current CPU on the reference SKU.
    pub ref_cpu_pct: f64,
    /// Estimated peak CPU on the reference SKU.
    pub est_peak_pct: f64,
    pub is_recurring_predicted: bool,
    pub assigned_mp: MpId,
    pub last_migration_round: Option<u64>,
    current_ticks: i64,
    expected_ticks: i64,
}

impl CallState {
    pub fn new(id: CallId, start_s: u32) -> Self {
        Self {
            id,
            start_s,
            participants: 0,
            send_mbps: 0.0,
            ref_cpu_pct: 0.0,
            est_peak_pct: 0.0,
            is_recurring_predicted: false,
            assigned_mp: MpId(0),
            last_migration_round: None,
            current_ticks: 0,
            expected_ticks: 0,
        }
    }

    pub fn age_s(&self, now: u32) -> u32 {
        now.saturating_sub(self.start_s)
    }

    /// Current CPU contributed to the hosting MP.
    pub fn current_ticks(&self) -> i64 {
        self.current_ticks
    }

    /// Estimated peak CPU contributed to the hosting MP.
    pub fn expected_ticks(&self) -> i64 {
        self.expected_ticks
    }
}

pub struct Cluster {
    cfg: ClusterConfig,
    mps: Vec<MpState>,
    calls: Vec<Option<CallState>>,
    active: usize,
}

impl Cluster {
    pub fn new(cfg: ClusterConfig, seed: u64) -> Result<Self, ClusterError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = cfg.n_mps;

        // Largest-remainder split of the SKU mix, then a seeded shuffle.
        let total: f64 = cfg.skus.iter().map(|s| s.share).sum();
        let exact: Vec<f64> = cfg.skus.iter().map(|s| s.share / total * n as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let mut missing = n - counts.iter().sum::<usize>();
        for &i in order.iter().cycle() {
            if missing == 0 {
                break;
            }
            counts[i] += 1;
            missing -= 1;
        }
        let mut sku_of: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(i, &c)| std::iter::repeat_n(i, c))
            .collect();
        sku_of.shuffle(&mut rng);

        let cap_ticks = pct_to_ticks(cfg.cap_pct);
        let mps = (0..n)
            .map(|i| MpState {
                id: MpId(i as u32),
                sku: cfg.skus[sku_of[i]].sku.clone(),
                cap_ticks,
                virtual_cluster: rng.random_range(0..cfg.n_virtual_clusters) as u32,
                hosted: BTreeSet::new(),
                current_ticks: 0,
                expected_ticks: 0,
                participants: 0,
            })
            .collect();
        Ok(Self {
            cfg,
            mps,
            calls: Vec::new(),
            active: 0,
        })
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.cfg
    }

    pub fn mps(&self) -> &[MpState] {
        &self.mps
    }

    pub fn mp(&self, id: MpId) -> Result<&MpState, ClusterError> {
        self.mps.get(id.idx()).ok_or(ClusterError::UnknownMp(id))
    }

    pub fn active_calls(&self) -> usize {
        self.active
    }

    pub fn calls(&self) -> impl Iterator<Item = &CallState> {
        self.calls.iter().flatten()
    }

    pub fn call(&self, id: CallId) -> Result<&CallState, ClusterError> {
        match self.calls.get(id.idx()) {
            None => Err(ClusterError::UnknownCall(id)),
            Some(None) => Err(ClusterError::CallNotActive(id)),
            Some(Some(c)) => Ok(c),
        }
    }

    pub fn is_active(&self, id: CallId) -> bool {
        matches!(self.calls.get(id.idx()), Some(Some(_)))
    }

    fn call_mut(&mut self, id: CallId) -> Result<&mut CallState, ClusterError> {
        match self.calls.get_mut(id.idx()) {
            None => Err(ClusterError::UnknownCall(id)),
            Some(None) => Err(ClusterError::CallNotActive(id)),
            Some(Some(c)) => Ok(c),
        }
    }

    /// Places a new call on `mp`.
    pub fn assign_call(&mut self, mut call: CallState, mp: MpId) -> Result<(), ClusterError> {
        let ratio = self.mp(mp)?.perf_ratio();
        let slot = call.id.idx();
        if self.calls.len() <= slot {
            self.calls.resize(slot + 1, None);
        }
        if self.calls[slot].is_some() {
            return Err(ClusterError::AlreadyAssigned(call.id));
        }
        call.assigned_mp = mp;
        call.current_ticks = pct_to_ticks(call.ref_cpu_pct * ratio);
        call.expected_ticks = pct_to_ticks(call.est_peak_pct * ratio);
        let m = &mut self.mps[mp.idx()];
        m.hosted.insert(call.id);
        m.current_ticks += call.current_ticks;
        m.expected_ticks += call.expected_ticks;
        m.participants += call.participants;
        self.calls[slot] = Some(call);
        self.active += 1;
        Ok(())
    }

    pub fn remove_call(&mut self, id: CallId) -> Result<CallState, ClusterError> {
        self.call(id)?;
        let call = self.calls[id.idx()].take().expect("checked active");
        let m = &mut self.mps[call.assigned_mp.idx()];
        m.hosted.remove(&id);
        m.current_ticks -= call.current_ticks;
        m.expected_ticks -= call.expected_ticks;
        m.participants -= call.participants;
        self.active -= 1;
        Ok(call)
    }

    pub fn move_call(&mut self, id: CallId, to: MpId, round: u64) -> Result<(), ClusterError> {
        let ratio = self.mp(to)?.perf_ratio();
        let call = self.call_mut(id)?;
        let from = call.assigned_mp;
        let (old_cur, old_exp, parts) = (call.current_ticks, call.expected_ticks, call.participants);
        call.current_ticks = pct_to_ticks(call.ref_cpu_pct * ratio);
        call.expected_ticks = pct_to_ticks(call.est_peak_pct * ratio);
        call.assigned_mp = to;
        call.last_migration_round = Some(round);
        let (new_cur, new_exp) = (call.current_ticks, call.expected_ticks);
        let src = &mut self.mps[from.idx()];
        src.hosted.remove(&id);
        src.current_ticks -= old_cur;
        src.expected_ticks -= old_exp;
        src.participants -= parts;
        let dst = &mut self.mps[to.idx()];
        dst.hosted.insert(id);
        dst.current_ticks += new_cur;
        dst.expected_ticks += new_exp;
        dst.participants += parts;
        Ok(())
    }

    /// Records a call's new participant/media state and its reference CPU.
    pub fn update_load(
        &mut self,
        id: CallId,
        participants: u32,
        send_mbps: f64,
        ref_cpu_pct: f64,
    ) -> Result<(), ClusterError> {
        let call = self.call_mut(id)?;
        let mp = call.assigned_mp;
        let ratio = self.mps[mp.idx()].perf_ratio();
        let call = self.calls[id.idx()].as_mut().expect("checked active");
        let old_parts = call.participants;
        let old = call.current_ticks;
        call.participants = participants;
        call.send_mbps = send_mbps;
        call.ref_cpu_pct = ref_cpu_pct;
        call.current_ticks = pct_to_ticks(ref_cpu_pct * ratio);
        let new = call.current_ticks;
        let m = &mut self.mps[mp.idx()];
        m.current_ticks += new - old;
        m.participants = m.participants + participants - old_parts;
        Ok(())
    }

    /// Replaces a call's estimated peak CPU (reference SKU).
    pub fn set_estimate(
        &mut self,
        id: CallId,
        est_peak_pct: f64,
        recurring: bool,
    ) -> Result<(), ClusterError> {
        let mp = self.call(id)?.assigned_mp;
        let ratio = self.mps[mp.idx()].perf_ratio();
        let call = self.calls[id.idx()].as_mut().expect("checked active");
        let old = call.expected_ticks;
        call.est_peak_pct = est_peak_pct;
        call.is_recurring_predicted = recurring;
        call.expected_ticks = pct_to_ticks(est_peak_pct * ratio);
        let new = call.expected_ticks;
        self.mps[mp.idx()].expected_ticks += new - old;
        Ok(())
    }

    /// Recomputes every per-MP aggregate from the call table and reports the
    /// first mismatch.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut cur = vec![0i64; self.mps.len()];
        let mut exp = vec![0i64; self.mps.len()];
        let mut parts = vec![0u32; self.mps.len()];
        let mut hosted: Vec<BTreeSet<CallId>> = vec![BTreeSet::new(); self.mps.len()];
        let mut active = 0;
        for c in self.calls() {
            let m = c.assigned_mp.idx();
            let ratio = self.mps[m].perf_ratio();
            if c.current_ticks != pct_to_ticks(c.ref_cpu_pct * ratio)
                || c.expected_ticks != pct_to_ticks(c.est_peak_pct * ratio)
            {
                return Err(format!("{} cached ticks out of date", c.id));
            }
            cur[m] += c.current_ticks;
            exp[m] += c.expected_ticks;
            parts[m] += c.participants;
            hosted[m].insert(c.id);
            active += 1;
        }
        if active != self.active {
            return Err(format!("active count {} != {}", self.active, active));
        }
        for (i, mp) in self.mps.iter().enumerate() {
            if mp.current_ticks != cur[i]
                || mp.expected_ticks != exp[i]
                || mp.participants != parts[i]
                || mp.hosted != hosted[i]
            {
                return Err(format!("{} aggregates drifted", mp.id));
            }
        }
        Ok(())
    }
}

/// Peak concurrent stream counts per media kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediaProfile {
    pub audio: f64,
    pub screen_share: f64,
    pub video: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccurrenceSummary {
    pub media: MediaProfile,
    pub peak_participants: u32,
}

/// Storage for per-series occurrence history. The in-memory store is the only
/// backend the simulator ships; a networked cache can implement this trait.
pub trait SeriesBackend {
    fn record(&mut self, series_id: &str, occurrence: OccurrenceSummary);
    /// Oldest-to-newest copy of the retained history.
    fn history(&self, series_id: &str) -> Vec<OccurrenceSummary>;
    fn history_len(&self, series_id: &str) -> usize;
}

pub const SERIES_RETENTION: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesStore {
    retention: usize,
    series: BTreeMap<String, VecDeque<OccurrenceSummary>>,
}

impl Default for SeriesStore {
    fn default() -> Self {
        Self::with_retention(SERIES_RETENTION)
    }
}

impl SeriesStore {
    pub fn with_retention(retention: usize) -> Self {
        Self {
            retention: retention.max(1),
            series: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn to_json(&self) -> String {
        let view: BTreeMap<&str, Vec<&OccurrenceSummary>> = self
            .series
            .iter()
            .map(|(k, v)| (k.as_str(), v.iter().collect()))
            .collect();
        serde_json::to_string_pretty(&view).expect("series snapshot serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let raw: BTreeMap<String, Vec<OccurrenceSummary>> = serde_json::from_str(text)?;
        let mut store = Self::default();
        for (k, v) in raw {
            for occ in v {
                store.record(&k, occ);
            }
        }
        Ok(store)
    }

    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load_snapshot(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(std::io::Error::other)
    }
}

impl SeriesBackend for SeriesStore {
    fn record(&mut self, series_id: &str, occurrence: OccurrenceSummary) {
        let hist = self.series.entry(series_id.to_string()).or_default();
        hist.push_back(occurrence);
        while hist.len() > self.retention {
            hist.pop_front();
        }
    }

    fn history(&self, series_id: &str) -> Vec<OccurrenceSummary> {
        self.series
            .get(series_id)
            .map(|h| h.iter().copied().collect())
            .unwrap_or_default()
    }

    fn history_len(&self, series_id: &str) -> usize {
        self.series.get(series_id).map_or(0, |h| h.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small(n_mps: usize, n_vc: usize) -> ClusterConfig {
        ClusterConfig {
            n_mps,
            n_virtual_clusters: n_vc,
            ..ClusterConfig::default()
        }
    }

    fn call(id: u32, cpu: f64, est: f64, parts: u32) -> CallState {
        let mut c = CallState::new(CallId(id), 0);
        c.ref_cpu_pct = cpu;
        c.est_peak_pct = est;
        c.participants = parts;
        c
    }

    #[test]
    fn virtual_cluster_indices_in_range() {
        let c = Cluster::new(small(4, 4), 11).unwrap();
        assert!(c.mps().iter().all(|m| m.virtual_cluster < 4));
    }

    #[test]
    fn virtual_cluster_sizes_concentrate() {
        let c = Cluster::new(small(3000, 4), 5).unwrap();
        let mut sizes = [0usize; 4];
        for m in c.mps() {
            sizes[m.virtual_cluster as usize] += 1;
        }
        // Binomial(3000, 1/4): mean 750, sd ~23.7.
        let sd = (3000.0f64 * 0.25 * 0.75).sqrt();
        for s in sizes {
            assert!((s as f64 - 750.0).abs() <= 3.0 * sd, "{sizes:?}");
        }
    }

    #[test]
    fn same_seed_same_layout() {
        let a = Cluster::new(small(100, 4), 3).unwrap();
        let b = Cluster::new(small(100, 4), 3).unwrap();
        assert_eq!(a.mps(), b.mps());
    }

    #[test]
    fn sku_mix_follows_shares() {
        let cfg = ClusterConfig {
            n_mps: 10,
            skus: vec![
                SkuShare { sku: SkuProfile::reference(), share: 0.7 },
                SkuShare { sku: SkuProfile { sku_id: "old".into(), perf_ratio: 1.3 }, share: 0.3 },
            ],
            ..ClusterConfig::default()
        };
        let c = Cluster::new(cfg, 1).unwrap();
        assert_eq!(c.mps().iter().filter(|m| m.sku.sku_id == "old").count(), 3);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(Cluster::new(small(0, 4), 0).is_err());
        assert!(Cluster::new(small(10, 0), 0).is_err());
        let hot = ClusterConfig { hot_threshold_pct: 0.0, ..ClusterConfig::default() };
        assert!(hot.validate().is_err());
    }

    #[test]
    fn assign_then_remove_restores_mp() {
        let mut c = Cluster::new(small(3, 1), 0).unwrap();
        let before = c.mp(MpId(1)).unwrap().clone();
        c.assign_call(call(0, 12.5, 20.0, 4), MpId(1)).unwrap();
        assert_eq!(c.mp(MpId(1)).unwrap().participants, 4);
        c.remove_call(CallId(0)).unwrap();
        assert_eq!(c.mp(MpId(1)).unwrap(), &before);
        assert_eq!(c.remove_call(CallId(0)), Err(ClusterError::CallNotActive(CallId(0))));
        assert_eq!(c.remove_call(CallId(9)), Err(ClusterError::UnknownCall(CallId(9))));
    }

    #[test]
    fn move_updates_both_sides() {
        let mut c = Cluster::new(small(3, 1), 0).unwrap();
        c.assign_call(call(0, 10.0, 15.0, 3), MpId(0)).unwrap();
        c.move_call(CallId(0), MpId(2), 7).unwrap();
        assert!(!c.mp(MpId(0)).unwrap().hosted.contains(&CallId(0)));
        assert!(c.mp(MpId(2)).unwrap().hosted.contains(&CallId(0)));
        assert_eq!(c.call(CallId(0)).unwrap().last_migration_round, Some(7));
        assert_eq!(c.mp(MpId(0)).unwrap().current_ticks, 0);
        assert_eq!(c.mp(MpId(2)).unwrap().expected_ticks, pct_to_ticks(15.0));
        assert_eq!(c.move_call(CallId(0), MpId(5), 8), Err(ClusterError::UnknownMp(MpId(5))));
        c.check_invariants().unwrap();
    }

    #[test]
    fn sku_ratio_applies_to_hosted_load() {
        let cfg = ClusterConfig {
            n_mps: 2,
            skus: vec![SkuShare { sku: SkuProfile { sku_id: "slow".into(), perf_ratio: 2.0 }, share: 1.0 }],
            ..ClusterConfig::default()
        };
        let mut c = Cluster::new(cfg, 0).unwrap();
        c.assign_call(call(0, 10.0, 12.0, 2), MpId(0)).unwrap();
        assert_eq!(c.mp(MpId(0)).unwrap().current_ticks, pct_to_ticks(20.0));
        assert_eq!(c.mp(MpId(0)).unwrap().expected_ticks, pct_to_ticks(24.0));
    }

    #[derive(Debug, Clone)]
    enum Op {
        Assign(u32, u32, f64, f64, u32),
        Remove(u32),
        Move(u32, u32),
        Load(u32, u32, f64),
        Estimate(u32, f64),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0u32..20, 0u32..5, 0.0f64..40.0, 0.0f64..60.0, 0u32..30)
                .prop_map(|(c, m, cpu, est, p)| Op::Assign(c, m, cpu, est, p)),
            (0u32..20).prop_map(Op::Remove),
            (0u32..20, 0u32..5).prop_map(|(c, m)| Op::Move(c, m)),
            (0u32..20, 0u32..30, 0.0f64..50.0).prop_map(|(c, p, cpu)| Op::Load(c, p, cpu)),
            (0u32..20, 0.0f64..80.0).prop_map(|(c, e)| Op::Estimate(c, e)),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn aggregates_match_recomputation(ops in prop::collection::vec(op(), 1..60)) {
            let cfg = ClusterConfig {
                n_mps: 5,
                n_virtual_clusters: 2,
                skus: vec![
                    SkuShare { sku: SkuProfile::reference(), share: 0.6 },
                    SkuShare { sku: SkuProfile { sku_id: "b".into(), perf_ratio: 1.37 }, share: 0.4 },
                ],
                ..ClusterConfig::default()
            };
            let mut c = Cluster::new(cfg, 9).unwrap();
            for (round, op) in ops.into_iter().enumerate() {
                let _ = match op {
                    Op::Assign(id, m, cpu, est, p) => c.assign_call(call(id, cpu, est, p), MpId(m)),
                    Op::Remove(id) => c.remove_call(CallId(id)).map(|_| ()),
                    Op::Move(id, m) => c.move_call(CallId(id), MpId(m), round as u64),
                    Op::Load(id, p, cpu) => c.update_load(CallId(id), p, 1.0, cpu),
                    Op::Estimate(id, e) => c.set_estimate(CallId(id), e, false),
                };
                prop_assert_eq!(c.check_invariants(), Ok(()));
                let hosted: usize = c.mps().iter().map(|m| m.hosted.len()).sum();
                prop_assert_eq!(hosted, c.active_calls());
            }
        }
    }

    fn occ(p: u32) -> OccurrenceSummary {
        OccurrenceSummary {
            peak_participants: p,
            media: MediaProfile { audio: p as f64, video: 1.0, screen_share: 0.0 },
        }
    }

    #[test]
    fn series_retention_keeps_last_ten() {
        let mut s = SeriesStore::default();
        for p in 0..12 {
            s.record("weekly", occ(p));
        }
        let h = s.history("weekly");
        assert_eq!(h.len(), 10);
        assert_eq!(h[0].peak_participants, 2);
        assert_eq!(h[9].peak_participants, 11);
        assert!(s.history("nope").is_empty());
    }

    #[test]
    fn series_snapshot_round_trip() {
        let mut s = SeriesStore::default();
        s.record("b", occ(3));
        s.record("a", occ(5));
        s.record("a", occ(6));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.json");
        s.save_snapshot(&path).unwrap();
        let back = SeriesStore::load_snapshot(&path).unwrap();
        assert_eq!(back, s);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.find("\"a\"").unwrap() < text.find("\"b\"").unwrap());
    }
}
