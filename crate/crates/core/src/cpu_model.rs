//! Traffic and CPU model for calls hosted on a media processor (MP).
//!
//! Every stream a participant sends is received once and forwarded to the
//! other `N - 1` participants, so a call's traffic is `S * N` where `S` is the
//! summed send rate. CPU is linear in that traffic and scaled by the SKU ratio.
//! Values above 100% are kept as-is.

use serde::{Deserialize, Serialize};

use crate::trace::{MediaKind, ParticipantMedia};

/// CPU ticks per percentage point. Cluster bookkeeping sums integer ticks so
/// per-MP totals never drift from a recomputation.
pub const TICKS_PER_PCT: f64 = 1_000_000.0;

pub fn pct_to_ticks(pct: f64) -> i64 {
    (pct * TICKS_PER_PCT).round() as i64
}

pub fn ticks_to_pct(ticks: i64) -> f64 {
    ticks as f64 / TICKS_PER_PCT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkuProfile {
    pub sku_id: String,
    /// CPU multiplier relative to the reference SKU.
    pub perf_ratio: f64,
}

impl SkuProfile {
    pub fn reference() -> Self {
        Self {
            sku_id: "ref".into(),
            perf_ratio: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpuModelParams {
    /// Fixed cost of hosting a call with at least one participant (% of one MP).
    pub base_pct_per_call: f64,
    /// Utilization per Mbps of handled (received + sent) traffic.
    pub pct_per_mbps: f64,
}

impl Default for CpuModelParams {
    fn default() -> Self {
        // A 15-participant all-video call at 1 Mbps handles 225 Mbps and lands at ~35%.
        Self {
            base_pct_per_call: 0.05,
            pct_per_mbps: 0.155,
        }
    }
}

impl CpuModelParams {
    pub fn validate(&self) -> Result<(), String> {
        for (key, v) in [
            ("cpu.base_pct_per_call", self.base_pct_per_call),
            ("cpu.pct_per_mbps", self.pct_per_mbps),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{key} must be a non-negative number"));
            }
        }
        Ok(())
    }

    /// CPU on the reference SKU for `participants` sending `send_mbps` in total.
    pub fn cpu_for(&self, participants: f64, send_mbps: f64) -> f64 {
        if participants <= 0.0 {
            return 0.0;
        }
        let (inbound, outbound) = traffic(participants, send_mbps);
        self.base_pct_per_call + self.pct_per_mbps * (inbound + outbound)
    }
}

/// `(in, out)` Mbps for a call of `participants` whose streams sum to `send_mbps`.
pub fn traffic(participants: f64, send_mbps: f64) -> (f64, f64) {
    let receivers = (participants - 1.0).max(0.0);
    (send_mbps, send_mbps * receivers)
}

/// Instantaneous media state of one call.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CallMedia {
    /// Active stream bitrates of each joined participant.
    pub participants: Vec<Vec<(MediaKind, f64)>>,
}

impl CallMedia {
    pub fn participant_count(&self) -> usize {
        self.participants.len()
    }

    pub fn send_mbps(&self) -> f64 {
        self.participants.iter().flatten().map(|s| s.1).sum()
    }

    pub fn from_live(state: &[ParticipantMedia]) -> Self {
        let participants = state
            .iter()
            .filter(|p| p.joined)
            .map(|p| {
                MediaKind::ALL
                    .iter()
                    .filter_map(|k| p.streams[k.index()].map(|r| (*k, r)))
                    .collect()
            })
            .collect();
        Self { participants }
    }
}

pub fn call_traffic_mbps(call: &CallMedia) -> (f64, f64) {
    traffic(call.participant_count() as f64, call.send_mbps())
}

pub fn call_cpu_pct(call: &CallMedia, params: &CpuModelParams, sku: &SkuProfile) -> f64 {
    params.cpu_for(call.participant_count() as f64, call.send_mbps()) * sku.perf_ratio
}

pub fn mp_cpu_pct<'a>(
    calls: impl IntoIterator<Item = &'a CallMedia>,
    params: &CpuModelParams,
    sku: &SkuProfile,
) -> f64 {
    calls
        .into_iter()
        .map(|c| call_cpu_pct(c, params, sku))
        .sum()
}
