//! Peak estimators: a weighted moving average over a recurring series'
//! history, and a lookup table of expected peak participants for one-off calls
//! indexed by current participants and call age.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{MediaProfile, OccurrenceSummary};
use crate::cpu_model::CpuModelParams;
use crate::trace::{Action, CallRecord, MediaKind, ParticipantMedia};

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("malformed table row {line_no}: {reason}")]
    MalformedRow { line_no: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Minimum number of past occurrences before a series is predicted from history.
pub const MIN_HISTORY: usize = 4;

/// Weights of the newest, second-newest and third-newest occurrence; the mean
/// of every older occurrence gets the remaining 0.125.
pub const WMA_WEIGHTS: [f64; 4] = [0.5, 0.25, 0.125, 0.125];

/// Bitrates used to turn predicted stream counts into traffic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NominalRates {
    pub audio_mbps: f64,
    pub video_mbps: f64,
    pub screen_share_mbps: f64,
}

impl Default for NominalRates {
    fn default() -> Self {
        Self {
            audio_mbps: 0.05,
            video_mbps: 1.0,
            screen_share_mbps: 1.5,
        }
    }
}

impl NominalRates {
    pub fn send_mbps(&self, media: &MediaProfile) -> f64 {
        media.audio * self.audio_mbps
            + media.video * self.video_mbps
            + media.screen_share * self.screen_share_mbps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurringEstimate {
    pub peak_participants: f64,
    pub media: MediaProfile,
    /// Reference-SKU CPU.
    pub peak_cpu_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecurringPrediction {
    Estimate(RecurringEstimate),
    NotEnoughHistory,
}

/// Weighted average of `values` ordered oldest to newest. Needs at least four values.
pub fn wma(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < MIN_HISTORY {
        return None;
    }
    let p = |i: usize| values[n - 1 - i];
    let older = &values[..n - 3];
    let tail = older.iter().sum::<f64>() / older.len() as f64;
    Some(WMA_WEIGHTS[0] * p(0) + WMA_WEIGHTS[1] * p(1) + WMA_WEIGHTS[2] * p(2) + WMA_WEIGHTS[3] * tail)
}

/// Predicts the next occurrence of a series from its history (oldest first).
pub fn predict_recurring(
    history: &[OccurrenceSummary],
    params: &CpuModelParams,
    rates: &NominalRates,
) -> RecurringPrediction {
    let col = |f: fn(&OccurrenceSummary) -> f64| {
        wma(&history.iter().map(f).collect::<Vec<_>>())
    };
    let Some(peak_participants) = col(|o| o.peak_participants as f64) else {
        return RecurringPrediction::NotEnoughHistory;
    };
    let media = MediaProfile {
        audio: col(|o| o.media.audio).unwrap_or_default(),
        video: col(|o| o.media.video).unwrap_or_default(),
        screen_share: col(|o| o.media.screen_share).unwrap_or_default(),
    };
    let peak_cpu_pct = params.cpu_for(peak_participants, rates.send_mbps(&media));
    RecurringPrediction::Estimate(RecurringEstimate {
        peak_participants,
        media,
        peak_cpu_pct,
    })
}

/// Per-occurrence summary stored in the series history.
pub fn summarize_occurrence(call: &CallRecord) -> OccurrenceSummary {
    let mut state = vec![ParticipantMedia::default(); call.participants.len()];
    let mut joined = 0u32;
    let mut peak = 0u32;
    let mut streams = [0u32; 3];
    let mut peaks = [0u32; 3];
    for ev in &call.events {
        let p = &mut state[ev.participant as usize];
        let before = p.streams.map(|s| s.is_some());
        if p.apply(&ev.action).is_err() {
            continue;
        }
        match ev.action {
            Action::Join => joined += 1,
            Action::Leave => joined -= 1,
            _ => {}
        }
        for k in MediaKind::ALL {
            let i = k.index();
            let after = p.streams[i].is_some();
            if after && !before[i] {
                streams[i] += 1;
            } else if !after && before[i] {
                streams[i] -= 1;
            }
            peaks[i] = peaks[i].max(streams[i]);
        }
        peak = peak.max(joined);
    }
    OccurrenceSummary {
        peak_participants: peak,
        media: MediaProfile {
            audio: peaks[0] as f64,
            video: peaks[1] as f64,
            screen_share: peaks[2] as f64,
        },
    }
}

/// Participant trajectory of one completed call.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Maximum concurrent participants in each whole minute since the call start.
    pub per_minute: Vec<u32>,
    /// Highest total send rate observed.
    pub peak_send_mbps: f64,
}

impl Trajectory {
    pub fn new(per_minute: Vec<u32>) -> Self {
        Self {
            per_minute,
            peak_send_mbps: 0.0,
        }
    }

    pub fn max_participants(&self) -> u32 {
        self.per_minute.iter().copied().max().unwrap_or(0)
    }

    pub fn from_call(call: &CallRecord) -> Self {
        let minutes = ((call.end_s - call.start_s) / 60 + 1) as usize;
        let mut per_minute = vec![0u32; minutes];
        let mut state = vec![ParticipantMedia::default(); call.participants.len()];
        let mut joined = 0u32;
        let mut send = 0.0f64;
        let mut peak_send = 0.0f64;
        let mut minute = 0usize;
        for ev in &call.events {
            let m = ((ev.time_s - call.start_s) / 60) as usize;
            while minute < m {
                minute += 1;
                per_minute[minute] = joined;
            }
            let p = &mut state[ev.participant as usize];
            let old = p.send_mbps();
            if p.apply(&ev.action).is_err() {
                continue;
            }
            send += p.send_mbps() - old;
            match ev.action {
                Action::Join => joined += 1,
                Action::Leave => joined -= 1,
                _ => {}
            }
            per_minute[m] = per_minute[m].max(joined);
            peak_send = peak_send.max(send);
        }
        Self {
            per_minute,
            peak_send_mbps: peak_send,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CallTrajectoryDataset {
    pub calls: Vec<Trajectory>,
}

impl CallTrajectoryDataset {
    pub fn from_calls<'a>(calls: impl IntoIterator<Item = &'a CallRecord>) -> Self {
        Self {
            calls: calls.into_iter().map(Trajectory::from_call).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }

    /// Mean per-participant send rate at peak: total peak send rate over total
    /// peak participants.
    pub fn avg_media_rate(&self) -> Option<f64> {
        let parts: u64 = self.calls.iter().map(|c| c.max_participants() as u64).sum();
        if parts == 0 {
            return None;
        }
        let send: f64 = self.calls.iter().map(|c| c.peak_send_mbps).sum();
        Some(send / parts as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmaxConfig {
    pub t_max_min: u32,
    pub n_max_cap: u32,
}

impl Default for NmaxConfig {
    fn default() -> Self {
        Self {
            t_max_min: 120,
            n_max_cap: 500,
        }
    }
}

/// Expected peak participants `N_max(n, t)` for `n` in `1..=n_max_cap` and
/// minute `t` in `0..t_max_min`.
#[derive(Debug, Clone, PartialEq)]
pub struct NmaxTable {
    cfg: NmaxConfig,
    /// Row-major by minute: `values[t * n_max_cap + (n - 1)]`.
    values: Vec<f64>,
}

impl NmaxTable {
    /// Table where every entry equals its `n`.
    pub fn identity(cfg: NmaxConfig) -> Self {
        let cap = cfg.n_max_cap as usize;
        let values = (0..cfg.t_max_min as usize * cap)
            .map(|i| (i % cap + 1) as f64)
            .collect();
        Self { cfg, values }
    }

    pub fn config(&self) -> &NmaxConfig {
        &self.cfg
    }

    /// `N_max` for `n` current participants at minute `t`; `t` is clamped to
    /// the last column and `n` beyond the cap returns `n`.
    pub fn lookup(&self, n: u32, t: u32) -> f64 {
        if n == 0 {
            return 0.0;
        }
        if n > self.cfg.n_max_cap || self.cfg.t_max_min == 0 {
            return n as f64;
        }
        let t = t.min(self.cfg.t_max_min - 1) as usize;
        self.values[t * self.cfg.n_max_cap as usize + (n - 1) as usize]
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "n,t,value")?;
        let cap = self.cfg.n_max_cap;
        for t in 0..self.cfg.t_max_min {
            for n in 1..=cap {
                writeln!(out, "{n},{t},{}", self.lookup(n, t))?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R, cfg: NmaxConfig) -> Result<Self, PredictorError> {
        let mut table = Self::identity(cfg);
        let cap = table.cfg.n_max_cap as usize;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = i + 1;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let bad = |reason: &str| PredictorError::MalformedRow {
                line_no,
                reason: reason.to_string(),
            };
            let mut cols = line.split(',');
            let mut next = || cols.next().ok_or_else(|| bad("expected n,t,value"));
            let n: u32 = next()?.trim().parse().map_err(|_| bad("bad n"))?;
            let t: u32 = next()?.trim().parse().map_err(|_| bad("bad t"))?;
            let v: f64 = next()?.trim().parse().map_err(|_| bad("bad value"))?;
            if n == 0 || n as usize > cap || t >= table.cfg.t_max_min {
                return Err(bad("entry outside the table"));
            }
            table.values[t as usize * cap + (n - 1) as usize] = v;
        }
        Ok(table)
    }
}

/// Builds the table with integer weight sums so every entry equals the direct
/// evaluation of the weighted average exactly.
///
/// For fixed `t`, a call `x` contributes to `w_m(n)` for `m` in `n..=c(x)`
/// once `n ≥ p_t(x)`, so sweeping `n` upward it enters at `p_t(x)` and leaves at
/// `c(x) + 1`. With `K` contributing calls, `W = Σ c(x) - K(n-1)` and
/// `WM = Σ c(x)(c(x)+1)/2 - K(n-1)n/2`.
pub fn build_nmax_table(
    data: &CallTrajectoryDataset,
    cfg: NmaxConfig,
) -> Result<NmaxTable, PredictorError> {
    if data.is_empty() {
        return Err(PredictorError::EmptyDataset);
    }
    let cap = cfg.n_max_cap as usize;
    let mut values = vec![0.0f64; cfg.t_max_min as usize * cap];
    let maxc: Vec<u64> = data.calls.iter().map(|c| c.max_participants() as u64).collect();
    // enter[n] / leave[n] hold (count, Σc, Σc(c+1)/2) deltas applied at n.
    let mut delta = vec![(0i64, 0i128, 0i128); cap + 2];
    for t in 0..cfg.t_max_min as usize {
        delta.iter_mut().for_each(|d| *d = (0, 0, 0));
        for (x, traj) in data.calls.iter().enumerate() {
            let Some(&p) = traj.per_minute.get(t) else { continue };
            let c = maxc[x];
            let enter = (p as u64).max(1);
            if enter > c || enter as usize > cap {
                continue;
            }
            let tri = (c * (c + 1) / 2) as i128;
            let d = &mut delta[enter as usize];
            d.0 += 1;
            d.1 += c as i128;
            d.2 += tri;
            if ((c + 1) as usize) <= cap {
                let d = &mut delta[(c + 1) as usize];
                d.0 -= 1;
                d.1 -= c as i128;
                d.2 -= tri;
            }
        }
        let (mut k, mut sc, mut st) = (0i64, 0i128, 0i128);
        for n in 1..=cap {
            k += delta[n].0;
            sc += delta[n].1;
            st += delta[n].2;
            let nm1 = (n - 1) as i128;
            let w = sc - k as i128 * nm1;
            let wm = st - k as i128 * nm1 * n as i128 / 2;
            values[t * cap + n - 1] = if w == 0 { n as f64 } else { wm as f64 / w as f64 };
        }
    }
    Ok(NmaxTable { cfg, values })
}

/// Reference-SKU peak CPU of a one-off call with `n` participants at minute
/// `age_min`, assuming every expected participant sends `avg_media_rate`.
pub fn estimate_nonrecurring_peak_cpu(
    n: u32,
    age_min: u32,
    table: &NmaxTable,
    avg_media_rate: f64,
    params: &CpuModelParams,
) -> f64 {
    let peak = table.lookup(n, age_min);
    params.cpu_for(peak, avg_media_rate * peak)
}
