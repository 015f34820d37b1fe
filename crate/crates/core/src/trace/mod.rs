//! Call-trace data model, JSON Lines persistence and the synthetic workload generator.
//!
//! A trace covers `[0, duration_s)`. The prefix `[0, warmup_s)` holds history
//! (prior occurrences of recurring series and a training day of non-recurring
//! calls); the simulator only feeds it to the predictors and reports on
//! `[warmup_s, duration_s)`.

mod gen;
mod io;

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

pub use gen::{
    fit_lognormal, generate_trace, BurstProfile, GenError, LogNormalFit, QuantileTarget,
    BURST_WINDOW_S,
    SeriesJitter, TraceGenConfig,
};
pub use io::{load_trace, read_trace, save_trace, write_trace, TRACE_FORMAT, TRACE_VERSION};

pub const DAY_S: u32 = 86_400;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("malformed trace line {line_no}: {reason}")]
    MalformedLine { line_no: usize, reason: String },
    #[error("call {call_id}: {reason}")]
    InvariantViolation { call_id: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MediaKind {
    Audio,
    Video,
    ScreenShare,
}

impl MediaKind {
    pub const ALL: [MediaKind; 3] = [MediaKind::Audio, MediaKind::Video, MediaKind::ScreenShare];

    pub fn index(self) -> usize {
        match self {
            MediaKind::Audio => 0,
            MediaKind::Video => 1,
            MediaKind::ScreenShare => 2,
        }
    }

    pub fn wire_name(self) -> &'static str {
        match self {
            MediaKind::Audio => "audio",
            MediaKind::Video => "video",
            MediaKind::ScreenShare => "ss",
        }
    }

    pub fn from_wire(s: &str) -> Option<Self> {
        match s {
            "audio" => Some(MediaKind::Audio),
            "video" => Some(MediaKind::Video),
            "ss" => Some(MediaKind::ScreenShare),
            _ => None,
        }
    }
}

impl fmt::Display for MediaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.wire_name())
    }
}

/// One media stream: its kind and bitrate in Mbps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Media {
    pub kind: MediaKind,
    pub mbps: f64,
}

impl Media {
    pub fn new(kind: MediaKind, mbps: f64) -> Self {
        Self { kind, mbps }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Join,
    Leave,
    MediaStart(Media),
    MediaStop(MediaKind),
    MediaQualityChange(Media),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticipantEvent {
    pub time_s: u32,
    /// Index into the owning call's `participants` table.
    pub participant: u32,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallRecord {
    pub call_id: String,
    pub series_id: Option<String>,
    pub start_s: u32,
    pub end_s: u32,
    /// Participant ids, in order of first appearance in `events`.
    pub participants: Vec<String>,
    pub events: Vec<ParticipantEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallTrace {
    pub duration_s: u32,
    pub warmup_s: u32,
    pub seed: u64,
    pub calls: Vec<CallRecord>,
}

impl CallTrace {
    pub fn empty(duration_s: u32, seed: u64) -> Self {
        Self {
            duration_s,
            warmup_s: 0,
            seed,
            calls: Vec::new(),
        }
    }

    /// Calls whose start falls inside the reported window.
    pub fn live_calls(&self) -> impl Iterator<Item = &CallRecord> {
        self.calls.iter().filter(move |c| c.start_s >= self.warmup_s)
    }

    /// Calls that only serve as predictor history.
    pub fn history_calls(&self) -> impl Iterator<Item = &CallRecord> {
        self.calls.iter().filter(move |c| c.start_s < self.warmup_s)
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        if self.warmup_s > self.duration_s {
            return Err(TraceError::InvariantViolation {
                call_id: String::new(),
                reason: format!(
                    "warmup_s {} exceeds duration_s {}",
                    self.warmup_s, self.duration_s
                ),
            });
        }
        let mut seen = HashSet::with_capacity(self.calls.len());
        for call in &self.calls {
            if !seen.insert(call.call_id.as_str()) {
                return Err(TraceError::InvariantViolation {
                    call_id: call.call_id.clone(),
                    reason: "duplicate call_id".into(),
                });
            }
            call.validate(self.duration_s)?;
        }
        Ok(())
    }
}

/// Per-participant replay state used by validation and by the simulator.
#[derive(Debug, Clone, Default)]
pub struct ParticipantMedia {
    pub joined: bool,
    /// Active stream bitrate per media kind.
    pub streams: [Option<f64>; 3],
}

impl ParticipantMedia {
    pub fn send_mbps(&self) -> f64 {
        if !self.joined {
            return 0.0;
        }
        self.streams.iter().flatten().sum()
    }

    /// Applies one action, rejecting transitions the data model forbids.
    pub fn apply(&mut self, action: &Action) -> Result<(), String> {
        match *action {
            Action::Join => {
                if self.joined {
                    return Err("join while already joined".into());
                }
                self.joined = true;
            }
            Action::Leave => {
                if !self.joined {
                    return Err("leave without join".into());
                }
                self.joined = false;
                self.streams = [None; 3];
            }
            Action::MediaStart(m) => {
                check_rate(m.mbps)?;
                if !self.joined {
                    return Err(format!("{} start before join", m.kind));
                }
                let slot = &mut self.streams[m.kind.index()];
                if slot.is_some() {
                    return Err(format!("{} start while already active", m.kind));
                }
                *slot = Some(m.mbps);
            }
            Action::MediaStop(kind) => {
                let slot = &mut self.streams[kind.index()];
                if !self.joined || slot.is_none() {
                    return Err(format!("{kind} stop without an active stream"));
                }
                *slot = None;
            }
            Action::MediaQualityChange(m) => {
                check_rate(m.mbps)?;
                let slot = &mut self.streams[m.kind.index()];
                if !self.joined || slot.is_none() {
                    return Err(format!("{} quality change without an active stream", m.kind));
                }
                *slot = Some(m.mbps);
            }
        }
        Ok(())
    }
}

fn check_rate(mbps: f64) -> Result<(), String> {
    if mbps.is_finite() && mbps > 0.0 {
        Ok(())
    } else {
        Err(format!("bitrate must be positive, got {mbps}"))
    }
}

impl CallRecord {
    pub fn is_recurring(&self) -> bool {
        self.series_id.is_some()
    }

    pub fn validate(&self, duration_s: u32) -> Result<(), TraceError> {
        let fail = |reason: String| TraceError::InvariantViolation {
            call_id: self.call_id.clone(),
            reason,
        };
        if self.start_s > self.end_s {
            return Err(fail(format!(
                "start_s {} after end_s {}",
                self.start_s, self.end_s
            )));
        }
        if self.end_s >= duration_s {
            return Err(fail(format!(
                "end_s {} not below trace duration {duration_s}",
                self.end_s
            )));
        }
        let mut state = vec![ParticipantMedia::default(); self.participants.len()];
        let mut prev_t = self.start_s;
        for ev in &self.events {
            if ev.time_s < prev_t {
                return Err(fail(format!(
                    "event at t={} out of order (previous t={prev_t})",
                    ev.time_s
                )));
            }
            if ev.time_s > self.end_s {
                return Err(fail(format!(
                    "event at t={} after end_s {}",
                    ev.time_s, self.end_s
                )));
            }
            prev_t = ev.time_s;
            let p = state
                .get_mut(ev.participant as usize)
                .ok_or_else(|| fail(format!("unknown participant index {}", ev.participant)))?;
            p.apply(&ev.action).map_err(|reason| {
                fail(format!(
                    "participant {} at t={}: {reason}",
                    self.participants[ev.participant as usize], ev.time_s
                ))
            })?;
        }
        if let Some(i) = state.iter().position(|p| p.joined) {
            return Err(fail(format!(
                "participant {} never leaves",
                self.participants[i]
            )));
        }
        Ok(())
    }

    /// Highest concurrent participant count over the call.
    pub fn max_participants(&self) -> u32 {
        let mut cur: i64 = 0;
        let mut max: i64 = 0;
        for ev in &self.events {
            match ev.action {
                Action::Join => cur += 1,
                Action::Leave => cur -= 1,
                _ => {}
            }
            max = max.max(cur);
        }
        max as u32
    }

    /// Seconds between the first and the last join.
    pub fn joiner_duration_s(&self) -> Option<u32> {
        let mut joins = self
            .events
            .iter()
            .filter(|e| matches!(e.action, Action::Join))
            .map(|e| e.time_s);
        let first = joins.next()?;
        let last = joins.last().unwrap_or(first);
        Some(last - first)
    }
}
