//! Report files: per-minute snapshots, aggregates, solver timings, the
//! comparison table and an optional per-move plan log.

use std::io::{self, Write};

use serde::Serialize;

use super::compare::Comparison;
use super::metrics::{Aggregates, MetricsSnapshot, SolveTiming};
use super::{PlanObserver, RoundView};

pub const SNAPSHOT_HEADER: &str = "minute,max_cpu,p95_cpu,p50_cpu,min_cpu,avg_cpu,hot_mps,hot_calls,hot_participants,active_calls,active_participants,cumulative_migrations";

pub fn write_snapshots_csv<W: Write>(snaps: &[MetricsSnapshot], out: &mut W) -> io::Result<()> {
    writeln!(out, "{SNAPSHOT_HEADER}")?;
    for s in snaps {
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{},{}",
            s.minute,
            s.max_cpu,
            s.p95_cpu,
            s.p50_cpu,
            s.min_cpu,
            s.avg_cpu,
            s.hot_mps,
            s.hot_calls,
            s.hot_participants,
            s.active_calls,
            s.active_participants,
            s.cumulative_migrations
        )?;
    }
    Ok(())
}

/// Pretty JSON with a trailing newline; map keys are ordered so output is stable.
pub fn write_aggregates_json<W: Write>(agg: &Aggregates, out: &mut W) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *out, agg)?;
    writeln!(out)
}

pub fn read_aggregates_json(text: &str) -> Result<Aggregates, serde_json::Error> {
    serde_json::from_str(text)
}

pub fn write_timings_csv<W: Write>(timings: &[SolveTiming], out: &mut W) -> io::Result<()> {
    writeln!(out, "round,vc,calls,mps,nodes,status,wall_s")?;
    for t in timings {
        writeln!(
            out,
            "{},{},{},{},{},{},{:.6}",
            t.round, t.vc, t.calls, t.mps, t.nodes, t.status, t.wall_s
        )?;
    }
    Ok(())
}

fn ratio_field(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn write_comparison_csv<W: Write>(cmp: &Comparison, out: &mut W) -> io::Result<()> {
    writeln!(
        out,
        "config,hot_participant_minutes,hot_call_minutes,hot_mp_minutes,total_migrations,max_cpu,p95_cpu,busiest_max_to_avg,h_vs_rr,hot_calls_vs_rr,hot_mps_vs_rr,migrations_vs_rr"
    )?;
    for r in &cmp.rows {
        let a = &r.aggregates;
        writeln!(
            out,
            "{},{},{},{},{},{:.6},{:.6},{:.6},{},{},{},{}",
            a.label,
            a.hot_participant_minutes,
            a.hot_call_minutes,
            a.hot_mp_minutes,
            a.total_migrations,
            a.max_of_max_cpu,
            a.max_of_p95_cpu,
            a.busiest_max_to_avg,
            ratio_field(r.h_vs_ref),
            ratio_field(r.hot_calls_vs_ref),
            ratio_field(r.hot_mps_vs_ref),
            ratio_field(r.migrations_vs_ref),
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PlannedMove {
    round: u64,
    t: u32,
    wave: usize,
    call: u32,
    from: u32,
    to: u32,
    from_load: i64,
    to_load: i64,
}

/// Observer writing one JSON line per planned move. The first I/O error is
/// kept and later rounds are skipped.
pub struct PlanLog<W: Write> {
    out: W,
    pub error: Option<io::Error>,
}

impl<W: Write> PlanLog<W> {
    pub fn new(out: W) -> Self {
        Self { out, error: None }
    }

    pub fn finish(mut self) -> io::Result<W> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> PlanObserver for PlanLog<W> {
    fn on_round(&mut self, view: &RoundView<'_>) {
        if self.error.is_some() {
            return;
        }
        for (wave, moves) in view.plan.waves.iter().enumerate() {
            for m in moves {
                let line = PlannedMove {
                    round: view.round,
                    t: view.t,
                    wave: wave + 1,
                    call: m.call.0,
                    from: m.from.0,
                    to: m.to.0,
                    from_load: m.from_load,
                    to_load: m.to_load,
                };
                let res = serde_json::to_writer(&mut self.out, &line)
                    .map_err(io::Error::from)
                    .and_then(|_| writeln!(self.out));
                if let Err(e) = res {
                    self.error = Some(e);
                    return;
                }
            }
        }
    }
}

/// Short plain-text summary of one run.
pub fn summarize(agg: &Aggregates) -> String {
    let mut s = String::new();
    let mut line = |k: &str, v: String| s.push_str(&format!("{k:<28}{v}\n"));
    line("configuration", agg.label.clone());
    line("minutes", agg.minutes.to_string());
    line("hot participant-minutes", agg.hot_participant_minutes.to_string());
    line("hot call-minutes", agg.hot_call_minutes.to_string());
    line("hot MP-minutes", agg.hot_mp_minutes.to_string());
    line("peak hot participants", agg.peak_hot_participants.to_string());
    line("max CPU", format!("{:.2}%", agg.max_of_max_cpu));
    line("max P95 CPU", format!("{:.2}%", agg.max_of_p95_cpu));
    line("max average CPU", format!("{:.2}%", agg.max_of_avg_cpu));
    line("busiest max/avg", format!("{:.2}", agg.busiest_max_to_avg));
    line("migrations", agg.total_migrations.to_string());
    line("planner rounds", agg.planner_rounds.to_string());
    line("deferred moves", agg.deferred_moves.to_string());
    if !agg.status_histogram.is_empty() {
        let parts: Vec<String> =
            agg.status_histogram.iter().map(|(k, v)| format!("{k}={v}")).collect();
        line("solver statuses", parts.join(" "));
    }
    if !agg.wave_histogram.is_empty() {
        let parts: Vec<String> =
            agg.wave_histogram.iter().map(|(k, v)| format!("{k}:{v}")).collect();
        line("waves per round", parts.join(" "));
        line("rounds within two waves", format!("{:.1}%", 100.0 * agg.rounds_within_two_waves));
    }
    s
}
