use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Action, CallRecord, CallTrace, Media, MediaKind, ParticipantEvent, TraceError};

pub const TRACE_FORMAT: &str = "callpack-trace";
pub const TRACE_VERSION: u32 = 1;

// Wire structs declare their fields in lexicographic order so serde_json emits
// sorted keys.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireHeader {
    duration_s: u32,
    format: String,
    seed: u64,
    version: u32,
    #[serde(default, skip_serializing_if = "is_zero")]
    warmup_s: u32,
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireCall<'a> {
    #[serde(borrow)]
    call_id: std::borrow::Cow<'a, str>,
    end_s: u32,
    events: Vec<WireEvent<'a>>,
    #[serde(borrow)]
    series_id: Option<std::borrow::Cow<'a, str>>,
    start_s: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireEvent<'a> {
    a: &'a str,
    #[serde(default)]
    kind: Option<&'a str>,
    #[serde(default)]
    mbps: Option<f64>,
    #[serde(borrow)]
    p: std::borrow::Cow<'a, str>,
    t: u32,
}

pub fn save_trace(trace: &CallTrace, path: impl AsRef<Path>) -> Result<(), TraceError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_trace(trace, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<CallTrace, TraceError> {
    read_trace(BufReader::new(File::open(path)?))
}

pub fn write_trace<W: Write>(trace: &CallTrace, out: &mut W) -> Result<(), TraceError> {
    let header = WireHeader {
        duration_s: trace.duration_s,
        format: TRACE_FORMAT.to_string(),
        seed: trace.seed,
        version: TRACE_VERSION,
        warmup_s: trace.warmup_s,
    };
    serde_json::to_writer(&mut *out, &header).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    for call in &trace.calls {
        let wire = WireCall {
            call_id: call.call_id.as_str().into(),
            end_s: call.end_s,
            events: call.events.iter().map(|e| to_wire_event(call, e)).collect(),
            series_id: call.series_id.as_deref().map(Into::into),
            start_s: call.start_s,
        };
        serde_json::to_writer(&mut *out, &wire).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn to_wire_event<'a>(call: &'a CallRecord, ev: &ParticipantEvent) -> WireEvent<'a> {
    let (a, kind, mbps) = match ev.action {
        Action::Join => ("join", None, None),
        Action::Leave => ("leave", None, None),
        Action::MediaStart(m) => ("mstart", Some(m.kind.wire_name()), Some(m.mbps)),
        Action::MediaStop(k) => ("mstop", Some(k.wire_name()), None),
        Action::MediaQualityChange(m) => ("mqual", Some(m.kind.wire_name()), Some(m.mbps)),
    };
    WireEvent {
        a,
        kind,
        mbps,
        p: call.participants[ev.participant as usize].as_str().into(),
        t: ev.time_s,
    }
}

pub fn read_trace<R: BufRead>(reader: R) -> Result<CallTrace, TraceError> {
    let mut lines = reader.lines().enumerate();
    let header_line = match lines.next() {
        Some((_, line)) => line?,
        None => {
            return Err(TraceError::MalformedLine {
                line_no: 1,
                reason: "missing header".into(),
            })
        }
    };
    let header: WireHeader =
        serde_json::from_str(&header_line).map_err(|e| TraceError::MalformedLine {
            line_no: 1,
            reason: format!("bad header: {e}"),
        })?;
    if header.format != TRACE_FORMAT || header.version != TRACE_VERSION {
        return Err(TraceError::MalformedLine {
            line_no: 1,
            reason: format!(
                "unsupported format {:?} version {}",
                header.format, header.version
            ),
        });
    }
    let mut trace = CallTrace {
        duration_s: header.duration_s,
        warmup_s: header.warmup_s,
        seed: header.seed,
        calls: Vec::new(),
    };
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let wire: WireCall =
            serde_json::from_str(&line).map_err(|e| TraceError::MalformedLine {
                line_no,
                reason: e.to_string(),
            })?;
        let call = from_wire_call(wire).map_err(|reason| TraceError::MalformedLine { line_no, reason })?;
        trace.calls.push(call);
    }
    trace.validate()?;
    Ok(trace)
}

fn from_wire_call(wire: WireCall<'_>) -> Result<CallRecord, String> {
    let mut participants: Vec<String> = Vec::new();
    let mut index = std::collections::HashMap::new();
    let mut events = Vec::with_capacity(wire.events.len());
    for ev in wire.events {
        let participant = match index.get(ev.p.as_ref()) {
            Some(&i) => i,
            None => {
                let i = participants.len() as u32;
                participants.push(ev.p.to_string());
                index.insert(ev.p.to_string(), i);
                i
            }
        };
        let kind = || -> Result<MediaKind, String> {
            let k = ev.kind.ok_or_else(|| format!("action {:?} requires kind", ev.a))?;
            MediaKind::from_wire(k).ok_or_else(|| format!("unknown media kind {k:?}"))
        };
        let media = || -> Result<Media, String> {
            let mbps = ev
                .mbps
                .ok_or_else(|| format!("action {:?} requires mbps", ev.a))?;
            Ok(Media::new(kind()?, mbps))
        };
        let action = match ev.a {
            "join" => Action::Join,
            "leave" => Action::Leave,
            "mstart" => Action::MediaStart(media()?),
            "mstop" => Action::MediaStop(kind()?),
            "mqual" => Action::MediaQualityChange(media()?),
            other => return Err(format!("unknown action {other:?}")),
        };
        events.push(ParticipantEvent {
            time_s: ev.t,
            participant,
            action,
        });
    }
    Ok(CallRecord {
        call_id: wire.call_id.into_owned(),
        series_id: wire.series_id.map(|s| s.into_owned()),
        start_s: wire.start_s,
        end_s: wire.end_s,
        participants,
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_party_call() -> CallRecord {
        CallRecord {
            call_id: "c1".into(),
            series_id: None,
            start_s: 0,
            end_s: 60,
            participants: vec!["alice".into(), "bob".into()],
            events: vec![
                ParticipantEvent { time_s: 0, participant: 0, action: Action::Join },
                ParticipantEvent { time_s: 0, participant: 1, action: Action::Join },
                ParticipantEvent {
                    time_s: 1,
                    participant: 0,
                    action: Action::MediaStart(Media::new(MediaKind::Video, 1.0)),
                },
                ParticipantEvent { time_s: 50, participant: 0, action: Action::MediaStop(MediaKind::Video) },
                ParticipantEvent { time_s: 60, participant: 0, action: Action::Leave },
                ParticipantEvent { time_s: 60, participant: 1, action: Action::Leave },
            ],
        }
    }

    fn to_bytes(trace: &CallTrace) -> Vec<u8> {
        let mut buf = Vec::new();
        write_trace(trace, &mut buf).unwrap();
        buf
    }

    #[test]
    fn empty_trace_is_header_only() {
        let trace = CallTrace::empty(86_400, 7);
        let bytes = to_bytes(&trace);
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert_eq!(
            text,
            "{\"duration_s\":86400,\"format\":\"callpack-trace\",\"seed\":7,\"version\":1}\n"
        );
        let back = read_trace(bytes.as_slice()).unwrap();
        assert!(back.calls.is_empty());
        assert_eq!(back, trace);
    }

    #[test]
    fn minimal_call_round_trips() {
        let mut trace = CallTrace::empty(3600, 1);
        trace.calls.push(two_party_call());
        let bytes = to_bytes(&trace);
        let back = read_trace(bytes.as_slice()).unwrap();
        assert_eq!(back, trace);
        assert_eq!(back.calls[0].max_participants(), 2);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn event_keys_are_sorted() {
        let mut trace = CallTrace::empty(3600, 1);
        trace.calls.push(two_party_call());
        let text = String::from_utf8(to_bytes(&trace)).unwrap();
        let line = text.lines().nth(1).unwrap();
        assert!(line.starts_with("{\"call_id\":\"c1\",\"end_s\":60,\"events\":[{\"a\":\"join\",\"kind\":null,\"mbps\":null,\"p\":\"alice\",\"t\":0}"));
        assert!(line.ends_with("\"series_id\":null,\"start_s\":0}"));
    }

    #[test]
    fn rejects_garbage_line_with_its_number() {
        let input = "{\"duration_s\":100,\"format\":\"callpack-trace\",\"seed\":0,\"version\":1}\nnot json\n";
        match read_trace(input.as_bytes()) {
            Err(TraceError::MalformedLine { line_no, .. }) => assert_eq!(line_no, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_missing_header() {
        assert!(matches!(
            read_trace("".as_bytes()),
            Err(TraceError::MalformedLine { line_no: 1, .. })
        ));
        let wrong = "{\"duration_s\":100,\"format\":\"other\",\"seed\":0,\"version\":1}\n";
        assert!(matches!(
            read_trace(wrong.as_bytes()),
            Err(TraceError::MalformedLine { line_no: 1, .. })
        ));
    }

    #[test]
    fn rejects_leave_before_join() {
        let input = concat!(
            "{\"duration_s\":100,\"format\":\"callpack-trace\",\"seed\":0,\"version\":1}\n",
            "{\"call_id\":\"x\",\"end_s\":10,\"events\":[{\"a\":\"leave\",\"kind\":null,\"mbps\":null,\"p\":\"u\",\"t\":1}],\"series_id\":null,\"start_s\":0}\n"
        );
        match read_trace(input.as_bytes()) {
            Err(TraceError::InvariantViolation { call_id, .. }) => assert_eq!(call_id, "x"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_stop_of_inactive_stream_and_duplicate_ids() {
        let mut call = two_party_call();
        call.events.insert(
            2,
            ParticipantEvent { time_s: 0, participant: 1, action: Action::MediaStop(MediaKind::Audio) },
        );
        assert!(call.validate(3600).is_err());

        let mut trace = CallTrace::empty(3600, 0);
        trace.calls.push(two_party_call());
        trace.calls.push(two_party_call());
        assert!(matches!(trace.validate(), Err(TraceError::InvariantViolation { .. })));
    }

    #[test]
    fn rejects_events_past_horizon_and_unbalanced_joins() {
        let call = two_party_call();
        assert!(call.validate(60).is_err());
        let mut open = two_party_call();
        open.events.pop();
        assert!(open.validate(3600).is_err());
    }
}
