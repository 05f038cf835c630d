//! Event recording and the on-disk trace format.
//!
//! A trace file is UTF-8, one record per line:
//!
//! ```text
//! #chainbench-trace v1 run=<run_id> clock=monotonic
//! v1 <t_ns> <pid> <node> <kind> [topic seq]
//! # dropped=<n>
//! ```
//!
//! `kind` is one of `publish`, `sub_cb_start`, `sub_cb_end`,
//! `timer_cb_start`, `timer_cb_end`, `node_ready`. A `timer_cb_start`
//! carries the consumed `topic seq` when the timer read a stored input.
//! Each process writes its own file; files of one run are merged on load.

mod event;
mod session;

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

pub use event::{EventKind, TraceEvent};
pub use session::{TraceProducer, TraceSession, DEFAULT_CAPACITY};

pub const TRACE_DIR_ENV: &str = "CHAINBENCH_TRACE_DIR";
const HEADER_PREFIX: &str = "#chainbench-trace";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("trace format version mismatch: expected v1, found `{0}`")]
    VersionMismatch(String),
    #[error("missing trace header")]
    MissingHeader,
    #[error("malformed trace lines: {}", format_malformed(.0))]
    Malformed(Vec<(usize, String)>),
    #[error("traces from different runs: `{0}` and `{1}`")]
    RunMismatch(String, String),
}

fn format_malformed(lines: &[(usize, String)]) -> String {
    lines
        .iter()
        .take(5)
        .map(|(n, m)| format!("line {n}: {m}"))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Events of one run, ordered by timestamp.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceLog {
    pub run_id: String,
    pub events: Vec<TraceEvent>,
    pub dropped_count: u64,
}

impl TraceLog {
    /// Merge per-process logs of the same run. Stable on `(t, pid)`, so each
    /// producer's emission order is kept.
    pub fn merge(logs: Vec<TraceLog>) -> Result<TraceLog, TraceError> {
        let mut run_id: Option<String> = None;
        let mut events = Vec::new();
        let mut dropped = 0;
        for log in logs {
            match &run_id {
                Some(r) if !log.run_id.is_empty() && *r != log.run_id => {
                    return Err(TraceError::RunMismatch(r.clone(), log.run_id));
                }
                None if !log.run_id.is_empty() => run_id = Some(log.run_id.clone()),
                _ => {}
            }
            dropped += log.dropped_count;
            events.extend(log.events);
        }
        events.sort_by_key(|e| (e.t, e.pid));
        Ok(TraceLog {
            run_id: run_id.unwrap_or_default(),
            events,
            dropped_count: dropped,
        })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Per node, every callback start is closed by its end before the next start.
    pub fn check_nesting(&self) -> Result<(), String> {
        let mut open: HashMap<&str, &TraceEvent> = HashMap::new();
        for e in &self.events {
            if e.kind.is_start() {
                if let Some(prev) = open.insert(&e.node, e) {
                    return Err(format!(
                        "node `{}`: callback started at {} before the one from {} ended",
                        e.node, e.t, prev.t
                    ));
                }
            } else if e.kind.is_end() && open.remove(&*e.node).is_none() {
                return Err(format!("node `{}`: end without start at {}", e.node, e.t));
            }
        }
        Ok(())
    }
}

/// Write `log` in the trace format, sorted by `t` with ties kept in
/// `(pid, emission)` order. Returns the number of event lines.
pub fn flush<W: Write>(log: &TraceLog, sink: W) -> Result<usize, TraceError> {
    let mut w = BufWriter::new(sink);
    writeln!(w, "{HEADER_PREFIX} v1 run={} clock=monotonic", log.run_id)?;
    let mut order: Vec<&TraceEvent> = log.events.iter().collect();
    order.sort_by_key(|e| (e.t, e.pid));
    for e in &order {
        writeln!(w, "{e}")?;
    }
    if log.dropped_count > 0 {
        writeln!(w, "# dropped={}", log.dropped_count)?;
    }
    w.flush()?;
    Ok(order.len())
}

pub fn write_trace_file(log: &TraceLog, path: &Path) -> Result<usize, TraceError> {
    flush(log, File::create(path)?)
}

pub fn load_trace_file(path: &Path) -> Result<TraceLog, TraceError> {
    load_trace(File::open(path)?)
}

/// Parse a trace file. Malformed lines are collected and reported together.
pub fn load_trace<R: Read>(source: R) -> Result<TraceLog, TraceError> {
    let reader = BufReader::new(source);
    let mut log = TraceLog::default();
    let mut seen_header = false;
    let mut malformed = Vec::new();
    let mut interned: HashMap<String, Arc<str>> = HashMap::new();
    let mut intern = |s: &str| -> Arc<str> {
        if let Some(a) = interned.get(s) {
            return a.clone();
        }
        let a: Arc<str> = s.into();
        interned.insert(s.to_string(), a.clone());
        a
    };

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let n = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix(HEADER_PREFIX) {
            let mut parts = rest.split_whitespace();
            match parts.next() {
                Some("v1") => {}
                other => return Err(TraceError::VersionMismatch(other.unwrap_or("").to_string())),
            }
            for p in parts {
                if let Some(r) = p.strip_prefix("run=") {
                    log.run_id = r.to_string();
                }
            }
            seen_header = true;
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            if let Some(d) = rest.trim().strip_prefix("dropped=") {
                match d.parse::<u64>() {
                    Ok(v) => log.dropped_count += v,
                    Err(_) => malformed.push((n, format!("bad dropped count `{d}`"))),
                }
            }
            continue;
        }
        if !seen_header {
            return Err(TraceError::MissingHeader);
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields[0] != "v1" {
            if fields[0].starts_with('v') {
                return Err(TraceError::VersionMismatch(fields[0].to_string()));
            }
            malformed.push((n, "missing version tag".into()));
            continue;
        }
        match parse_event(&fields, &mut intern) {
            Ok(e) => log.events.push(e),
            Err(msg) => malformed.push((n, msg)),
        }
    }
    if !seen_header {
        return Err(TraceError::MissingHeader);
    }
    if !malformed.is_empty() {
        return Err(TraceError::Malformed(malformed));
    }
    Ok(log)
}

fn parse_event(fields: &[&str], intern: &mut impl FnMut(&str) -> Arc<str>) -> Result<TraceEvent, String> {
    if fields.len() < 5 {
        return Err(format!("expected at least 5 fields, found {}", fields.len()));
    }
    let t: u64 = fields[1].parse().map_err(|_| format!("bad timestamp `{}`", fields[1]))?;
    let pid: u32 = fields[2].parse().map_err(|_| format!("bad pid `{}`", fields[2]))?;
    let node = intern(fields[3]);
    let topic_seq = |extra: &[&str], intern: &mut dyn FnMut(&str) -> Arc<str>| -> Result<(Arc<str>, u64), String> {
        match extra {
            [topic, seq] => {
                let seq = seq.parse().map_err(|_| format!("bad seq `{seq}`"))?;
                Ok((intern(topic), seq))
            }
            _ => Err(format!("`{}` needs `topic seq`", fields[4])),
        }
    };
    let extra = &fields[5..];
    let kind = match fields[4] {
        "publish" => {
            let (topic, seq) = topic_seq(extra, intern)?;
            EventKind::Publish { topic, seq }
        }
        "sub_cb_start" => {
            let (topic, seq) = topic_seq(extra, intern)?;
            EventKind::SubCbStart { topic, seq }
        }
        "sub_cb_end" => {
            let (topic, seq) = topic_seq(extra, intern)?;
            EventKind::SubCbEnd { topic, seq }
        }
        "timer_cb_start" => {
            let consumed = if extra.is_empty() {
                None
            } else {
                Some(topic_seq(extra, intern)?)
            };
            EventKind::TimerCbStart { consumed }
        }
        "timer_cb_end" | "node_ready" if !extra.is_empty() => {
            return Err(format!("unexpected fields after `{}`", fields[4]))
        }
        "timer_cb_end" => EventKind::TimerCbEnd,
        "node_ready" => EventKind::NodeReady,
        other => return Err(format!("unknown event kind `{other}`")),
    };
    Ok(TraceEvent { t, pid, node, kind })
}

/// Output directory for trace files: `$CHAINBENCH_TRACE_DIR`, else `fallback`.
pub fn trace_dir(fallback: &Path) -> PathBuf {
    std::env::var_os(TRACE_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| fallback.to_path_buf())
}

/// Load and merge every `*.trace` file in `dir` whose header names `run_id`.
pub fn load_run(dir: &Path, run_id: &str) -> Result<TraceLog, TraceError> {
    let mut logs = Vec::new();
    let mut entries: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "trace"))
        .collect();
    entries.sort();
    for path in entries {
        let log = load_trace_file(&path)?;
        if log.run_id == run_id {
            logs.push(log);
        }
    }
    let mut merged = TraceLog::merge(logs)?;
    merged.run_id = run_id.to_string();
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(t: u64, pid: u32, node: &str, kind: EventKind) -> TraceEvent {
        TraceEvent::new(t, pid, node, kind)
    }

    #[test]
    fn empty_log_round_trip() {
        let log = TraceLog {
            run_id: "r1".into(),
            ..Default::default()
        };
        let mut buf = Vec::new();
        assert_eq!(flush(&log, &mut buf).unwrap(), 0);
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(load_trace(&buf[..]).unwrap(), log);
    }

    #[test]
    fn flush_sorts_across_producers() {
        let log = TraceLog {
            run_id: "r".into(),
            events: vec![
                ev(30, 2, "b", EventKind::NodeReady),
                ev(10, 1, "a", EventKind::publish("x", 1)),
                ev(20, 3, "c", EventKind::timer_start(Some(("x", 1)))),
            ],
            dropped_count: 0,
        };
        let mut buf = Vec::new();
        flush(&log, &mut buf).unwrap();
        let loaded = load_trace(&buf[..]).unwrap();
        let ts: Vec<u64> = loaded.events.iter().map(|e| e.t).collect();
        assert_eq!(ts, vec![10, 20, 30]);
        assert_eq!(
            loaded.events[1].kind,
            EventKind::timer_start(Some(("x", 1)))
        );
    }

    #[test]
    fn all_kinds_round_trip_with_dropped() {
        let log = TraceLog {
            run_id: "run-7".into(),
            events: vec![
                ev(1, 9, "n", EventKind::NodeReady),
                ev(2, 9, "n", EventKind::sub_start("t/a", 4)),
                ev(3, 9, "n", EventKind::publish("t/b", 5)),
                ev(4, 9, "n", EventKind::sub_end("t/a", 4)),
                ev(5, 9, "n", EventKind::timer_start(None)),
                ev(6, 9, "n", EventKind::TimerCbEnd),
            ],
            dropped_count: 3,
        };
        let mut buf = Vec::new();
        flush(&log, &mut buf).unwrap();
        assert_eq!(load_trace(&buf[..]).unwrap(), log);
        assert!(log.check_nesting().is_ok());
    }

    #[test]
    fn malformed_lines_are_reported_with_numbers() {
        let text = "#chainbench-trace v1 run=r clock=monotonic\nv1 1 1 n node_ready\nv1 x 1 n node_ready\nv1 2 1 n publish t\n";
        match load_trace(text.as_bytes()) {
            Err(TraceError::Malformed(lines)) => {
                assert_eq!(lines.iter().map(|l| l.0).collect::<Vec<_>>(), vec![3, 4]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn version_mismatch() {
        let text = "#chainbench-trace v2 run=r clock=monotonic\n";
        assert!(matches!(load_trace(text.as_bytes()), Err(TraceError::VersionMismatch(v)) if v == "v2"));
        let text = "#chainbench-trace v1 run=r clock=monotonic\nv2 1 1 n node_ready\n";
        assert!(matches!(load_trace(text.as_bytes()), Err(TraceError::VersionMismatch(_))));
        assert!(matches!(load_trace("v1 1 1 n node_ready\n".as_bytes()), Err(TraceError::MissingHeader)));
    }

    #[test]
    fn nesting_violation_detected() {
        let log = TraceLog {
            run_id: "r".into(),
            events: vec![
                ev(1, 1, "n", EventKind::sub_start("a", 1)),
                ev(2, 1, "n", EventKind::timer_start(None)),
            ],
            dropped_count: 0,
        };
        assert!(log.check_nesting().is_err());
    }

    #[test]
    fn merge_rejects_mixed_runs() {
        let a = TraceLog {
            run_id: "a".into(),
            ..Default::default()
        };
        let b = TraceLog {
            run_id: "b".into(),
            ..Default::default()
        };
        assert!(TraceLog::merge(vec![a, b]).is_err());
    }
}
