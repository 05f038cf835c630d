//! Chain path reconstruction and latency decomposition.
//!
//! Subscription hops are linked by exact `(topic, seq)` of the upstream
//! publish. Timer hops are linked by the `(topic, seq)` the timer recorded as
//! consumed, which is the input of the preceding subscription hop on the
//! same node. Chain topics are assumed to have a single publisher, since seq
//! numbers count per publisher.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::model::ChainSpec;
use crate::trace::{EventKind, TraceLog};

/// Timestamps of one hop on one path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HopEvent {
    pub timer: bool,
    pub start: u64,
    pub end: u64,
    /// Publish time of the chain output of this hop, if it has one.
    pub output_ts: Option<u64>,
}

impl HopEvent {
    /// Where this hop's compute ends: its chain output, else the callback end.
    pub fn compute_end(&self) -> u64 {
        self.output_ts.unwrap_or(self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathInstance {
    pub sensor_seq: u64,
    pub sensor_ts: u64,
    /// Resolved hops in chain order; shorter than the chain when incomplete.
    pub hops: Vec<HopEvent>,
    pub complete: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopBreakdown {
    pub idle: u64,
    pub communication: u64,
    pub compute: u64,
}

/// All values in ns. `idle + communication + compute == e2e`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub e2e: u64,
    pub idle: u64,
    pub communication: u64,
    pub compute: u64,
    pub per_hop: Vec<HopBreakdown>,
}

struct Dispatch {
    start: u64,
    end: Option<u64>,
    publishes: Vec<(Arc<str>, u64, u64)>,
}

type Key = (Arc<str>, bool, Arc<str>, u64);

struct Index {
    dispatches: Vec<Dispatch>,
    by_input: HashMap<Key, Vec<usize>>,
    sensor: Vec<(u64, u64)>,
}

impl Index {
    fn build(trace: &TraceLog, sensor_topic: &str) -> Self {
        let mut dispatches: Vec<Dispatch> = Vec::new();
        let mut by_input: HashMap<Key, Vec<usize>> = HashMap::new();
        let mut open: HashMap<Arc<str>, usize> = HashMap::new();
        let mut sensor = Vec::new();
        for e in &trace.events {
            let input = match &e.kind {
                EventKind::SubCbStart { topic, seq } => Some((false, Some((topic.clone(), *seq)))),
                EventKind::TimerCbStart { consumed } => Some((true, consumed.clone())),
                _ => None,
            };
            if let Some((timer, input)) = input {
                let id = dispatches.len();
                dispatches.push(Dispatch {
                    start: e.t,
                    end: None,
                    publishes: Vec::new(),
                });
                open.insert(e.node.clone(), id);
                if let Some((topic, seq)) = input {
                    by_input
                        .entry((e.node.clone(), timer, topic, seq))
                        .or_default()
                        .push(id);
                }
                continue;
            }
            match &e.kind {
                EventKind::SubCbEnd { .. } | EventKind::TimerCbEnd => {
                    if let Some(id) = open.remove(&e.node) {
                        dispatches[id].end = Some(e.t);
                    }
                }
                EventKind::Publish { topic, seq } => {
                    if &**topic == sensor_topic {
                        sensor.push((*seq, e.t));
                    }
                    if let Some(&id) = open.get(&e.node) {
                        dispatches[id].publishes.push((topic.clone(), *seq, e.t));
                    }
                }
                _ => {}
            }
        }
        Self {
            dispatches,
            by_input,
            sensor,
        }
    }
}

struct Hop {
    node: Arc<str>,
    timer: bool,
    output: Option<Arc<str>>,
}

struct Walker<'a> {
    index: &'a Index,
    hops: Vec<Hop>,
    out: Vec<PathInstance>,
}

impl Walker<'_> {
    /// Extend `prefix` with hop `i`, which consumes `input`.
    fn walk(&mut self, i: usize, input: (Arc<str>, u64), seq: u64, ts: u64, prefix: &mut Vec<HopEvent>) {
        if i == self.hops.len() {
            self.emit(seq, ts, prefix, true);
            return;
        }
        let timer = self.hops[i].timer;
        let key = (self.hops[i].node.clone(), timer, input.0.clone(), input.1);
        let index = self.index;
        let candidates = index.by_input.get(&key).map(Vec::as_slice).unwrap_or(&[]);
        let mut extended = false;
        for &id in candidates {
            let d = &index.dispatches[id];
            let Some(end) = d.end else { continue };
            // a timer may only consume an input whose subscription already ran
            if let Some(prev) = prefix.last() {
                if timer && d.start < prev.end {
                    continue;
                }
            }
            let output = self.hops[i].output.clone();
            match output {
                Some(topic) => {
                    for (t, s, pts) in d.publishes.iter().filter(|p| p.0 == topic) {
                        extended = true;
                        prefix.push(HopEvent {
                            timer,
                            start: d.start,
                            end,
                            output_ts: Some(*pts),
                        });
                        self.walk(i + 1, (t.clone(), *s), seq, ts, prefix);
                        prefix.pop();
                    }
                }
                None => {
                    extended = true;
                    prefix.push(HopEvent {
                        timer,
                        start: d.start,
                        end,
                        output_ts: None,
                    });
                    // no output: the next hop is a timer reading the same input
                    self.walk(i + 1, input.clone(), seq, ts, prefix);
                    prefix.pop();
                }
            }
        }
        if !extended {
            self.emit(seq, ts, prefix, false);
        }
    }

    fn emit(&mut self, seq: u64, ts: u64, prefix: &[HopEvent], complete: bool) {
        self.out.push(PathInstance {
            sensor_seq: seq,
            sensor_ts: ts,
            hops: prefix.to_vec(),
            complete,
        });
    }
}

/// Enumerate every maximal path from each sensor publish through the chain.
pub fn reconstruct_paths(trace: &TraceLog, chain: &ChainSpec) -> Result<Vec<PathInstance>, AnalysisError> {
    let sensor_topic = match (&chain.sensor_topic, chain.is_resolved()) {
        (Some(t), true) => t.clone(),
        _ => return Err(AnalysisError::UnresolvedChain),
    };
    let index = Index::build(trace, &sensor_topic);
    let hops: Vec<Hop> = chain
        .hops
        .iter()
        .map(|h| Hop {
            node: h.node.as_str().into(),
            timer: h.is_timer(),
            output: h.output_topic.as_deref().map(Into::into),
        })
        .collect();
    let first = &hops[0];
    let has_hop0 = index
        .by_input
        .keys()
        .any(|(n, timer, topic, _)| *n == first.node && !*timer && **topic == *sensor_topic);
    if !has_hop0 {
        return Err(AnalysisError::NoHopZeroEvents(chain.hops[0].node.clone()));
    }
    let sensor_arc: Arc<str> = sensor_topic.as_str().into();
    let mut walker = Walker {
        index: &index,
        hops,
        out: Vec::new(),
    };
    let mut prefix = Vec::with_capacity(chain.hops.len());
    for &(seq, ts) in &index.sensor {
        walker.walk(0, (sensor_arc.clone(), seq), seq, ts, &mut prefix);
    }
    Ok(walker.out)
}

/// Split a complete path's end-to-end latency into idle, communication and
/// compute time.
pub fn decompose(path: &PathInstance) -> Result<LatencyBreakdown, AnalysisError> {
    if !path.complete || path.hops.is_empty() {
        return Err(AnalysisError::IncompletePath(path.sensor_seq));
    }
    let bad = || AnalysisError::NonMonotonic(path.sensor_seq);
    let mut b = LatencyBreakdown::default();
    let mut upstream = path.sensor_ts;
    for (i, h) in path.hops.iter().enumerate() {
        let mut hb = HopBreakdown::default();
        if h.timer {
            let prev = i.checked_sub(1).map(|p| path.hops[p]).ok_or_else(bad)?;
            hb.idle = h.start.checked_sub(prev.compute_end()).ok_or_else(bad)?;
        } else {
            hb.communication = h.start.checked_sub(upstream).ok_or_else(bad)?;
        }
        hb.compute = h.compute_end().checked_sub(h.start).ok_or_else(bad)?;
        upstream = h.compute_end();
        b.idle += hb.idle;
        b.communication += hb.communication;
        b.compute += hb.compute;
        b.per_hop.push(hb);
    }
    b.e2e = upstream.checked_sub(path.sensor_ts).ok_or_else(bad)?;
    debug_assert_eq!(b.e2e, b.idle + b.communication + b.compute);
    Ok(b)
}

/// One data-age sample (ms) per sensor seq with at least one complete path:
/// the mean end-to-end latency over that seq's complete paths.
pub fn data_age_series(paths: &[PathInstance]) -> Vec<f64> {
    kpi_series(paths).e2e
}

/// Per-sensor-input samples (ms) of every KPI, averaged like data age.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KpiSeries {
    pub sensor_seqs: Vec<u64>,
    pub e2e: Vec<f64>,
    pub idle: Vec<f64>,
    pub communication: Vec<f64>,
    pub computation: Vec<f64>,
    pub complete_paths: usize,
    pub incomplete_paths: usize,
}

pub fn kpi_series(paths: &[PathInstance]) -> KpiSeries {
    // seq -> (count, e2e, idle, comm, compute) sums in ns
    let mut acc: BTreeMap<u64, (u64, u128, u128, u128, u128)> = BTreeMap::new();
    let mut s = KpiSeries::default();
    for p in paths {
        match decompose(p) {
            Ok(b) => {
                s.complete_paths += 1;
                let a = acc.entry(p.sensor_seq).or_default();
                a.0 += 1;
                a.1 += b.e2e as u128;
                a.2 += b.idle as u128;
                a.3 += b.communication as u128;
                a.4 += b.compute as u128;
            }
            Err(_) => s.incomplete_paths += 1,
        }
    }
    let ms = |sum: u128, n: u64| sum as f64 / n as f64 / 1e6;
    for (seq, (n, e2e, idle, comm, comp)) in acc {
        s.sensor_seqs.push(seq);
        s.e2e.push(ms(e2e, n));
        s.idle.push(ms(idle, n));
        s.communication.push(ms(comm, n));
        s.computation.push(ms(comp, n));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChainHop, HopKind};
    use crate::trace::TraceEvent;

    const MS: u64 = 1_000_000;

    fn sub_hop(node: &str, topic: &str, out: Option<&str>) -> ChainHop {
        ChainHop {
            node: node.into(),
            kind: HopKind::Subscription {
                signature: "T".into(),
                topic: Some(topic.into()),
            },
            output_topic: out.map(Into::into),
        }
    }

    fn log(events: Vec<TraceEvent>) -> TraceLog {
        TraceLog {
            run_id: "r".into(),
            events,
            dropped_count: 0,
        }
    }

    fn ev(t: u64, node: &str, kind: EventKind) -> TraceEvent {
        TraceEvent::new(t, 1, node, kind)
    }

    #[test]
    fn single_hop_breakdown() {
        let chain = ChainSpec {
            hops: vec![sub_hop("a", "s", Some("o"))],
            sensor_topic: Some("s".into()),
        };
        let trace = log(vec![
            ev(0, "src", EventKind::publish("s", 1)),
            ev(5 * MS, "a", EventKind::sub_start("s", 1)),
            ev(7 * MS, "a", EventKind::publish("o", 1)),
            ev(8 * MS, "a", EventKind::sub_end("s", 1)),
        ]);
        let paths = reconstruct_paths(&trace, &chain).unwrap();
        assert_eq!(paths.len(), 1);
        let b = decompose(&paths[0]).unwrap();
        assert_eq!((b.communication, b.compute, b.idle, b.e2e), (5 * MS, 2 * MS, 0, 7 * MS));
    }

    #[test]
    fn timer_hop_idle_and_repeated_consumption() {
        let chain = ChainSpec {
            hops: vec![
                sub_hop("a", "s", None),
                ChainHop {
                    node: "a".into(),
                    kind: HopKind::Timer,
                    output_topic: Some("o".into()),
                },
            ],
            sensor_topic: Some("s".into()),
        };
        let trace = log(vec![
            ev(0, "src", EventKind::publish("s", 7)),
            ev(2 * MS, "a", EventKind::sub_start("s", 7)),
            ev(10 * MS, "a", EventKind::sub_end("s", 7)),
            ev(18 * MS, "a", EventKind::timer_start(Some(("s", 7)))),
            ev(19 * MS, "a", EventKind::publish("o", 1)),
            ev(20 * MS, "a", EventKind::TimerCbEnd),
            ev(28 * MS, "a", EventKind::timer_start(Some(("s", 7)))),
            ev(29 * MS, "a", EventKind::publish("o", 2)),
            ev(30 * MS, "a", EventKind::TimerCbEnd),
        ]);
        let paths = reconstruct_paths(&trace, &chain).unwrap();
        assert_eq!(paths.len(), 2);
        assert!(paths.iter().all(|p| p.complete && p.sensor_seq == 7));
        let b = decompose(&paths[0]).unwrap();
        assert_eq!(b.idle, 8 * MS);
        assert_eq!(b.e2e, 19 * MS);
        assert_eq!(b.idle + b.communication + b.compute, b.e2e);
        // data age averages the two paths: (19 + 29) / 2
        assert_eq!(data_age_series(&paths), vec![24.0]);
    }

    #[test]
    fn evicted_input_gives_incomplete_path() {
        let chain = ChainSpec {
            hops: vec![sub_hop("a", "s", Some("o")), sub_hop("b", "o", None)],
            sensor_topic: Some("s".into()),
        };
        let trace = log(vec![
            ev(0, "src", EventKind::publish("s", 1)),
            ev(1, "src", EventKind::publish("s", 2)),
            ev(2, "a", EventKind::sub_start("s", 2)),
            ev(3, "a", EventKind::publish("o", 1)),
            ev(4, "a", EventKind::sub_end("s", 2)),
            ev(5, "b", EventKind::sub_start("o", 1)),
            ev(6, "b", EventKind::sub_end("o", 1)),
        ]);
        let paths = reconstruct_paths(&trace, &chain).unwrap();
        assert_eq!(paths.len(), 2);
        assert!(!paths[0].complete && paths[0].hops.is_empty());
        assert!(paths[1].complete);
        let s = kpi_series(&paths);
        assert_eq!((s.complete_paths, s.incomplete_paths), (1, 1));
        assert_eq!(s.sensor_seqs, vec![2]);
        assert!(matches!(decompose(&paths[0]), Err(AnalysisError::IncompletePath(1))));
    }

    #[test]
    fn missing_hop_zero_is_an_error() {
        let chain = ChainSpec {
            hops: vec![sub_hop("a", "s", None)],
            sensor_topic: Some("s".into()),
        };
        let trace = log(vec![ev(0, "src", EventKind::publish("s", 1))]);
        assert!(matches!(
            reconstruct_paths(&trace, &chain),
            Err(AnalysisError::NoHopZeroEvents(_))
        ));
        let unresolved = ChainSpec {
            hops: chain.hops.clone(),
            sensor_topic: None,
        };
        assert!(matches!(
            reconstruct_paths(&trace, &unresolved),
            Err(AnalysisError::UnresolvedChain)
        ));
    }

    #[test]
    fn data_age_of_two_paths() {
        let mk = |e2e_ms: u64| PathInstance {
            sensor_seq: 7,
            sensor_ts: 0,
            hops: vec![HopEvent {
                timer: false,
                start: 0,
                end: e2e_ms * MS,
                output_ts: None,
            }],
            complete: true,
        };
        assert_eq!(data_age_series(&[mk(100), mk(120)]), vec![110.0]);
        assert_eq!(data_age_series(&[mk(100)]), vec![100.0]);
        assert!(data_age_series(&[]).is_empty());
    }
}
