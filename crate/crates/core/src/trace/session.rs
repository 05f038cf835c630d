use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use super::event::{EventKind, TraceEvent};
use super::TraceLog;
use crate::clock::now_ns;

/// Default per-producer buffer size (events).
pub const DEFAULT_CAPACITY: usize = 1 << 20;

struct ProducerBuffer {
    id: u32,
    node: Arc<str>,
    events: Mutex<Vec<TraceEvent>>,
    dropped: AtomicU64,
}

/// A recording session for one process of one run.
///
/// Each producer (normally one per node) owns a bounded buffer. A full
/// buffer drops the newest event and counts it; recording never waits on
/// the drainer beyond an uncontended lock.
pub struct TraceSession {
    run_id: String,
    pid: u32,
    capacity: usize,
    enabled: bool,
    next_id: AtomicU32,
    producers: Mutex<Vec<Arc<ProducerBuffer>>>,
}

impl TraceSession {
    pub fn new(run_id: impl Into<String>) -> Arc<Self> {
        Self::with_capacity(run_id, DEFAULT_CAPACITY)
    }

    pub fn with_capacity(run_id: impl Into<String>, capacity: usize) -> Arc<Self> {
        Arc::new(Self {
            run_id: run_id.into(),
            pid: std::process::id(),
            capacity,
            enabled: true,
            next_id: AtomicU32::new(0),
            producers: Mutex::new(Vec::new()),
        })
    }

    /// A session whose producers record nothing.
    pub fn disabled() -> Arc<Self> {
        Arc::new(Self {
            run_id: String::new(),
            pid: std::process::id(),
            capacity: 0,
            enabled: false,
            next_id: AtomicU32::new(0),
            producers: Mutex::new(Vec::new()),
        })
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn producer(&self, node: &str) -> TraceProducer {
        let buf = Arc::new(ProducerBuffer {
            id: self.next_id.fetch_add(1, Ordering::Relaxed),
            node: node.into(),
            events: Mutex::new(Vec::new()),
            dropped: AtomicU64::new(0),
        });
        if self.enabled {
            self.producers.lock().unwrap().push(buf.clone());
        }
        TraceProducer {
            buf,
            pid: self.pid,
            capacity: self.capacity,
            enabled: self.enabled,
        }
    }

    /// Take everything recorded so far, merged by `(t, pid, producer, emission index)`.
    pub fn drain(&self) -> TraceLog {
        let producers = self.producers.lock().unwrap().clone();
        let mut tagged = Vec::new();
        let mut dropped = 0;
        for p in &producers {
            let events = std::mem::take(&mut *p.events.lock().unwrap());
            dropped += p.dropped.swap(0, Ordering::Relaxed);
            tagged.extend(events.into_iter().map(|e| (p.id, e)));
        }
        // stable: emission order survives within a producer
        tagged.sort_by_key(|(id, e)| (e.t, e.pid, *id));
        TraceLog {
            run_id: self.run_id.clone(),
            events: tagged.into_iter().map(|(_, e)| e).collect(),
            dropped_count: dropped,
        }
    }
}

/// Cheap, cloneable recording handle bound to one node.
#[derive(Clone)]
pub struct TraceProducer {
    buf: Arc<ProducerBuffer>,
    pid: u32,
    capacity: usize,
    enabled: bool,
}

impl TraceProducer {
    pub fn node(&self) -> &Arc<str> {
        &self.buf.node
    }

    /// Timestamp and record under the producer lock, so `t` is non-decreasing
    /// in emission order. Returns the timestamp used (0 when disabled).
    pub fn record(&self, kind: EventKind) -> u64 {
        if !self.enabled {
            return 0;
        }
        let mut events = self.buf.events.lock().unwrap();
        let t = now_ns();
        self.push(&mut events, t, kind);
        t
    }

    /// Record with a caller-supplied timestamp.
    pub fn record_at(&self, t: u64, kind: EventKind) {
        if !self.enabled {
            return;
        }
        let mut events = self.buf.events.lock().unwrap();
        self.push(&mut events, t, kind);
    }

    fn push(&self, events: &mut Vec<TraceEvent>, t: u64, kind: EventKind) {
        if events.len() >= self.capacity {
            self.buf.dropped.fetch_add(1, Ordering::Relaxed);
            return;
        }
        events.push(TraceEvent {
            t,
            pid: self.pid,
            node: self.buf.node.clone(),
            kind,
        });
    }

    pub fn dropped(&self) -> u64 {
        self.buf.dropped.load(Ordering::Relaxed)
    }
}
