use std::fmt;
use std::sync::Arc;

/// What happened. Topic/seq pairs identify a message instance.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum EventKind {
    Publish { topic: Arc<str>, seq: u64 },
    SubCbStart { topic: Arc<str>, seq: u64 },
    SubCbEnd { topic: Arc<str>, seq: u64 },
    /// `consumed` is the stored subscription input the timer callback reads.
    TimerCbStart { consumed: Option<(Arc<str>, u64)> },
    TimerCbEnd,
    NodeReady,
}

impl EventKind {
    pub fn publish(topic: &str, seq: u64) -> Self {
        EventKind::Publish {
            topic: topic.into(),
            seq,
        }
    }

    pub fn sub_start(topic: &str, seq: u64) -> Self {
        EventKind::SubCbStart {
            topic: topic.into(),
            seq,
        }
    }

    pub fn sub_end(topic: &str, seq: u64) -> Self {
        EventKind::SubCbEnd {
            topic: topic.into(),
            seq,
        }
    }

    pub fn timer_start(consumed: Option<(&str, u64)>) -> Self {
        EventKind::TimerCbStart {
            consumed: consumed.map(|(t, s)| (t.into(), s)),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Publish { .. } => "publish",
            EventKind::SubCbStart { .. } => "sub_cb_start",
            EventKind::SubCbEnd { .. } => "sub_cb_end",
            EventKind::TimerCbStart { .. } => "timer_cb_start",
            EventKind::TimerCbEnd => "timer_cb_end",
            EventKind::NodeReady => "node_ready",
        }
    }

    pub fn is_start(&self) -> bool {
        matches!(self, EventKind::SubCbStart { .. } | EventKind::TimerCbStart { .. })
    }

    pub fn is_end(&self) -> bool {
        matches!(self, EventKind::SubCbEnd { .. } | EventKind::TimerCbEnd)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TraceEvent {
    pub t: u64,
    pub pid: u32,
    pub node: Arc<str>,
    pub kind: EventKind,
}

impl TraceEvent {
    pub fn new(t: u64, pid: u32, node: &str, kind: EventKind) -> Self {
        Self {
            t,
            pid,
            node: node.into(),
            kind,
        }
    }
}

/// One line of the trace format, without the trailing newline.
impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v1 {} {} {} {}", self.t, self.pid, self.node, self.kind.name())?;
        match &self.kind {
            EventKind::Publish { topic, seq }
            | EventKind::SubCbStart { topic, seq }
            | EventKind::SubCbEnd { topic, seq } => write!(f, " {topic} {seq}"),
            EventKind::TimerCbStart {
                consumed: Some((topic, seq)),
            } => write!(f, " {topic} {seq}"),
            _ => Ok(()),
        }
    }
}
