use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use super::MessageEnvelope;
use crate::clock::now_ns;

/// Wake-up signal shared by every queue an executor waits on.
#[derive(Default)]
pub struct Notifier {
    pending: Mutex<bool>,
    cv: Condvar,
}

impl Notifier {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn notify(&self) {
        let mut p = self.pending.lock().unwrap();
        *p = true;
        self.cv.notify_all();
    }

    /// Block until notified or until the monotonic clock reaches `deadline_ns`.
    /// Returns true when woken by a notification.
    pub fn wait_until(&self, deadline_ns: u64) -> bool {
        let mut p = self.pending.lock().unwrap();
        loop {
            if *p {
                *p = false;
                return true;
            }
            let now = now_ns();
            if now >= deadline_ns {
                return false;
            }
            let (guard, _) = self
                .cv
                .wait_timeout(p, Duration::from_nanos(deadline_ns - now))
                .unwrap();
            p = guard;
        }
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct QueueStats {
    pub enqueued: u64,
    pub evicted: u64,
    pub taken: u64,
    /// Largest number of buffered entries ever observed.
    pub high_water: usize,
}

struct QueueState {
    entries: VecDeque<Arc<MessageEnvelope>>,
    stats: QueueStats,
}

/// Keep-last history: at most `depth` newest envelopes, oldest evicted first.
pub struct SubscriptionQueue {
    depth: usize,
    state: Mutex<QueueState>,
    notifier: Arc<Notifier>,
    closed: AtomicBool,
}

impl SubscriptionQueue {
    pub fn new(depth: usize, notifier: Arc<Notifier>) -> Self {
        assert!(depth >= 1, "queue depth must be >= 1");
        Self {
            depth,
            state: Mutex::new(QueueState {
                entries: VecDeque::with_capacity(depth.min(1024)),
                stats: QueueStats::default(),
            }),
            notifier,
            closed: AtomicBool::new(false),
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Insert, evicting the oldest entry when full. Returns the evicted envelope.
    pub fn push(&self, env: Arc<MessageEnvelope>) -> Option<Arc<MessageEnvelope>> {
        if self.closed.load(Ordering::Relaxed) {
            return None;
        }
        let evicted = {
            let mut st = self.state.lock().unwrap();
            let evicted = if st.entries.len() >= self.depth {
                st.stats.evicted += 1;
                st.entries.pop_front()
            } else {
                None
            };
            st.entries.push_back(env);
            st.stats.enqueued += 1;
            st.stats.high_water = st.stats.high_water.max(st.entries.len());
            debug_assert!(st.entries.len() <= self.depth);
            evicted
        };
        self.notifier.notify();
        evicted
    }

    pub fn pop(&self) -> Option<Arc<MessageEnvelope>> {
        let mut st = self.state.lock().unwrap();
        let e = st.entries.pop_front();
        if e.is_some() {
            st.stats.taken += 1;
        }
        e
    }

    /// Pop, waiting up to `timeout` for an entry.
    pub fn pop_wait(&self, timeout: Duration) -> Option<Arc<MessageEnvelope>> {
        let deadline = now_ns() + timeout.as_nanos() as u64;
        loop {
            if let Some(e) = self.pop() {
                return Some(e);
            }
            if !self.notifier.wait_until(deadline) {
                return self.pop();
            }
        }
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self) -> QueueStats {
        self.state.lock().unwrap().stats
    }

    pub(crate) fn close(&self) {
        self.closed.store(true, Ordering::Relaxed);
    }
}
