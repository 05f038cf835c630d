//! Topic-based publish/subscribe.
//!
//! Wiring is static: a [`Bus`] knows its topics, the local subscription
//! queues, and for each topic the remote process groups that subscribe to
//! it ([`RemoteRoute`]). Local delivery pushes the envelope straight into
//! keep-last queues. Remote delivery fragments the message onto loopback UDP
//! ([`wire`]); reliable routes wait for a 16-byte ack per message and
//! retransmit until it arrives or the retry budget runs out.

mod queue;
pub mod wire;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::os::fd::AsRawFd;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use queue::{Notifier, QueueStats, SubscriptionQueue};

use crate::clock::now_ns;
use crate::model::{QosPolicy, Reliability};
use crate::trace::{EventKind, TraceProducer, TraceSession};

pub type Payload = Arc<Vec<u8>>;

/// One published message instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageEnvelope {
    pub topic: Arc<str>,
    /// Per (publisher, topic) counter starting at 1; 0 means "none".
    pub seq: u64,
    pub publish_ts: u64,
    /// Identifies the publisher within the run.
    pub source: u64,
    pub payload: Payload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeliveryMode {
    BestEffort,
    Reliable { ack_timeout_ns: u64, max_retries: u32 },
}

impl DeliveryMode {
    pub const DEFAULT_ACK_TIMEOUT_NS: u64 = 10_000_000;
    pub const DEFAULT_MAX_RETRIES: u32 = 100;

    pub fn reliable() -> Self {
        DeliveryMode::Reliable {
            ack_timeout_ns: Self::DEFAULT_ACK_TIMEOUT_NS,
            max_retries: Self::DEFAULT_MAX_RETRIES,
        }
    }

    pub fn from_reliability(r: Reliability) -> Self {
        match r {
            Reliability::BestEffort => DeliveryMode::BestEffort,
            Reliability::Reliable => Self::reliable(),
        }
    }

    pub fn is_reliable(&self) -> bool {
        matches!(self, DeliveryMode::Reliable { .. })
    }
}

#[derive(Debug, Error)]
pub enum MiddlewareError {
    #[error("unknown topic `{0}`")]
    UnknownTopic(String),
    #[error("duplicate subscription `{node}` / `{topic}` / `{callback}`")]
    DuplicateSubscription {
        node: String,
        topic: String,
        callback: String,
    },
    #[error("delivery of `{topic}` seq {seq} to {group} failed after {attempts} attempts")]
    DeliveryFailed {
        topic: String,
        seq: u64,
        group: String,
        attempts: u32,
    },
    #[error("invalid delivery mode: {0}")]
    InvalidMode(&'static str),
    #[error("transport I/O: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteRoute {
    pub group: String,
    pub addr: SocketAddr,
    pub mode: DeliveryMode,
}

/// Drop outgoing data datagrams with a fixed probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultInjection {
    pub drop_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct BusConfig {
    pub topics: BTreeSet<String>,
    /// Receive endpoint of this process group, if any remote group sends to it.
    pub listen: Option<SocketAddr>,
    pub routes: HashMap<String, Vec<RemoteRoute>>,
    pub fault: Option<FaultInjection>,
    /// Fragment payload size; 0 selects [`wire::MAX_FRAGMENT_PAYLOAD`].
    pub max_fragment: usize,
}

impl BusConfig {
    pub fn local<I, S>(topics: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            topics: topics.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Default)]
pub struct BusStats {
    pub remote_delivered: AtomicU64,
    pub duplicates: AtomicU64,
    pub acks_sent: AtomicU64,
    pub retransmissions: AtomicU64,
    pub injected_drops: AtomicU64,
    pub expired_partials: AtomicU64,
}

struct Shared {
    topics: BTreeSet<String>,
    by_hash: RwLock<HashMap<u64, Arc<str>>>,
    local: RwLock<HashMap<String, Vec<Arc<SubscriptionQueue>>>>,
    registered: Mutex<HashSet<(String, String, String)>>,
    stop: AtomicBool,
    stats: BusStats,
}

impl Shared {
    fn deliver_local(&self, env: Arc<MessageEnvelope>) {
        let local = self.local.read().unwrap();
        if let Some(queues) = local.get(&*env.topic) {
            for q in queues {
                q.push(env.clone());
            }
        }
    }
}

/// A node's identity on the bus: its name, trace producer and wake-up signal.
#[derive(Clone)]
pub struct NodeHandle {
    pub name: Arc<str>,
    pub trace: TraceProducer,
    pub notifier: Arc<Notifier>,
}

pub struct Bus {
    shared: Arc<Shared>,
    config: BusConfig,
    trace: Arc<TraceSession>,
    local_addr: Option<SocketAddr>,
    receiver: Mutex<Option<JoinHandle<()>>>,
    next_source: AtomicU64,
}

impl Bus {
    pub fn new(config: BusConfig, trace: Arc<TraceSession>) -> Result<Arc<Bus>, MiddlewareError> {
        let by_hash = config
            .topics
            .iter()
            .map(|t| (wire::topic_hash(t), Arc::<str>::from(t.as_str())))
            .collect();
        let shared = Arc::new(Shared {
            topics: config.topics.clone(),
            by_hash: RwLock::new(by_hash),
            local: RwLock::new(HashMap::new()),
            registered: Mutex::new(HashSet::new()),
            stop: AtomicBool::new(false),
            stats: BusStats::default(),
        });
        let (receiver, local_addr) = match config.listen {
            Some(addr) => {
                let socket = bind_udp(addr)?;
                let local_addr = socket.local_addr()?;
                socket.set_read_timeout(Some(Duration::from_millis(20)))?;
                let shared = shared.clone();
                let handle = std::thread::Builder::new()
                    .name("bus-rx".into())
                    .spawn(move || receive_loop(socket, shared))?;
                (Some(handle), Some(local_addr))
            }
            None => (None, None),
        };
        Ok(Arc::new(Bus {
            shared,
            config,
            trace,
            local_addr,
            receiver: Mutex::new(receiver),
            next_source: AtomicU64::new(1),
        }))
    }

    /// Bound receive address (useful when `listen` asked for port 0).
    pub fn local_addr(&self) -> Option<SocketAddr> {
        self.local_addr
    }

    pub fn stats(&self) -> &BusStats {
        &self.shared.stats
    }

    pub fn trace_session(&self) -> &Arc<TraceSession> {
        &self.trace
    }

    pub fn create_node(&self, name: &str) -> NodeHandle {
        self.create_node_with_notifier(name, Notifier::new())
    }

    /// Nodes served by one executor share its notifier.
    pub fn create_node_with_notifier(&self, name: &str, notifier: Arc<Notifier>) -> NodeHandle {
        NodeHandle {
            name: name.into(),
            trace: self.trace.producer(name),
            notifier,
        }
    }

    pub fn advertise(&self, node: &NodeHandle, topic: &str) -> Result<Publisher, MiddlewareError> {
        if !self.shared.topics.contains(topic) {
            return Err(MiddlewareError::UnknownTopic(topic.to_string()));
        }
        let routes = self.config.routes.get(topic).cloned().unwrap_or_default();
        for r in &routes {
            if let DeliveryMode::Reliable { ack_timeout_ns: 0, .. } = r.mode {
                return Err(MiddlewareError::InvalidMode("ack_timeout must be > 0"));
            }
        }
        let source = (std::process::id() as u64) << 32
            | self.next_source.fetch_add(1, Ordering::Relaxed);
        let remote = if routes.is_empty() {
            None
        } else {
            let socket = bind_udp("127.0.0.1:0".parse().unwrap())?;
            let fault = self.config.fault.map(|f| {
                (f.drop_rate, ChaCha8Rng::seed_from_u64(f.seed ^ wire::topic_hash(topic) ^ source))
            });
            Some(Mutex::new(RemoteSender {
                socket,
                routes,
                fault,
                max_fragment: if self.config.max_fragment == 0 {
                    wire::MAX_FRAGMENT_PAYLOAD
                } else {
                    self.config.max_fragment
                },
            }))
        };
        Ok(Publisher {
            topic: topic.into(),
            hash: wire::topic_hash(topic),
            seq: AtomicU64::new(0),
            source,
            shared: self.shared.clone(),
            trace: node.trace.clone(),
            remote,
        })
    }

    pub fn subscribe<F>(
        &self,
        node: &NodeHandle,
        topic: &str,
        qos: QosPolicy,
        callback_name: &str,
        callback: F,
    ) -> Result<Subscription, MiddlewareError>
    where
        F: FnMut(&MessageEnvelope) + Send + 'static,
    {
        let key = (node.name.to_string(), topic.to_string(), callback_name.to_string());
        if !self.shared.registered.lock().unwrap().insert(key.clone()) {
            return Err(MiddlewareError::DuplicateSubscription {
                node: key.0,
                topic: key.1,
                callback: key.2,
            });
        }
        let queue = Arc::new(SubscriptionQueue::new(qos.depth.max(1), node.notifier.clone()));
        self.shared
            .local
            .write()
            .unwrap()
            .entry(topic.to_string())
            .or_default()
            .push(queue.clone());
        self.shared
            .by_hash
            .write()
            .unwrap()
            .entry(wire::topic_hash(topic))
            .or_insert_with(|| topic.into());
        Ok(Subscription {
            key,
            topic: topic.into(),
            queue,
            trace: node.trace.clone(),
            callback: Box::new(callback),
            failed: false,
            shared: self.shared.clone(),
        })
    }

    pub fn shutdown(&self) {
        self.shared.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.receiver.lock().unwrap().take() {
            let _ = h.join();
        }
    }
}

impl Drop for Bus {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn bind_udp(addr: SocketAddr) -> io::Result<UdpSocket> {
    const BUF: i32 = 64 * 1024 * 1024;
    let socket = UdpSocket::bind(addr)?;
    let fd = socket.as_raw_fd();
    for (force, plain) in [
        (libc::SO_RCVBUFFORCE, libc::SO_RCVBUF),
        (libc::SO_SNDBUFFORCE, libc::SO_SNDBUF),
    ] {
        // SAFETY: fd is a valid socket and the option value is an int.
        unsafe {
            let v = BUF;
            let p = &v as *const i32 as *const libc::c_void;
            let len = std::mem::size_of::<i32>() as libc::socklen_t;
            if libc::setsockopt(fd, libc::SOL_SOCKET, force, p, len) != 0 {
                libc::setsockopt(fd, libc::SOL_SOCKET, plain, p, len);
            }
        }
    }
    Ok(socket)
}

fn receive_loop(socket: UdpSocket, shared: Arc<Shared>) {
    let mut buf = vec![0u8; 65_536];
    let mut reasm = wire::Reassembler::new();
    let mut last_seq: HashMap<(SocketAddr, u64), u64> = HashMap::new();
    let mut last_expire = now_ns();
    while !shared.stop.load(Ordering::Relaxed) {
        let now = now_ns();
        if now - last_expire > 10_000_000 {
            let n = reasm.expire(now);
            shared.stats.expired_partials.fetch_add(n, Ordering::Relaxed);
            last_expire = now;
        }
        let (n, src) = match socket.recv_from(&mut buf) {
            Ok(x) => x,
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => continue,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => {
                log::warn!("bus receiver stopped: {e}");
                return;
            }
        };
        let Some(msg) = reasm.insert(src, &buf[..n], now) else {
            continue;
        };
        let reliable = msg.flags & wire::FLAG_RELIABLE != 0;
        let last = last_seq.entry((src, msg.topic_hash)).or_insert(0);
        if msg.seq <= *last {
            shared.stats.duplicates.fetch_add(1, Ordering::Relaxed);
        } else {
            *last = msg.seq;
            let topic = shared.by_hash.read().unwrap().get(&msg.topic_hash).cloned();
            if let Some(topic) = topic {
                let env = Arc::new(MessageEnvelope {
                    topic,
                    seq: msg.seq,
                    publish_ts: msg.publish_ts,
                    source: source_id(src),
                    payload: Arc::new(msg.payload),
                });
                shared.deliver_local(env);
                shared.stats.remote_delivered.fetch_add(1, Ordering::Relaxed);
            }
        }
        if reliable {
            let _ = socket.send_to(&wire::encode_ack(msg.topic_hash, msg.seq), src);
            shared.stats.acks_sent.fetch_add(1, Ordering::Relaxed);
        }
    }
}

fn source_id(addr: SocketAddr) -> u64 {
    match addr {
        SocketAddr::V4(a) => (u32::from(*a.ip()) as u64) << 16 | a.port() as u64,
        SocketAddr::V6(a) => a.port() as u64,
    }
}

struct RemoteSender {
    socket: UdpSocket,
    routes: Vec<RemoteRoute>,
    fault: Option<(f64, ChaCha8Rng)>,
    max_fragment: usize,
}

impl RemoteSender {
    fn send_all(&mut self, frags: &[Vec<u8>], addr: SocketAddr, stats: &BusStats) {
        for f in frags {
            if let Some((rate, rng)) = &mut self.fault {
                if rng.random::<f64>() < *rate {
                    stats.injected_drops.fetch_add(1, Ordering::Relaxed);
                    continue;
                }
            }
            // best effort: a full socket buffer is a loss like any other
            let _ = self.socket.send_to(f, addr);
        }
    }

    fn await_ack(&self, addr: SocketAddr, hash: u64, seq: u64, timeout_ns: u64) -> bool {
        let deadline = now_ns() + timeout_ns;
        let mut buf = [0u8; 64];
        loop {
            let now = now_ns();
            if now >= deadline || !wait_readable(&self.socket, deadline - now) {
                return false;
            }
            match self.socket.recv_from(&mut buf) {
                Ok((n, from)) => {
                    if from == addr && wire::decode_ack(&buf[..n]) == Some((hash, seq)) {
                        return true;
                    }
                }
                Err(_) => return false,
            }
        }
    }
}

/// Wait until `socket` has a datagram queued. Socket receive timeouts are
/// rounded up to the scheduler tick; ppoll uses high-resolution timers.
fn wait_readable(socket: &UdpSocket, timeout_ns: u64) -> bool {
    let mut pfd = libc::pollfd {
        fd: socket.as_raw_fd(),
        events: libc::POLLIN,
        revents: 0,
    };
    let ts = libc::timespec {
        tv_sec: (timeout_ns / 1_000_000_000) as libc::time_t,
        tv_nsec: (timeout_ns % 1_000_000_000) as libc::c_long,
    };
    // SAFETY: one valid pollfd, a valid timespec and no signal mask.
    let n = unsafe { libc::ppoll(&mut pfd, 1, &ts, std::ptr::null()) };
    n > 0 && pfd.revents & libc::POLLIN != 0
}

/// Publishing side of one topic for one node.
pub struct Publisher {
    topic: Arc<str>,
    hash: u64,
    seq: AtomicU64,
    source: u64,
    shared: Arc<Shared>,
    trace: TraceProducer,
    remote: Option<Mutex<RemoteSender>>,
}

impl Publisher {
    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn source(&self) -> u64 {
        self.source
    }

    pub fn has_remote_routes(&self) -> bool {
        self.remote.is_some()
    }

    /// Stamp, trace and deliver one message. Returns its seq.
    ///
    /// Best-effort routes never fail. Reliable routes retransmit until acked
    /// and fail with [`MiddlewareError::DeliveryFailed`] once `max_retries`
    /// retransmissions went unanswered.
    pub fn publish(&self, payload: impl Into<Payload>) -> Result<u64, MiddlewareError> {
        let payload = payload.into();
        let seq = self.seq.fetch_add(1, Ordering::Relaxed) + 1;
        let mut publish_ts = self.trace.record(EventKind::Publish {
            topic: self.topic.clone(),
            seq,
        });
        if publish_ts == 0 {
            publish_ts = now_ns();
        }
        let env = Arc::new(MessageEnvelope {
            topic: self.topic.clone(),
            seq,
            publish_ts,
            source: self.source,
            payload,
        });
        self.shared.deliver_local(env.clone());

        let Some(remote) = &self.remote else {
            return Ok(seq);
        };
        let mut remote = remote.lock().unwrap();
        let stats = &self.shared.stats;
        for ri in 0..remote.routes.len() {
            let route = remote.routes[ri].clone();
            let flags = if route.mode.is_reliable() { wire::FLAG_RELIABLE } else { 0 };
            let frags = wire::fragment(self.hash, seq, publish_ts, flags, &env.payload, remote.max_fragment);
            match route.mode {
                DeliveryMode::BestEffort => remote.send_all(&frags, route.addr, stats),
                DeliveryMode::Reliable {
                    ack_timeout_ns,
                    max_retries,
                } => {
                    let mut acked = false;
                    for attempt in 0..=max_retries {
                        if attempt > 0 {
                            stats.retransmissions.fetch_add(1, Ordering::Relaxed);
                        }
                        remote.send_all(&frags, route.addr, stats);
                        if remote.await_ack(route.addr, self.hash, seq, ack_timeout_ns) {
                            acked = true;
                            break;
                        }
                    }
                    if !acked {
                        return Err(MiddlewareError::DeliveryFailed {
                            topic: self.topic.to_string(),
                            seq,
                            group: route.group.clone(),
                            attempts: max_retries + 1,
                        });
                    }
                }
            }
        }
        Ok(seq)
    }
}

/// Timing of one dispatched subscription callback.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dispatch {
    pub seq: u64,
    pub start: u64,
    pub end: u64,
    pub panicked: bool,
}

/// Receiving side: a keep-last queue plus the user callback.
pub struct Subscription {
    key: (String, String, String),
    topic: Arc<str>,
    queue: Arc<SubscriptionQueue>,
    trace: TraceProducer,
    callback: Box<dyn FnMut(&MessageEnvelope) + Send>,
    failed: bool,
    shared: Arc<Shared>,
}

impl Subscription {
    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn callback_name(&self) -> &str {
        &self.key.2
    }

    pub fn queue(&self) -> &Arc<SubscriptionQueue> {
        &self.queue
    }

    pub fn has_failed(&self) -> bool {
        self.failed
    }

    /// Pop the next envelope and run the callback between
    /// `sub_cb_start` / `sub_cb_end` trace events. A panicking callback is
    /// contained and marks the subscription failed.
    pub fn dispatch_next(&mut self) -> Option<Dispatch> {
        let env = self.queue.pop()?;
        let start = self.trace.record(EventKind::SubCbStart {
            topic: env.topic.clone(),
            seq: env.seq,
        });
        let cb = &mut self.callback;
        let panicked = catch_unwind(AssertUnwindSafe(|| cb(&env))).is_err();
        if panicked {
            log::error!(
                "callback `{}` of `{}` on `{}` panicked",
                self.key.2,
                self.key.0,
                self.topic
            );
            self.failed = true;
        }
        let end = self.trace.record(EventKind::SubCbEnd {
            topic: env.topic.clone(),
            seq: env.seq,
        });
        Some(Dispatch {
            seq: env.seq,
            start,
            end,
            panicked,
        })
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        self.queue.close();
        if let Some(v) = self.shared.local.write().unwrap().get_mut(&*self.topic) {
            v.retain(|q| !Arc::ptr_eq(q, &self.queue));
        }
        self.shared.registered.lock().unwrap().remove(&self.key);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    fn bus(topics: &[&str]) -> (Arc<Bus>, Arc<TraceSession>) {
        let trace = TraceSession::new("t");
        (Bus::new(BusConfig::local(topics.iter().copied()), trace.clone()).unwrap(), trace)
    }

    #[test]
    fn advertise_and_publish_once() {
        let (bus, trace) = bus(&["x"]);
        let node = bus.create_node("n");
        let p = bus.advertise(&node, "x").unwrap();
        assert_eq!(p.publish(vec![1u8]).unwrap(), 1);
        let log = trace.drain();
        assert_eq!(log.events.len(), 1);
        assert_eq!(log.events[0].kind, EventKind::publish("x", 1));
    }

    #[test]
    fn independent_seq_counters() {
        let (bus, _) = bus(&["x"]);
        let a = bus.advertise(&bus.create_node("a"), "x").unwrap();
        let b = bus.advertise(&bus.create_node("b"), "x").unwrap();
        assert_eq!(a.publish(vec![]).unwrap(), 1);
        assert_eq!(a.publish(vec![]).unwrap(), 2);
        assert_eq!(b.publish(vec![]).unwrap(), 1);
    }

    #[test]
    fn unknown_topic() {
        let (bus, _) = bus(&["x"]);
        assert!(matches!(
            bus.advertise(&bus.create_node("a"), "y"),
            Err(MiddlewareError::UnknownTopic(_))
        ));
    }

    #[test]
    fn duplicate_subscription() {
        let (bus, _) = bus(&["x"]);
        let n = bus.create_node("a");
        let _s = bus.subscribe(&n, "x", QosPolicy::default(), "cb", |_| {}).unwrap();
        assert!(matches!(
            bus.subscribe(&n, "x", QosPolicy::default(), "cb", |_| {}),
            Err(MiddlewareError::DuplicateSubscription { .. })
        ));
        // a different callback name is fine
        bus.subscribe(&n, "x", QosPolicy::default(), "cb2", |_| {}).unwrap();
    }

    #[test]
    fn keep_last_one_delivers_latest() {
        let (bus, trace) = bus(&["x"]);
        let p = bus.advertise(&bus.create_node("p"), "x").unwrap();
        let seen = Arc::new(Mutex::new(Vec::new()));
        let s2 = seen.clone();
        let mut sub = bus
            .subscribe(&bus.create_node("s"), "x", QosPolicy::keep_last(1), "cb", move |e| {
                s2.lock().unwrap().push(e.seq)
            })
            .unwrap();
        for _ in 0..3 {
            p.publish(vec![]).unwrap();
        }
        let d = sub.dispatch_next().unwrap();
        assert_eq!(d.seq, 3);
        assert!(sub.dispatch_next().is_none());
        assert_eq!(*seen.lock().unwrap(), vec![3]);
        assert_eq!(sub.queue().stats().evicted, 2);
        let log = trace.drain();
        let kinds: Vec<&str> = log.events.iter().map(|e| e.kind.name()).collect();
        assert_eq!(kinds, vec!["publish", "publish", "publish", "sub_cb_start", "sub_cb_end"]);
    }

    #[test]
    fn panicking_callback_is_contained() {
        let (bus, trace) = bus(&["x"]);
        let p = bus.advertise(&bus.create_node("p"), "x").unwrap();
        let mut sub = bus
            .subscribe(&bus.create_node("s"), "x", QosPolicy::default(), "cb", |_| panic!("boom"))
            .unwrap();
        p.publish(vec![]).unwrap();
        let d = sub.dispatch_next().unwrap();
        assert!(d.panicked);
        assert!(sub.has_failed());
        assert!(trace.drain().check_nesting().is_ok());
    }

    #[test]
    fn dropped_subscription_stops_receiving() {
        let (bus, _) = bus(&["x"]);
        let p = bus.advertise(&bus.create_node("p"), "x").unwrap();
        let count = Arc::new(AtomicUsize::new(0));
        let n = bus.create_node("s");
        let sub = bus.subscribe(&n, "x", QosPolicy::default(), "cb", |_| {}).unwrap();
        let q = sub.queue().clone();
        drop(sub);
        p.publish(vec![]).unwrap();
        assert!(q.is_empty());
        // name can be reused after drop
        let c = count.clone();
        bus.subscribe(&n, "x", QosPolicy::default(), "cb", move |_| {
            c.fetch_add(1, Ordering::Relaxed);
        })
        .unwrap();
    }
}
