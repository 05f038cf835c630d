//! Node executors.
//!
//! A worker thread serves one or more nodes and runs their callbacks one at
//! a time, so callbacks of a node never overlap. Timers fire at
//! `t0 + k * period`; a worker that falls behind keeps at most one pending
//! firing per timer.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::compute::{busy_compute, sample_duration};
use super::WorkloadError;
use crate::clock::now_ns;
use crate::middleware::{wire::topic_hash, Bus, NodeHandle, Notifier, Payload, Publisher, Subscription};
use crate::model::{ComputeModel, NodeSpec, TimerSpec};
use crate::trace::EventKind;

#[derive(Debug, Clone, Copy)]
pub struct ExecutorConfig {
    /// Worker threads; `None` gives every node its own worker.
    pub workers: Option<usize>,
    pub seed: u64,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self {
            workers: None,
            seed: 0x5eed,
        }
    }
}

#[derive(Default)]
struct NodeState {
    latest: HashMap<Arc<str>, u64>,
    last_any: Option<(Arc<str>, u64)>,
}

struct Outputs {
    by_callback: HashMap<String, Vec<(Publisher, Payload)>>,
}

impl Outputs {
    fn publish(&self, callback: &str, node: &str) {
        if let Some(pubs) = self.by_callback.get(callback) {
            for (p, payload) in pubs {
                if let Err(e) = p.publish(payload.clone()) {
                    log::warn!("{node}: {e}");
                }
            }
        }
    }
}

struct Compute {
    model: ComputeModel,
    rng: ChaCha8Rng,
    drawn: Vec<u64>,
    record: bool,
}

impl Compute {
    fn run(&mut self) {
        let d = sample_duration(&self.model, &mut self.rng);
        if self.record {
            self.drawn.push(d);
        }
        busy_compute(d);
    }
}

struct TimerState {
    spec: TimerSpec,
    t0: u64,
    k: u64,
    fired: u64,
}

impl TimerState {
    fn next_target(&self) -> u64 {
        self.t0 + self.k * self.spec.period_ns
    }

    /// Advance after a firing; at most one already-due target stays pending.
    fn advance(&mut self, now: u64) {
        let latest_due = (now - self.t0) / self.spec.period_ns;
        self.k = (self.k + 1).max(latest_due);
        self.fired += 1;
    }
}

/// Wired node: its subscriptions, timers, publishers and compute model.
pub struct NodeRuntime {
    pub spec: NodeSpec,
    handle: NodeHandle,
    subs: Vec<Subscription>,
    timers: Vec<TimerState>,
    state: Arc<Mutex<NodeState>>,
    outputs: Arc<Outputs>,
    compute: Arc<Mutex<Compute>>,
    failed: bool,
}

impl NodeRuntime {
    /// Advertise, subscribe and seed the compute RNG. Emits `node_ready`.
    pub fn new(
        bus: &Bus,
        spec: NodeSpec,
        notifier: Arc<Notifier>,
        seed: u64,
    ) -> Result<Self, WorkloadError> {
        let handle = bus.create_node_with_notifier(&spec.name, notifier);
        let mut by_callback: HashMap<String, Vec<(Publisher, Payload)>> = HashMap::new();
        for p in &spec.publications {
            let publisher = bus.advertise(&handle, &p.topic)?;
            by_callback
                .entry(p.trigger.clone())
                .or_default()
                .push((publisher, Arc::new(vec![0u8; p.payload_size])));
        }
        let outputs = Arc::new(Outputs { by_callback });
        let state = Arc::new(Mutex::new(NodeState::default()));
        let compute = Arc::new(Mutex::new(Compute {
            model: spec.compute.clone(),
            rng: ChaCha8Rng::seed_from_u64(seed ^ topic_hash(&spec.name)),
            drawn: Vec::new(),
            record: false,
        }));

        let mut subs = Vec::new();
        for s in &spec.subscriptions {
            let (state, outputs, compute) = (state.clone(), outputs.clone(), compute.clone());
            let callback = s.callback.clone();
            let node_name = spec.name.clone();
            let sub = bus.subscribe(&handle, &s.topic, s.qos, &s.callback, move |env| {
                {
                    let mut st = state.lock().unwrap();
                    st.latest.insert(env.topic.clone(), env.seq);
                    st.last_any = Some((env.topic.clone(), env.seq));
                }
                compute.lock().unwrap().run();
                outputs.publish(&callback, &node_name);
            })?;
            subs.push(sub);
        }
        let timers = spec
            .timers
            .iter()
            .map(|t| TimerState {
                spec: t.clone(),
                t0: 0,
                k: 1,
                fired: 0,
            })
            .collect();
        handle.trace.record(EventKind::NodeReady);
        Ok(Self {
            spec,
            handle,
            subs,
            timers,
            state,
            outputs,
            compute,
            failed: false,
        })
    }

    /// Keep every drawn compute duration (for determinism checks).
    pub fn record_compute_draws(&self) {
        self.compute.lock().unwrap().record = true;
    }

    fn start_timers(&mut self, t0: u64) {
        for t in &mut self.timers {
            t.t0 = t0;
            t.k = 1;
        }
    }

    fn next_deadline(&self) -> Option<u64> {
        self.timers.iter().map(TimerState::next_target).min()
    }

    fn fire_timer(&mut self, idx: usize) {
        let consumed = {
            let st = self.state.lock().unwrap();
            match &self.timers[idx].spec.reads {
                Some(topic) => st
                    .latest
                    .get_key_value(topic.as_str())
                    .map(|(t, s)| (t.clone(), *s)),
                None => st.last_any.clone(),
            }
        };
        let trace = &self.handle.trace;
        trace.record(EventKind::TimerCbStart { consumed });
        let callback = self.timers[idx].spec.callback.clone();
        let (compute, outputs, name) = (&self.compute, &self.outputs, &self.spec.name);
        let ok = catch_unwind(AssertUnwindSafe(|| {
            compute.lock().unwrap().run();
            outputs.publish(&callback, name);
        }))
        .is_ok();
        if !ok {
            log::error!("timer callback `{callback}` of `{name}` panicked");
            self.failed = true;
        }
        trace.record(EventKind::TimerCbEnd);
        self.timers[idx].advance(now_ns());
    }

    /// One executor pass: due timers first, then one message per subscription.
    fn spin_once(&mut self, now: u64) -> bool {
        let mut worked = false;
        for i in 0..self.timers.len() {
            if now >= self.timers[i].next_target() {
                self.fire_timer(i);
                worked = true;
            }
        }
        for s in &mut self.subs {
            if let Some(d) = s.dispatch_next() {
                worked = true;
                if d.panicked {
                    self.failed = true;
                }
            }
        }
        worked
    }

    fn report(&self) -> NodeReport {
        NodeReport {
            name: self.spec.name.clone(),
            timer_firings: self.timers.iter().map(|t| t.fired).sum(),
            failed: self.failed,
            compute_draws: std::mem::take(&mut self.compute.lock().unwrap().drawn),
            evicted: self.subs.iter().map(|s| s.queue().stats().evicted).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct NodeReport {
    pub name: String,
    pub timer_firings: u64,
    pub failed: bool,
    pub compute_draws: Vec<u64>,
    /// Envelopes overwritten in this node's keep-last queues.
    pub evicted: u64,
}

fn worker_loop(mut nodes: Vec<NodeRuntime>, notifier: Arc<Notifier>, stop: Arc<AtomicBool>) -> Vec<NodeReport> {
    let t0 = now_ns();
    for n in &mut nodes {
        n.start_timers(t0);
    }
    while !stop.load(Ordering::Relaxed) {
        let now = now_ns();
        let mut worked = false;
        for n in &mut nodes {
            worked |= n.spin_once(now);
        }
        if !worked {
            let deadline = nodes
                .iter()
                .filter_map(NodeRuntime::next_deadline)
                .min()
                .unwrap_or(u64::MAX)
                .min(now_ns() + 50_000_000);
            notifier.wait_until(deadline);
        }
    }
    nodes.iter().map(NodeRuntime::report).collect()
}

/// Run a single node until `stop` is set.
pub fn run_node(runtime: NodeRuntime, notifier: Arc<Notifier>, stop: Arc<AtomicBool>) -> NodeReport {
    worker_loop(vec![runtime], notifier, stop)
        .pop()
        .expect("one node in, one report out")
}

/// Every node of one process, spread over worker threads.
pub struct NodeHost {
    stop: Arc<AtomicBool>,
    notifiers: Vec<Arc<Notifier>>,
    workers: Vec<JoinHandle<Vec<NodeReport>>>,
}

impl NodeHost {
    pub fn start(bus: &Arc<Bus>, nodes: Vec<NodeSpec>, cfg: ExecutorConfig) -> Result<Self, WorkloadError> {
        Self::start_with(bus, nodes, cfg, false)
    }

    pub fn start_with(
        bus: &Arc<Bus>,
        nodes: Vec<NodeSpec>,
        cfg: ExecutorConfig,
        record_draws: bool,
    ) -> Result<Self, WorkloadError> {
        let worker_count = cfg.workers.unwrap_or(nodes.len()).clamp(1, nodes.len().max(1));
        let notifiers: Vec<Arc<Notifier>> = (0..worker_count).map(|_| Notifier::new()).collect();
        let mut groups: Vec<Vec<NodeRuntime>> = (0..worker_count).map(|_| Vec::new()).collect();
        for (i, spec) in nodes.into_iter().enumerate() {
            let w = i % worker_count;
            let rt = NodeRuntime::new(bus, spec, notifiers[w].clone(), cfg.seed)?;
            if record_draws {
                rt.record_compute_draws();
            }
            groups[w].push(rt);
        }
        let stop = Arc::new(AtomicBool::new(false));
        let mut workers = Vec::new();
        for (i, g) in groups.into_iter().enumerate() {
            let (n, s) = (notifiers[i].clone(), stop.clone());
            let name = format!("exec-{}", g.first().map_or("idle", |r| r.spec.name.as_str()));
            workers.push(
                std::thread::Builder::new()
                    .name(name)
                    .spawn(move || worker_loop(g, n, s))
                    .map_err(|e| WorkloadError::Spawn(e.to_string()))?,
            );
        }
        Ok(Self {
            stop,
            notifiers,
            workers,
        })
    }

    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }

    /// Stop all workers and collect per-node reports.
    pub fn stop(self) -> Vec<NodeReport> {
        self.stop.store(true, Ordering::Relaxed);
        for n in &self.notifiers {
            n.notify();
        }
        let mut reports = Vec::new();
        for w in self.workers {
            match w.join() {
                Ok(r) => reports.extend(r),
                Err(_) => log::error!("executor worker panicked"),
            }
        }
        reports.sort_by(|a, b| a.name.cmp(&b.name));
        reports
    }
}
