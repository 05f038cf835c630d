//! Benchmark nodes and their placement into processes.
//!
//! Both benchmarks are a pair of nodes: an active one (ping, playback) that
//! drives the run and returns a result, and a passive one (pong, worker)
//! that reacts until stopped. `in_process` runs both as threads of the
//! caller, `single_group` runs both in one child, `multi_group` runs each in
//! its own child process group.

use std::collections::BTreeSet;
use std::net::{SocketAddr, UdpSocket};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::clock::{now_ns, sleep_until};
use crate::middleware::{Bus, BusConfig, DeliveryMode, MessageEnvelope, RemoteRoute};
use crate::model::{DeploymentPlan, DeploymentVariant, QosPolicy};
use crate::orchestrator::{
    install_stop_handler, spawn_group, stop_requested, terminate_group, wait_exit, SampleScope, EXIT_CONFIG,
    EXIT_OK, EXIT_RUNTIME,
};
use crate::trace::{write_trace_file, TraceLog, TraceSession};
use crate::workload::busy_compute;

pub const PING_TOPIC: &str = "bench/ping";
pub const PONG_TOPIC: &str = "bench/pong";
pub const FRAME_TOPIC: &str = "bench/frames";
pub const RESULT_TOPIC: &str = "bench/result";

pub const PLAYBACK_NODE: &str = "Playback";
pub const WORKER_NODE: &str = "Worker";

/// How long warm-up waits for the peer before giving up.
const WARMUP_LIMIT_NS: u64 = 10_000_000_000;
/// Warm-up tags have the top bit set so they never collide with real pings.
const WARMUP_TAG: u64 = 1 << 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Ping,
    Pong,
    Playback,
    Worker,
}

impl Role {
    fn publishes(self) -> &'static str {
        match self {
            Role::Ping => PING_TOPIC,
            Role::Pong => PONG_TOPIC,
            Role::Playback => FRAME_TOPIC,
            Role::Worker => RESULT_TOPIC,
        }
    }

    fn subscribes(self) -> &'static str {
        match self {
            Role::Ping => PONG_TOPIC,
            Role::Pong => PING_TOPIC,
            Role::Playback => RESULT_TOPIC,
            Role::Worker => FRAME_TOPIC,
        }
    }

    fn is_active(self) -> bool {
        matches!(self, Role::Ping | Role::Playback)
    }

    fn node(self) -> &'static str {
        match self {
            Role::Ping => "Ping",
            Role::Pong => "Pong",
            Role::Playback => PLAYBACK_NODE,
            Role::Worker => WORKER_NODE,
        }
    }
}

/// Frame pacing of the playback node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pacing {
    /// One frame every `period_ns` on an absolute schedule.
    Period { period_ns: u64 },
    /// Next frame as soon as the previous result arrived.
    ClosedLoop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Params {
    PingPong {
        size: usize,
        duration_ns: u64,
        timeout_ns: u64,
        seed: u64,
    },
    Rate {
        pacing: Pacing,
        payload: usize,
        compute_ns: u64,
        iterations: u32,
        iteration_ns: u64,
        timeout_ns: u64,
    },
}

/// Configuration handed to a `--role bench-host` child as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchHostConfig {
    pub run_id: String,
    pub roles: Vec<Role>,
    pub mode: DeliveryMode,
    pub listen: Option<SocketAddr>,
    pub peer: Option<SocketAddr>,
    pub params: Params,
    /// Where the active role writes its [`RoleOutput`].
    pub result_path: PathBuf,
    /// Where this process writes its trace.
    pub trace_path: PathBuf,
    /// A passive child exits on its own after this long.
    pub max_lifetime_ns: u64,
}

/// Result of a ping-pong run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PingPongResult {
    pub message_size: usize,
    pub mean_rtt_us: f64,
    /// Completed round trips.
    pub packet_count: u64,
    pub sent: u64,
    pub lost: u64,
    /// Round trips whose echo differed from what was sent.
    pub echo_errors: u64,
    pub rtt_ns: Vec<u64>,
}

/// Timing windows of one playback run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlaybackOutput {
    /// `[start, end)` of each iteration, monotonic ns.
    pub windows: Vec<(u64, u64)>,
    pub timeouts: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleOutput {
    PingPong(PingPongResult),
    Playback(PlaybackOutput),
}

/// Where the two nodes of a benchmark run and how to start children.
#[derive(Debug, Clone)]
pub struct Launcher {
    /// Executable started with `--role bench-host`; defaults to the current one.
    pub exe: Option<PathBuf>,
    pub work_dir: PathBuf,
}

impl Default for Launcher {
    fn default() -> Self {
        Self {
            exe: None,
            work_dir: std::env::temp_dir().join(format!("chainbench-bench-{}", std::process::id())),
        }
    }
}

/// Everything a finished two-node run leaves behind.
pub struct PairRun {
    pub output: RoleOutput,
    pub trace: TraceLog,
}

fn bus_for(roles: &[Role], mode: DeliveryMode, listen: Option<SocketAddr>, peer: Option<SocketAddr>) -> BusConfig {
    let topics = [PING_TOPIC, PONG_TOPIC, FRAME_TOPIC, RESULT_TOPIC];
    let mut cfg = BusConfig::local(topics);
    cfg.listen = listen;
    if let Some(peer) = peer {
        let here: BTreeSet<&str> = roles.iter().map(|r| r.subscribes()).collect();
        for r in roles {
            let topic = r.publishes();
            if !here.contains(topic) {
                cfg.routes.insert(
                    topic.to_string(),
                    vec![RemoteRoute {
                        group: "peer".into(),
                        addr: peer,
                        mode,
                    }],
                );
            }
        }
    }
    cfg
}

/// Run `roles` on one bus until the active role finishes (or, with only
/// passive roles, until `stop` is set).
fn run_roles(
    bus: &Arc<Bus>,
    roles: &[Role],
    params: &Params,
    stop: &Arc<AtomicBool>,
) -> Result<Option<RoleOutput>, BenchError> {
    let mut passive = Vec::new();
    for &r in roles.iter().filter(|r| !r.is_active()) {
        let bus = bus.clone();
        let params = params.clone();
        let stop = stop.clone();
        passive.push(
            std::thread::Builder::new()
                .name(r.node().into())
                .spawn(move || run_passive(&bus, r, &params, &stop))
                .map_err(|e| BenchError::Spawn(e.to_string()))?,
        );
    }
    let active = roles.iter().copied().find(|r| r.is_active());
    let out = match active {
        Some(r) => {
            let out = run_active(bus, r, params);
            stop.store(true, Ordering::Relaxed);
            Some(out)
        }
        None => None,
    };
    for h in passive {
        h.join().map_err(|_| BenchError::Runtime("passive node panicked".into()))??;
    }
    out.transpose()
}

fn run_passive(bus: &Arc<Bus>, role: Role, params: &Params, stop: &AtomicBool) -> Result<(), BenchError> {
    let notifier = crate::middleware::Notifier::new();
    let node = bus.create_node_with_notifier(role.node(), notifier.clone());
    let publisher = bus.advertise(&node, role.publishes())?;
    let compute_ns = match params {
        Params::Rate { compute_ns, .. } => *compute_ns,
        Params::PingPong { .. } => 0,
    };
    let callback = match role {
        Role::Pong => "on_ping",
        _ => "on_frame",
    };
    let mut sub = bus.subscribe(&node, role.subscribes(), QosPolicy::keep_last(1), callback, move |env: &MessageEnvelope| {
        busy_compute(compute_ns);
        let payload = if role == Role::Pong {
            env.payload.clone()
        } else {
            Arc::new(env.seq.to_le_bytes().to_vec())
        };
        if let Err(e) = publisher.publish(payload) {
            log::warn!("{}: {e}", role.node());
        }
    })?;
    while !stop.load(Ordering::Relaxed) && !stop_requested() {
        notifier.wait_until(now_ns() + 50_000_000);
        while sub.dispatch_next().is_some() {}
    }
    Ok(())
}

fn run_active(bus: &Arc<Bus>, role: Role, params: &Params) -> Result<RoleOutput, BenchError> {
    let node = bus.create_node(role.node());
    let publisher = bus.advertise(&node, role.publishes())?;
    let sub = bus.subscribe(&node, role.subscribes(), QosPolicy::keep_last(1), "on_reply", |_| {})?;
    let queue = sub.queue().clone();
    match *params {
        Params::PingPong {
            size,
            duration_ns,
            timeout_ns,
            seed,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut body = vec![0u8; size];
            rng.fill_bytes(&mut body);
            // wait until the peer answers
            let limit = now_ns() + WARMUP_LIMIT_NS;
            let mut warm = WARMUP_TAG;
            loop {
                if size >= 8 {
                    body[..8].copy_from_slice(&warm.to_le_bytes());
                }
                let _ = publisher.publish(body.clone());
                let answered = queue
                    .pop_wait(Duration::from_millis(100))
                    .is_some_and(|env| size < 8 || env.payload[..8] == warm.to_le_bytes());
                if answered {
                    break;
                }
                if now_ns() > limit {
                    return Err(BenchError::Runtime("ping-pong peer never answered".into()));
                }
                warm += 1;
            }
            std::thread::sleep(Duration::from_millis(20));
            while queue.pop().is_some() {}
            Ok(RoleOutput::PingPong(ping_loop(
                &publisher, &queue, &mut rng, size, duration_ns, timeout_ns,
            )?))
        }
        Params::Rate {
            pacing,
            payload,
            iterations,
            iteration_ns,
            timeout_ns,
            ..
        } => {
            let frame = Arc::new(vec![0u8; payload]);
            let limit = now_ns() + WARMUP_LIMIT_NS;
            loop {
                publisher.publish(frame.clone()).ok();
                if queue.pop_wait(Duration::from_millis(200)).is_some() {
                    break;
                }
                if now_ns() > limit {
                    return Err(BenchError::Runtime("rate worker never answered".into()));
                }
            }
            let mut out = PlaybackOutput::default();
            for _ in 0..iterations {
                // let the worker go idle between iterations
                std::thread::sleep(Duration::from_millis(50));
                while queue.pop().is_some() {}
                let t0 = now_ns();
                let end = t0 + iteration_ns;
                match pacing {
                    Pacing::Period { period_ns } => {
                        let mut k = 0u64;
                        loop {
                            let target = t0 + k * period_ns;
                            if target >= end {
                                break;
                            }
                            sleep_until(target);
                            publisher.publish(frame.clone())?;
                            // skip targets already missed instead of bursting
                            let now = now_ns();
                            k = if t0 + (k + 1) * period_ns < now {
                                (now - t0) / period_ns + 1
                            } else {
                                k + 1
                            };
                        }
                    }
                    Pacing::ClosedLoop => {
                        while now_ns() < end {
                            publisher.publish(frame.clone())?;
                            if queue.pop_wait(Duration::from_nanos(timeout_ns)).is_none() {
                                out.timeouts += 1;
                            }
                        }
                    }
                }
                out.windows.push((t0, end.max(now_ns())));
            }
            // let the last frame finish
            std::thread::sleep(Duration::from_millis(50));
            Ok(RoleOutput::Playback(out))
        }
    }
}

fn ping_loop(
    publisher: &crate::middleware::Publisher,
    queue: &crate::middleware::SubscriptionQueue,
    rng: &mut ChaCha8Rng,
    size: usize,
    duration_ns: u64,
    timeout_ns: u64,
) -> Result<PingPongResult, BenchError> {
    let mut res = PingPongResult {
        message_size: size,
        ..Default::default()
    };
    let end = now_ns() + duration_ns;
    let mut body = vec![0u8; size];
    rng.fill_bytes(&mut body);
    let mut tag = 0u64;
    while now_ns() < end {
        tag += 1;
        if size >= 8 {
            body[..8].copy_from_slice(&tag.to_le_bytes());
        }
        let sent = Arc::new(body.clone());
        let t0 = now_ns();
        res.sent += 1;
        if publisher.publish(sent.clone()).is_err() {
            res.lost += 1;
            continue;
        }
        let deadline = t0 + timeout_ns;
        let mut done = false;
        while !done {
            let now = now_ns();
            if now >= deadline {
                break;
            }
            let Some(env) = queue.pop_wait(Duration::from_nanos(deadline - now)) else { continue };
            let t1 = now_ns();
            if size >= 8 && env.payload.len() >= 8 && env.payload[..8] != tag.to_le_bytes() {
                // a late echo of an earlier round trip
                continue;
            }
            if *env.payload != *sent {
                res.echo_errors += 1;
            }
            res.rtt_ns.push(t1 - t0);
            done = true;
        }
        if !done {
            res.lost += 1;
        }
    }
    res.packet_count = res.rtt_ns.len() as u64;
    res.mean_rtt_us = if res.rtt_ns.is_empty() {
        0.0
    } else {
        res.rtt_ns.iter().map(|&r| r as f64).sum::<f64>() / res.rtt_ns.len() as f64 / 1e3
    };
    Ok(res)
}

/// Entry point of a `--role bench-host` child. Returns the exit code.
pub fn run_bench_host(config: &Path) -> i32 {
    install_stop_handler();
    let cfg: BenchHostConfig = match std::fs::read_to_string(config)
        .map_err(|e| e.to_string())
        .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
    {
        Ok(c) => c,
        Err(e) => {
            log::error!("bench-host {}: {e}", config.display());
            return EXIT_CONFIG;
        }
    };
    let session = TraceSession::new(cfg.run_id.clone());
    let bus = match Bus::new(bus_for(&cfg.roles, cfg.mode, cfg.listen, cfg.peer), session.clone()) {
        Ok(b) => b,
        Err(e) => {
            log::error!("bench-host: {e}");
            return EXIT_RUNTIME;
        }
    };
    let stop = Arc::new(AtomicBool::new(false));
    if !cfg.roles.iter().any(|r| r.is_active()) {
        let flag = stop.clone();
        let lifetime = cfg.max_lifetime_ns;
        std::thread::spawn(move || {
            let end = now_ns() + lifetime;
            while now_ns() < end && !stop_requested() {
                std::thread::sleep(Duration::from_millis(50));
            }
            flag.store(true, Ordering::Relaxed);
        });
    }
    let result = run_roles(&bus, &cfg.roles, &cfg.params, &stop);
    bus.shutdown();
    let mut code = EXIT_OK;
    match result {
        Ok(Some(out)) => {
            let written = serde_json::to_string(&out)
                .map_err(|e| e.to_string())
                .and_then(|j| std::fs::write(&cfg.result_path, j).map_err(|e| e.to_string()));
            if let Err(e) = written {
                log::error!("bench-host: cannot write result: {e}");
                code = EXIT_RUNTIME;
            }
        }
        Ok(None) => {}
        Err(e) => {
            log::error!("bench-host: {e}");
            code = EXIT_RUNTIME;
        }
    }
    if let Err(e) = write_trace_file(&session.drain(), &cfg.trace_path) {
        log::error!("bench-host: cannot write trace: {e}");
        code = EXIT_RUNTIME;
    }
    code
}

fn free_port() -> Result<SocketAddr, BenchError> {
    Ok(UdpSocket::bind("127.0.0.1:0")?.local_addr()?)
}

/// Run a benchmark node pair under `plan`, returning the active role's
/// output and the merged trace. `on_start` receives the processes to sample.
#[allow(clippy::too_many_arguments)]
pub fn run_pair(
    active: Role,
    passive: Role,
    mode: DeliveryMode,
    params: &Params,
    plan: &DeploymentPlan,
    launcher: &Launcher,
    run_id: &str,
    lifetime_ns: u64,
    on_start: &mut dyn FnMut(SampleScope),
) -> Result<PairRun, BenchError> {
    if plan.variant == DeploymentVariant::InProcess {
        let session = TraceSession::new(run_id);
        let bus = Bus::new(bus_for(&[active, passive], mode, None, None), session.clone())?;
        on_start(SampleScope::Pids(vec![std::process::id() as i32]));
        let stop = Arc::new(AtomicBool::new(false));
        let out = run_roles(&bus, &[passive, active], params, &stop)?;
        bus.shutdown();
        let output = out.ok_or_else(|| BenchError::Runtime("no active role".into()))?;
        return Ok(PairRun {
            output,
            trace: session.drain(),
        });
    }

    std::fs::create_dir_all(&launcher.work_dir)?;
    let exe = match &launcher.exe {
        Some(p) => p.clone(),
        None => std::env::current_exe()?,
    };
    let result_path = launcher.work_dir.join(format!("{run_id}.result.json"));
    let _ = std::fs::remove_file(&result_path);
    // (group, roles, listen, peer)
    type Layout = Vec<(String, Vec<Role>, Option<SocketAddr>, Option<SocketAddr>)>;
    let layout: Layout = match plan.variant {
        DeploymentVariant::SingleGroup => vec![("pair".into(), vec![passive, active], None, None)],
        _ => {
            let (a, b) = (free_port()?, free_port()?);
            vec![
                (passive.node().to_lowercase(), vec![passive], Some(b), Some(a)),
                (active.node().to_lowercase(), vec![active], Some(a), Some(b)),
            ]
        }
    };
    let mut children = Vec::new();
    let mut trace_paths = Vec::new();
    for (name, roles, listen, peer) in layout {
        let trace_path = launcher.work_dir.join(format!("{run_id}.{name}.trace"));
        let _ = std::fs::remove_file(&trace_path);
        let cfg = BenchHostConfig {
            run_id: run_id.to_string(),
            roles,
            mode,
            listen,
            peer,
            params: params.clone(),
            result_path: result_path.clone(),
            trace_path: trace_path.clone(),
            max_lifetime_ns: lifetime_ns,
        };
        let cfg_path = launcher.work_dir.join(format!("{run_id}.{name}.json"));
        std::fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).map_err(|e| BenchError::Runtime(e.to_string()))?)?;
        let args = vec!["--role".into(), "bench-host".into(), "--config".into(), cfg_path.display().to_string()];
        let child = spawn_group(&exe, &args, &[], plan.affinity_for(&name))
            .map_err(|e| BenchError::Spawn(format!("{} ({}): {e}", name, exe.display())));
        match child {
            Ok(c) => children.push((name, c, cfg.roles.iter().any(|r| r.is_active()))),
            Err(e) => {
                for (_, c, _) in &mut children {
                    terminate_group(c, Duration::from_secs(2));
                }
                return Err(e);
            }
        }
        trace_paths.push(trace_path);
    }
    let pgids = children.iter().map(|(_, c, _)| c.id() as i32).collect();
    on_start(SampleScope::Groups(pgids));

    let mut failure = None;
    for (name, child, is_active) in &mut children {
        if !*is_active {
            continue;
        }
        match wait_exit(child, Duration::from_nanos(lifetime_ns)) {
            Some(Some(0)) => {}
            Some(code) => failure = Some(format!("{name} exited with {code:?}")),
            None => failure = Some(format!("{name} did not finish in time")),
        }
    }
    for (_, child, _) in &mut children {
        terminate_group(child, Duration::from_secs(5));
    }
    if let Some(f) = failure {
        return Err(BenchError::Runtime(f));
    }
    let text = std::fs::read_to_string(&result_path)?;
    let output: RoleOutput = serde_json::from_str(&text).map_err(|e| BenchError::Runtime(e.to_string()))?;
    let mut logs = Vec::new();
    for p in &trace_paths {
        logs.push(crate::trace::load_trace_file(p)?);
    }
    let trace = TraceLog::merge(logs)?;
    Ok(PairRun { output, trace })
}
