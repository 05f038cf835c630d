//! Ping-pong round trips over a message-size sweep, and frame-rate runs of
//! a playback → worker pair.

mod host;

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{jitter, mean_cpu, ResourceSample};
use crate::clock::now_ns;
use crate::middleware::{DeliveryMode, MiddlewareError};
use crate::model::{format_ms, DeploymentPlan, DeploymentVariant};
use crate::orchestrator::{ResourceSampler, DEFAULT_INTERVAL_NS, EXIT_CONFIG, EXIT_RUNTIME};
use crate::trace::{EventKind, TraceError, TraceLog};

pub use host::{
    run_bench_host, run_pair, BenchHostConfig, Launcher, Pacing, Params, PingPongResult, PlaybackOutput, Role,
    RoleOutput, FRAME_TOPIC, PING_TOPIC, PLAYBACK_NODE, PONG_TOPIC, RESULT_TOPIC, WORKER_NODE,
};

const KB: usize = 1024;
const MB: usize = 1024 * 1024;

/// The message sizes of the sweep: 1 KB, then 4 KB doubling up to 8 MB.
pub const DEFAULT_SWEEP_SIZES: [usize; 13] = [
    KB,
    4 * KB,
    8 * KB,
    16 * KB,
    32 * KB,
    64 * KB,
    128 * KB,
    256 * KB,
    512 * KB,
    MB,
    2 * MB,
    4 * MB,
    8 * MB,
];
pub const DEFAULT_REPEATS: usize = 3;
pub const DESK_SWEEP_DURATION_NS: u64 = 30_000_000_000;
pub const FULL_SWEEP_DURATION_NS: u64 = 30 * 60 * 1_000_000_000;
pub const DEFAULT_TIMEOUT_NS: u64 = 1_000_000_000;

/// 0.92 MB camera frame.
pub const DEFAULT_FRAME_BYTES: usize = 964_690;
pub const DESK_RATE_RUNS: u32 = 10;
pub const FULL_RATE_RUNS: u32 = 100;
pub const DEFAULT_ITERATIONS: u32 = 5;
pub const DEFAULT_ITERATION_NS: u64 = 2_000_000_000;
pub const DEFAULT_WORKER_COMPUTE_NS: u64 = 5_000_000;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("spawn failed: {0}")]
    Spawn(String),
    #[error("benchmark failed: {0}")]
    Runtime(String),
    #[error(transparent)]
    Middleware(#[from] MiddlewareError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

impl BenchError {
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        }
    }
}

fn unique_id(prefix: &str) -> String {
    format!("{prefix}-{}-{}", std::process::id(), now_ns())
}

#[derive(Debug, Clone)]
pub struct PingPongConfig {
    pub message_size: usize,
    pub mode: DeliveryMode,
    pub duration_ns: u64,
    pub deployment: DeploymentPlan,
    pub timeout_ns: u64,
    pub seed: u64,
    pub launcher: Launcher,
}

impl PingPongConfig {
    pub fn new(message_size: usize, mode: DeliveryMode, duration_ns: u64, variant: DeploymentVariant) -> Self {
        Self {
            message_size,
            mode,
            duration_ns,
            deployment: DeploymentPlan::new(variant),
            timeout_ns: DEFAULT_TIMEOUT_NS,
            seed: 0x9179,
            launcher: Launcher::default(),
        }
    }
}

/// Stop-and-wait round trips of `message_size` bytes for `duration_ns`.
pub fn pingpong_run(cfg: &PingPongConfig) -> Result<PingPongResult, BenchError> {
    if cfg.duration_ns == 0 {
        return Err(BenchError::Config("ping-pong duration must be > 0".into()));
    }
    if cfg.timeout_ns == 0 {
        return Err(BenchError::Config("ping-pong timeout must be > 0".into()));
    }
    let params = Params::PingPong {
        size: cfg.message_size,
        duration_ns: cfg.duration_ns,
        timeout_ns: cfg.timeout_ns,
        seed: cfg.seed,
    };
    // warm-up plus the run plus one last timeout, with slack for start-up
    let lifetime = cfg.duration_ns + cfg.timeout_ns + 30_000_000_000;
    let run = run_pair(
        Role::Ping,
        Role::Pong,
        cfg.mode,
        &params,
        &cfg.deployment,
        &cfg.launcher,
        &unique_id("pingpong"),
        lifetime,
        &mut |_| {},
    )?;
    match run.output {
        RoleOutput::PingPong(r) => Ok(r),
        RoleOutput::Playback(_) => Err(BenchError::Runtime("unexpected playback output".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub message_size: usize,
    pub results: Vec<PingPongResult>,
    pub mean_rtt_us: f64,
    pub mean_packet_count: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

/// `repeats` runs per size; each row carries the runs and their mean.
pub fn pingpong_sweep(
    sizes: &[usize],
    repeats: usize,
    per_size_duration_ns: u64,
    base: &PingPongConfig,
) -> Result<SweepTable, BenchError> {
    if sizes.is_empty() {
        return Err(BenchError::Config("sweep needs at least one message size".into()));
    }
    if repeats == 0 {
        return Err(BenchError::Config("sweep needs at least one repeat".into()));
    }
    let mut table = SweepTable::default();
    for &size in sizes {
        let mut results = Vec::with_capacity(repeats);
        for r in 0..repeats {
            let cfg = PingPongConfig {
                message_size: size,
                duration_ns: per_size_duration_ns,
                seed: base.seed.wrapping_add(r as u64),
                ..base.clone()
            };
            results.push(pingpong_run(&cfg)?);
        }
        let n = results.len() as f64;
        table.rows.push(SweepRow {
            message_size: size,
            mean_rtt_us: results.iter().map(|r| r.mean_rtt_us).sum::<f64>() / n,
            mean_packet_count: results.iter().map(|r| r.packet_count as f64).sum::<f64>() / n,
            results,
        });
    }
    Ok(table)
}

impl SweepTable {
    /// One line per run plus a `mean` line per size.
    pub fn csv(&self) -> String {
        let mut out = String::from("size_bytes,repeat,mean_rtt_us,packet_count,sent,lost,echo_errors\n");
        for row in &self.rows {
            for (i, r) in row.results.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    row.message_size,
                    i + 1,
                    r.mean_rtt_us,
                    r.packet_count,
                    r.sent,
                    r.lost,
                    r.echo_errors
                ));
            }
            out.push_str(&format!(
                "{},mean,{},{},,,\n",
                row.message_size, row.mean_rtt_us, row.mean_packet_count
            ));
        }
        out
    }

    /// Rank correlation of message size against mean RTT.
    pub fn size_rtt_spearman(&self) -> Option<f64> {
        let x: Vec<f64> = self.rows.iter().map(|r| r.message_size as f64).collect();
        let y: Vec<f64> = self.rows.iter().map(|r| r.mean_rtt_us).collect();
        spearman(&x, &y)
    }
}

/// Ranks starting at 1, ties get their average rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman correlation: Pearson correlation of the ranks. None when either
/// side is constant or the lengths differ.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameRate {
    Fps(u32),
    MaxThroughput,
}

impl FrameRate {
    pub const SETUPS: [FrameRate; 4] = [
        FrameRate::Fps(10),
        FrameRate::Fps(30),
        FrameRate::Fps(60),
        FrameRate::MaxThroughput,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "max" | "max_throughput" | "max-throughput" => Some(FrameRate::MaxThroughput),
            _ => s.parse().ok().filter(|&f| f > 0).map(FrameRate::Fps),
        }
    }

    pub fn label(self) -> String {
        match self {
            FrameRate::Fps(f) => format!("{f}fps"),
            FrameRate::MaxThroughput => "max".into(),
        }
    }

    fn pacing(self) -> Pacing {
        match self {
            FrameRate::Fps(f) => Pacing::Period {
                period_ns: 1_000_000_000 / f as u64,
            },
            FrameRate::MaxThroughput => Pacing::ClosedLoop,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RateConfig {
    pub rate: FrameRate,
    pub runs: u32,
    pub iterations_per_run: u32,
    pub iteration_ns: u64,
    pub payload: usize,
    pub compute_ns: u64,
    pub mode: DeliveryMode,
    pub deployment: DeploymentPlan,
    pub sample_interval_ns: u64,
    pub launcher: Launcher,
}

impl RateConfig {
    pub fn new(rate: FrameRate, variant: DeploymentVariant) -> Self {
        Self {
            rate,
            runs: DESK_RATE_RUNS,
            iterations_per_run: DEFAULT_ITERATIONS,
            iteration_ns: DEFAULT_ITERATION_NS,
            payload: DEFAULT_FRAME_BYTES,
            compute_ns: DEFAULT_WORKER_COMPUTE_NS,
            mode: DeliveryMode::BestEffort,
            deployment: DeploymentPlan::new(variant),
            sample_interval_ns: DEFAULT_INTERVAL_NS,
            launcher: Launcher::default(),
        }
    }
}

/// Figures of one iteration window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub window_ns: u64,
    pub published: u64,
    pub processed: u64,
    /// Frames overwritten before the worker took them.
    pub drops: u64,
    /// Mean gap between consecutive frame publishes.
    pub mean_interval_ns: Option<f64>,
    pub latencies_ns: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub rate: Option<FrameRate>,
    pub mean_latency_ms: f64,
    /// Mean over iterations of the mean absolute successive latency difference.
    pub mean_jitter_ms: f64,
    pub mean_cpu: Option<f64>,
    pub iterations: Vec<IterationStats>,
    pub timeouts: u64,
}

impl RateResult {
    pub fn latencies_ns(&self) -> impl Iterator<Item = u64> + '_ {
        self.iterations.iter().flat_map(|i| i.latencies_ns.iter().copied())
    }

    pub fn total_drops(&self) -> u64 {
        self.iterations.iter().map(|i| i.drops).sum()
    }

    /// Mean inter-publish interval across all iterations, ns.
    pub fn mean_interval_ns(&self) -> Option<f64> {
        let v: Vec<f64> = self.iterations.iter().filter_map(|i| i.mean_interval_ns).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Split a playback/worker trace into per-window figures. Latency is
/// frame publish → worker result publish.
pub fn rate_iterations(trace: &TraceLog, windows: &[(u64, u64)]) -> Vec<IterationStats> {
    let mut published: BTreeMap<u64, u64> = BTreeMap::new();
    let mut consumed: BTreeMap<u64, u64> = BTreeMap::new();
    let mut current: Option<u64> = None;
    for e in &trace.events {
        match &e.kind {
            EventKind::Publish { topic, seq } if &**topic == FRAME_TOPIC && &*e.node == PLAYBACK_NODE => {
                published.insert(*seq, e.t);
            }
            EventKind::SubCbStart { topic, seq } if &**topic == FRAME_TOPIC && &*e.node == WORKER_NODE => {
                current = Some(*seq);
            }
            EventKind::Publish { topic, .. } if &**topic == RESULT_TOPIC && &*e.node == WORKER_NODE => {
                if let Some(s) = current.take() {
                    consumed.insert(s, e.t);
                }
            }
            EventKind::SubCbEnd { topic, .. } if &**topic == FRAME_TOPIC && &*e.node == WORKER_NODE => {
                current = None;
            }
            _ => {}
        }
    }
    windows
        .iter()
        .map(|&(start, end)| {
            let frames: Vec<(u64, u64)> = published
                .iter()
                .filter(|(_, &t)| t >= start && t < end)
                .map(|(&s, &t)| (s, t))
                .collect();
            let latencies: Vec<u64> = frames
                .iter()
                .filter_map(|(s, t)| consumed.get(s).map(|&r| r - t))
                .collect();
            let times: Vec<u64> = frames.iter().map(|&(_, t)| t).collect();
            let mean_interval_ns = (times.len() >= 2)
                .then(|| (times[times.len() - 1] - times[0]) as f64 / (times.len() - 1) as f64);
            IterationStats {
                window_ns: end - start,
                published: frames.len() as u64,
                processed: latencies.len() as u64,
                drops: (frames.len() - latencies.len()) as u64,
                mean_interval_ns,
                latencies_ns: latencies,
            }
        })
        .collect()
}

/// Aggregate iteration figures and resource samples into a result.
pub fn rate_result(rate: Option<FrameRate>, iterations: Vec<IterationStats>, samples: &[ResourceSample], timeouts: u64) -> RateResult {
    let all: Vec<f64> = iterations
        .iter()
        .flat_map(|i| i.latencies_ns.iter().map(|&l| l as f64 / 1e6))
        .collect();
    let mean_latency_ms = if all.is_empty() { f64::NAN } else { all.iter().sum::<f64>() / all.len() as f64 };
    let jitters: Vec<f64> = iterations
        .iter()
        .filter_map(|i| {
            let ms: Vec<f64> = i.latencies_ns.iter().map(|&l| l as f64 / 1e6).collect();
            jitter(&ms).ok()
        })
        .collect();
    let mean_jitter_ms = if jitters.is_empty() {
        f64::NAN
    } else {
        jitters.iter().sum::<f64>() / jitters.len() as f64
    };
    RateResult {
        rate,
        mean_latency_ms,
        mean_jitter_ms,
        mean_cpu: mean_cpu(samples),
        iterations,
        timeouts,
    }
}

/// `runs` launches of the playback → worker pair, each with
/// `iterations_per_run` windows, sampled for CPU while running.
pub fn rate_run(cfg: &RateConfig) -> Result<RateResult, BenchError> {
    if cfg.runs == 0 || cfg.iterations_per_run == 0 {
        return Err(BenchError::Config("rate benchmark needs runs >= 1 and iterations >= 1".into()));
    }
    if cfg.iteration_ns == 0 {
        return Err(BenchError::Config("iteration duration must be > 0".into()));
    }
    if let FrameRate::Fps(0) = cfg.rate {
        return Err(BenchError::Config("frame rate must be > 0".into()));
    }
    let params = Params::Rate {
        pacing: cfg.rate.pacing(),
        payload: cfg.payload,
        compute_ns: cfg.compute_ns,
        iterations: cfg.iterations_per_run,
        iteration_ns: cfg.iteration_ns,
        timeout_ns: DEFAULT_TIMEOUT_NS,
    };
    let lifetime = cfg.iterations_per_run as u64 * (cfg.iteration_ns + 200_000_000) + 60_000_000_000;
    let mut iterations = Vec::new();
    let mut samples = Vec::new();
    let mut timeouts = 0;
    for _ in 0..cfg.runs {
        let mut sampler: Option<ResourceSampler> = None;
        let interval = cfg.sample_interval_ns;
        let run = run_pair(
            Role::Playback,
            Role::Worker,
            cfg.mode,
            &params,
            &cfg.deployment,
            &cfg.launcher,
            &unique_id("rate"),
            lifetime,
            &mut |scope| sampler = Some(ResourceSampler::start(scope, interval, vec![cfg.rate.label()])),
        );
        if let Some(s) = sampler.take() {
            samples.extend(s.stop().samples);
        }
        let run = run?;
        let RoleOutput::Playback(out) = run.output else {
            return Err(BenchError::Runtime("unexpected ping-pong output".into()));
        };
        timeouts += out.timeouts;
        iterations.extend(rate_iterations(&run.trace, &out.windows));
    }
    Ok(rate_result(Some(cfg.rate), iterations, &samples, timeouts))
}

impl RateResult {
    pub const CSV_HEADER: &'static str =
        "rate,iteration,window_ms,published,processed,drops,mean_interval_ms,mean_latency_ms,jitter_ms";

    /// One line per iteration plus a summary line.
    pub fn csv(&self) -> String {
        let rate = self.rate.map_or("-".to_string(), FrameRate::label);
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for (i, it) in self.iterations.iter().enumerate() {
            let ms: Vec<f64> = it.latencies_ns.iter().map(|&l| l as f64 / 1e6).collect();
            let mean = if ms.is_empty() { f64::NAN } else { ms.iter().sum::<f64>() / ms.len() as f64 };
            out.push_str(&format!(
                "{rate},{},{},{},{},{},{},{},{}\n",
                i + 1,
                format_ms(it.window_ns),
                it.published,
                it.processed,
                it.drops,
                it.mean_interval_ns.map_or(f64::NAN, |n| n / 1e6),
                mean,
                jitter(&ms).unwrap_or(f64::NAN),
            ));
        }
        out.push_str(&format!(
            "{rate},mean,,{},{},{},{},{},{}\n",
            self.iterations.iter().map(|i| i.published).sum::<u64>(),
            self.iterations.iter().map(|i| i.processed).sum::<u64>(),
            self.total_drops(),
            self.mean_interval_ns().map_or(f64::NAN, |n| n / 1e6),
            self.mean_latency_ms,
            self.mean_jitter_ms,
        ));
        if let Some(cpu) = self.mean_cpu {
            out.push_str(&format!("# mean_cpu_percent={cpu}\n"));
        }
        out
    }
}
