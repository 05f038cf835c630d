//! Periodic per-process CPU and memory sampling from `/proc`.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use crate::analysis::{ProcessUsage, ResourceSample};
use crate::clock::{now_ns, sleep_until};

pub const DEFAULT_INTERVAL_NS: u64 = 200_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProcStat {
    pub pid: i32,
    pub state: char,
    pub ppid: i32,
    pub pgrp: i32,
    /// utime + stime in clock ticks.
    pub cpu_ticks: u64,
    pub rss_pages: u64,
}

pub fn read_stat(pid: i32) -> Option<ProcStat> {
    let text = std::fs::read_to_string(format!("/proc/{pid}/stat")).ok()?;
    // comm may contain spaces and parens; fields resume after the last ')'
    let rest = &text[text.rfind(')')? + 2..];
    let f: Vec<&str> = rest.split_ascii_whitespace().collect();
    let num = |i: usize| f.get(i)?.parse::<u64>().ok();
    Some(ProcStat {
        pid,
        state: f.first()?.chars().next()?,
        ppid: f.get(1)?.parse().ok()?,
        pgrp: f.get(2)?.parse().ok()?,
        cpu_ticks: num(11)? + num(12)?,
        rss_pages: num(21)?,
    })
}

/// Which processes belong to the run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SampleScope {
    /// Every process whose group id is listed.
    Groups(Vec<i32>),
    Pids(Vec<i32>),
}

impl SampleScope {
    fn stats(&self) -> Vec<ProcStat> {
        match self {
            SampleScope::Pids(p) => p.iter().filter_map(|&pid| read_stat(pid)).collect(),
            SampleScope::Groups(g) => {
                let Ok(dir) = std::fs::read_dir("/proc") else {
                    return Vec::new();
                };
                dir.filter_map(|e| e.ok()?.file_name().to_str()?.parse::<i32>().ok())
                    .filter_map(read_stat)
                    .filter(|s| g.contains(&s.pgrp) && s.state != 'Z')
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SamplerOutput {
    pub samples: Vec<ResourceSample>,
    /// Processes that vanished between two ticks.
    pub exited: u64,
}

impl SamplerOutput {
    /// Gaps between consecutive ticks, ns.
    pub fn intervals(&self) -> Vec<u64> {
        self.samples.windows(2).map(|w| w[1].t - w[0].t).collect()
    }
}

/// Background thread sampling on an absolute cadence `t0 + k * interval`.
pub struct ResourceSampler {
    stop: Arc<AtomicBool>,
    handle: JoinHandle<SamplerOutput>,
}

impl ResourceSampler {
    pub fn start(scope: SampleScope, interval_ns: u64, tags: Vec<String>) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let handle = std::thread::Builder::new()
            .name("sampler".into())
            .spawn(move || sample_loop(scope, interval_ns.max(1_000_000), tags, flag))
            .expect("spawn sampler thread");
        Self { stop, handle }
    }

    pub fn stop(self) -> SamplerOutput {
        self.stop.store(true, Ordering::Relaxed);
        self.handle.join().unwrap_or_default()
    }
}

fn sample_loop(scope: SampleScope, interval: u64, tags: Vec<String>, stop: Arc<AtomicBool>) -> SamplerOutput {
    // SAFETY: sysconf has no preconditions.
    let (hz, page) = unsafe {
        (
            libc::sysconf(libc::_SC_CLK_TCK).max(1) as f64,
            libc::sysconf(libc::_SC_PAGESIZE).max(1) as u64,
        )
    };
    let mut out = SamplerOutput::default();
    let mut prev: HashMap<i32, (u64, u64)> = HashMap::new();
    let t0 = now_ns();
    for s in scope.stats() {
        prev.insert(s.pid, (s.cpu_ticks, t0));
    }
    let mut k = 1u64;
    while !stop.load(Ordering::Relaxed) {
        let target = t0 + k * interval;
        // wake in short steps so stop() is prompt
        while now_ns() < target && !stop.load(Ordering::Relaxed) {
            sleep_until(target.min(now_ns() + 50_000_000));
        }
        if stop.load(Ordering::Relaxed) {
            break;
        }
        let t = now_ns();
        let stats = scope.stats();
        let mut next = HashMap::with_capacity(stats.len());
        let mut processes = Vec::with_capacity(stats.len());
        for s in stats {
            if let Some(&(ticks, since)) = prev.get(&s.pid) {
                let wall = (t - since) as f64 / 1e9;
                let cpu = s.cpu_ticks.saturating_sub(ticks) as f64 / hz;
                processes.push(ProcessUsage {
                    pid: s.pid,
                    cpu_percent: 100.0 * cpu / wall,
                    rss_bytes: s.rss_pages * page,
                });
            }
            next.insert(s.pid, (s.cpu_ticks, t));
        }
        out.exited += prev.keys().filter(|p| !next.contains_key(p)).count() as u64;
        prev = next;
        out.samples.push(ResourceSample {
            t,
            processes,
            tags: tags.clone(),
        });
        // skip targets already missed instead of bursting
        k = k.max((now_ns() - t0) / interval) + 1;
    }
    out
}

/// Median of a non-empty slice (upper median for even lengths).
pub fn median(values: &[u64]) -> Option<u64> {
    let mut v = values.to_vec();
    v.sort_unstable();
    v.get(v.len() / 2).copied()
}
