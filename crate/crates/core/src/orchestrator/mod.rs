//! Launching a workload under a deployment variant, tearing it down, and
//! measuring ramp-up and per-process resource use.

mod isolation;
mod node_host;
mod process;
mod sampler;
mod signals;

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::path::{Path, PathBuf};
use std::process::Child;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::clock::now_ns;
use crate::middleware::{Bus, BusConfig};
use crate::model::{
    render_workload_spec, DeploymentPlan, DeploymentVariant, IsolationLevel, ModuleManifest, WorkloadSpec,
};
use crate::trace::{write_trace_file, EventKind, TraceLog, TraceSession, TRACE_DIR_ENV};
use crate::workload::{ExecutorConfig, NodeHost, NodeReport};

pub use isolation::{CgroupFlavor, CgroupGuard, IsolationDriver};
pub use node_host::{
    bus_config_for_group, endpoints_from_params, groups_needing_endpoint, node_report_file_name, plan_groups,
    run_node_host, trace_file_name, GroupPlan, NodeHostArgs, ENDPOINT_PREFIX, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME,
    PARAM_DURATION_MS, PARAM_SEED, PARAM_VARIANT, PARAM_WORKERS,
};
pub use process::{group_alive, live_members, signal_group, spawn_group, terminate_group, wait_exit, Exit};
pub use sampler::{median, read_stat, ProcStat, ResourceSampler, SampleScope, SamplerOutput, DEFAULT_INTERVAL_NS};
pub use signals::{install_stop_handler, request_stop, stop_requested};

pub const DEFAULT_GRACE: Duration = Duration::from_secs(5);

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("spawn failed: {0}")]
    Spawn(String),
    #[error("isolation unavailable: {0}")]
    Isolation(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

impl OrchestratorError {
    pub fn exit_code(&self) -> i32 {
        match self {
            OrchestratorError::Config(_) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LaunchConfig {
    /// Executable started with `--role node-host`; defaults to the current one.
    pub exe: Option<PathBuf>,
    /// Receives the effective spec, trace files and node reports.
    pub run_dir: PathBuf,
    pub run_id: String,
    /// Children stop on their own after this long; `None` runs until teardown.
    pub duration_ns: Option<u64>,
    pub seed: u64,
    pub workers: Option<usize>,
    pub isolation: IsolationDriver,
}

impl LaunchConfig {
    pub fn new(run_dir: impl Into<PathBuf>, run_id: impl Into<String>) -> Self {
        Self {
            exe: None,
            run_dir: run_dir.into(),
            run_id: run_id.into(),
            duration_ns: None,
            seed: ExecutorConfig::default().seed,
            workers: None,
            isolation: IsolationDriver::probe(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupStatus {
    Running,
    /// Left on its own with this exit code (None: killed by a signal).
    Exited(Option<i32>),
    Terminated,
    Killed,
}

impl GroupStatus {
    pub fn is_clean(self) -> bool {
        matches!(self, GroupStatus::Exited(Some(0)) | GroupStatus::Terminated)
    }
}

pub struct GroupHandle {
    pub name: String,
    pub nodes: Vec<String>,
    /// None for the in-process group.
    pub pgid: Option<i32>,
    pub status: GroupStatus,
    child: Option<Child>,
    _cgroup: Option<CgroupGuard>,
}

struct InProcessRun {
    bus: Arc<Bus>,
    host: NodeHost,
    session: Arc<TraceSession>,
}

#[derive(Debug, Clone, Default)]
pub struct TeardownReport {
    /// Pids of the run's groups still alive after teardown.
    pub orphans: Vec<i32>,
    pub statuses: Vec<(String, GroupStatus)>,
    pub node_reports: Vec<NodeReport>,
}

pub struct RunHandle {
    pub run_id: String,
    pub variant: DeploymentVariant,
    pub start_ts: u64,
    pub groups: Vec<GroupHandle>,
    pub warnings: Vec<String>,
    pub run_dir: PathBuf,
    pub spec_path: Option<PathBuf>,
    duration_ns: Option<u64>,
    in_process: Option<InProcessRun>,
    report: Option<TeardownReport>,
}

fn free_udp_port() -> io::Result<SocketAddr> {
    UdpSocket::bind("127.0.0.1:0")?.local_addr()
}

/// Start `spec` under `plan`.
pub fn launch(
    spec: &WorkloadSpec,
    manifest: &ModuleManifest,
    plan: &DeploymentPlan,
    cfg: &LaunchConfig,
) -> Result<RunHandle, OrchestratorError> {
    let mut spec = spec.clone();
    spec.manifest = manifest.clone();
    let driver = &cfg.isolation;
    plan.validate(&spec.manifest, driver.host_cpus).map_err(OrchestratorError::Config)?;
    let groups = plan_groups(&spec, plan.variant).map_err(OrchestratorError::Config)?;
    let launched: BTreeSet<&str> = groups.iter().flat_map(|g| g.nodes.iter().map(String::as_str)).collect();
    let declared: BTreeSet<&str> = spec.nodes.iter().map(|n| n.name.as_str()).collect();
    if launched != declared {
        let missing: Vec<_> = declared.difference(&launched).collect();
        let unknown: Vec<_> = launched.difference(&declared).collect();
        return Err(OrchestratorError::Config(format!(
            "manifest does not cover the graph (unassigned: {missing:?}, unknown: {unknown:?})"
        )));
    }

    let mut warnings = Vec::new();
    let wants_limits = plan.isolation == IsolationLevel::ProcessGroupWithLimits || plan.limits.is_some();
    if wants_limits {
        if plan.variant == DeploymentVariant::InProcess {
            return Err(OrchestratorError::Config("resource limits need a process-group variant".into()));
        }
        if !driver.resource_limits {
            return Err(OrchestratorError::Isolation(
                "the plan demands resource limits but no writable control-group hierarchy was found".into(),
            ));
        }
    }
    let mut use_affinity = plan.affinity.is_some();
    if use_affinity && plan.variant == DeploymentVariant::InProcess {
        warnings.push("CPU affinity is ignored for the in-process variant".into());
        use_affinity = false;
    }
    if use_affinity && !driver.cpu_affinity {
        warnings.push("CPU affinity unsupported on this host; running unpinned".into());
        use_affinity = false;
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    std::fs::create_dir_all(&cfg.run_dir)?;
    let start_ts = now_ns();
    let mut handle = RunHandle {
        run_id: cfg.run_id.clone(),
        variant: plan.variant,
        start_ts,
        groups: Vec::new(),
        warnings,
        run_dir: cfg.run_dir.clone(),
        spec_path: None,
        duration_ns: cfg.duration_ns,
        in_process: None,
        report: None,
    };

    if plan.variant == DeploymentVariant::InProcess {
        let session = TraceSession::new(cfg.run_id.clone());
        let bus = Bus::new(BusConfig::local(spec.topics()), session.clone())
            .map_err(|e| OrchestratorError::Spawn(e.to_string()))?;
        let exec = ExecutorConfig {
            workers: cfg.workers,
            seed: cfg.seed,
        };
        let host =
            NodeHost::start(&bus, spec.nodes.clone(), exec).map_err(|e| OrchestratorError::Spawn(e.to_string()))?;
        handle.groups.push(GroupHandle {
            name: groups[0].name.clone(),
            nodes: groups[0].nodes.clone(),
            pgid: None,
            status: GroupStatus::Running,
            child: None,
            _cgroup: None,
        });
        handle.in_process = Some(InProcessRun { bus, host, session });
        return Ok(handle);
    }

    let mut endpoints = BTreeMap::new();
    for g in groups_needing_endpoint(&spec, &groups) {
        endpoints.insert(g, free_udp_port()?);
    }
    let params = &mut spec.manifest.launch_params;
    params.insert(PARAM_VARIANT.into(), plan.variant.as_str().into());
    params.insert(PARAM_SEED.into(), cfg.seed.to_string());
    if let Some(d) = cfg.duration_ns {
        params.insert(PARAM_DURATION_MS.into(), (d / 1_000_000).max(1).to_string());
    }
    if let Some(w) = cfg.workers {
        params.insert(PARAM_WORKERS.into(), w.to_string());
    }
    params.retain(|k, _| !k.starts_with(ENDPOINT_PREFIX));
    for (g, addr) in &endpoints {
        params.insert(format!("{ENDPOINT_PREFIX}{g}"), addr.to_string());
    }
    let spec_path = cfg.run_dir.join(format!("{}.workload.spec", cfg.run_id));
    std::fs::write(&spec_path, render_workload_spec(&spec))?;
    handle.spec_path = Some(spec_path.clone());

    let exe = match &cfg.exe {
        Some(p) => p.clone(),
        None => std::env::current_exe()?,
    };
    let envs = vec![(TRACE_DIR_ENV.to_string(), cfg.run_dir.display().to_string())];
    for g in &groups {
        let args = vec![
            "--role".to_string(),
            "node-host".into(),
            "--module".into(),
            g.name.clone(),
            "--spec".into(),
            spec_path.display().to_string(),
            "--run-id".into(),
            cfg.run_id.clone(),
        ];
        let cpus = if use_affinity { plan.affinity_for(&g.name) } else { None };
        // on error the handle drops and tears down the groups started so far
        let child = spawn_group(&exe, &args, &envs, cpus)
            .map_err(|e| OrchestratorError::Spawn(format!("{} ({}): {e}", g.name, exe.display())))?;
        let pgid = child.id() as i32;
        handle.groups.push(GroupHandle {
            name: g.name.clone(),
            nodes: g.nodes.clone(),
            pgid: Some(pgid),
            status: GroupStatus::Running,
            child: Some(child),
            _cgroup: None,
        });
        if wants_limits {
            let limits = plan.limits.unwrap_or(crate::model::ResourceLimits {
                cpu_cores: None,
                memory_bytes: None,
            });
            let name = format!("{}-{}", cfg.run_id, g.name);
            let guard = driver
                .apply_limits(&name, pgid as u32, &limits)
                .map_err(|e| OrchestratorError::Isolation(format!("{}: {e}", g.name)))?;
            handle.groups.last_mut().expect("just pushed")._cgroup = Some(guard);
        }
    }
    Ok(handle)
}

impl RunHandle {
    pub fn pgids(&self) -> Vec<i32> {
        self.groups.iter().filter_map(|g| g.pgid).collect()
    }

    /// Every node placed in some group, sorted.
    pub fn launched_nodes(&self) -> Vec<String> {
        let mut v: Vec<String> = self.groups.iter().flat_map(|g| g.nodes.clone()).collect();
        v.sort();
        v
    }

    /// The processes owned by this run: the child groups, or the driver.
    pub fn sample_scope(&self) -> SampleScope {
        if self.in_process.is_some() {
            SampleScope::Pids(vec![std::process::id() as i32])
        } else {
            SampleScope::Groups(self.pgids())
        }
    }

    /// Start sampling CPU and memory of the run's processes.
    pub fn sample_resources(&self, interval_ns: u64) -> ResourceSampler {
        ResourceSampler::start(
            self.sample_scope(),
            interval_ns,
            vec![self.run_id.clone(), self.variant.as_str().to_string()],
        )
    }

    /// Block until the configured duration has passed, every child left, or
    /// a stop signal arrived. Without a duration, waits for the children or
    /// the signal only.
    pub fn wait(&mut self) {
        loop {
            if stop_requested() {
                return;
            }
            let mut running = 0;
            for g in &mut self.groups {
                if let Some(child) = &mut g.child {
                    match child.try_wait() {
                        Ok(Some(status)) => {
                            if g.status == GroupStatus::Running {
                                g.status = GroupStatus::Exited(status.code());
                            }
                        }
                        _ => running += 1,
                    }
                }
            }
            let now = now_ns();
            if let Some(d) = self.duration_ns {
                if self.in_process.is_some() && now - self.start_ts >= d {
                    return;
                }
                // children stop themselves; allow them a little extra to flush
                if self.in_process.is_none() && now - self.start_ts >= d + DEFAULT_GRACE.as_nanos() as u64 {
                    return;
                }
            }
            if self.in_process.is_none() && running == 0 {
                return;
            }
            std::thread::sleep(Duration::from_millis(10));
        }
    }

    /// Stop every group (SIGTERM, then SIGKILL after `grace`), write the
    /// in-process trace, and check for survivors. Idempotent.
    pub fn teardown(&mut self, grace: Duration) -> TeardownReport {
        if let Some(r) = &self.report {
            return r.clone();
        }
        let mut report = TeardownReport::default();
        if let Some(run) = self.in_process.take() {
            let reports = run.host.stop();
            run.bus.shutdown();
            let log = run.session.drain();
            let group = &self.groups[0].name;
            if let Err(e) = write_trace_file(&log, &self.run_dir.join(trace_file_name(&self.run_id, group))) {
                log::error!("cannot write in-process trace: {e}");
                self.groups[0].status = GroupStatus::Exited(Some(EXIT_RUNTIME));
            } else {
                self.groups[0].status = GroupStatus::Exited(Some(EXIT_OK));
            }
            report.node_reports.extend(reports);
        }
        for g in &mut self.groups {
            let Some(child) = &mut g.child else { continue };
            let exit = terminate_group(child, grace);
            g.status = match (g.status, exit) {
                (GroupStatus::Exited(c), _) | (_, Exit::Exited(c)) => GroupStatus::Exited(c),
                (_, Exit::Terminated) => GroupStatus::Terminated,
                (_, Exit::Killed) => GroupStatus::Killed,
            };
            let path = self.run_dir.join(node_report_file_name(&self.run_id, &g.name));
            if let Ok(text) = std::fs::read_to_string(&path) {
                match serde_json::from_str::<Vec<NodeReport>>(&text) {
                    Ok(r) => report.node_reports.extend(r),
                    Err(e) => log::warn!("{}: {e}", path.display()),
                }
            }
        }
        for pgid in self.pgids() {
            report.orphans.extend(live_members(pgid));
        }
        report.statuses = self.groups.iter().map(|g| (g.name.clone(), g.status)).collect();
        report.node_reports.sort_by(|a, b| a.name.cmp(&b.name));
        self.report = Some(report.clone());
        report
    }

    /// Trace files this run is expected to leave behind.
    pub fn trace_paths(&self) -> Vec<PathBuf> {
        self.groups
            .iter()
            .map(|g| self.run_dir.join(trace_file_name(&self.run_id, &g.name)))
            .collect()
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }
}

impl Drop for RunHandle {
    fn drop(&mut self) {
        self.teardown(DEFAULT_GRACE);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("ramp-up incomplete: no node_ready from {missing:?}")]
pub struct RampupError {
    pub missing: Vec<String>,
}

/// Time from `launch_ts` until the last node of `spec` reported ready.
pub fn measure_rampup(trace: &TraceLog, spec: &WorkloadSpec, launch_ts: u64) -> Result<u64, RampupError> {
    let mut ready: BTreeMap<&str, u64> = BTreeMap::new();
    for e in &trace.events {
        if e.kind == EventKind::NodeReady {
            let t = ready.entry(&e.node).or_insert(e.t);
            *t = (*t).min(e.t);
        }
    }
    let mut missing = Vec::new();
    let mut last = launch_ts;
    for n in &spec.nodes {
        match ready.get(n.name.as_str()) {
            Some(&t) => last = last.max(t),
            None => missing.push(n.name.clone()),
        }
    }
    if missing.is_empty() {
        Ok(last - launch_ts)
    } else {
        Err(RampupError { missing })
    }
}
