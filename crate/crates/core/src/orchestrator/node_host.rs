//! The `node-host` child role and the per-group bus wiring.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::signals::{install_stop_handler, stop_requested};
use crate::clock::{ms_to_ns, now_ns};
use crate::middleware::{Bus, BusConfig, DeliveryMode, RemoteRoute};
use crate::model::{parse_workload_spec, DeploymentVariant, NodeSpec, Reliability, WorkloadSpec};
use crate::trace::{trace_dir, write_trace_file, TraceSession};
use crate::workload::{ExecutorConfig, NodeHost};

pub const PARAM_VARIANT: &str = "run.variant";
pub const PARAM_DURATION_MS: &str = "run.duration_ms";
pub const PARAM_SEED: &str = "run.seed";
pub const PARAM_WORKERS: &str = "run.workers";
pub const ENDPOINT_PREFIX: &str = "endpoint.";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Nodes hosted together in one process.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPlan {
    pub name: String,
    pub nodes: Vec<String>,
}

/// Group layout of a variant: the driver itself, one group with every
/// node, or one group per manifest module.
pub fn plan_groups(spec: &WorkloadSpec, variant: DeploymentVariant) -> Result<Vec<GroupPlan>, String> {
    let all = || spec.nodes.iter().map(|n| n.name.clone()).collect::<Vec<_>>();
    match variant {
        DeploymentVariant::InProcess => Ok(vec![GroupPlan {
            name: "in_process".into(),
            nodes: all(),
        }]),
        DeploymentVariant::SingleGroup => Ok(vec![GroupPlan {
            name: "all".into(),
            nodes: all(),
        }]),
        DeploymentVariant::MultiGroup => {
            if spec.manifest.modules.is_empty() {
                return Err("multi_group deployment requires a module manifest".into());
            }
            Ok(spec
                .manifest
                .modules
                .iter()
                .map(|m| GroupPlan {
                    name: m.name.clone(),
                    nodes: m.nodes.clone(),
                })
                .collect())
        }
    }
}

/// Groups that receive at least one topic from another group.
pub fn groups_needing_endpoint(spec: &WorkloadSpec, groups: &[GroupPlan]) -> Vec<String> {
    let owner = owners(groups);
    let mut out = Vec::new();
    for g in groups {
        let receives = g.nodes.iter().filter_map(|n| spec.node(n)).any(|n| {
            n.subscriptions.iter().any(|s| {
                spec.publishers_of(&s.topic)
                    .any(|p| owner.get(p.name.as_str()) != Some(&g.name.as_str()))
            })
        });
        if receives {
            out.push(g.name.clone());
        }
    }
    out
}

fn owners(groups: &[GroupPlan]) -> HashMap<&str, &str> {
    groups
        .iter()
        .flat_map(|g| g.nodes.iter().map(move |n| (n.as_str(), g.name.as_str())))
        .collect()
}

/// Bus wiring of `group`: every topic one of its nodes publishes is routed
/// to each other group with a subscriber, reliable if any such subscriber
/// asks for it.
pub fn bus_config_for_group(
    spec: &WorkloadSpec,
    groups: &[GroupPlan],
    group: &str,
    endpoints: &BTreeMap<String, SocketAddr>,
    ack: DeliveryMode,
) -> Result<BusConfig, String> {
    let owner = owners(groups);
    let me = groups
        .iter()
        .find(|g| g.name == group)
        .ok_or_else(|| format!("unknown group `{group}`"))?;
    let mut routes: HashMap<String, Vec<RemoteRoute>> = HashMap::new();
    for node in me.nodes.iter().filter_map(|n| spec.node(n)) {
        for p in &node.publications {
            if routes.contains_key(&p.topic) {
                continue;
            }
            let mut per_group: BTreeMap<&str, bool> = BTreeMap::new();
            for sub in spec.subscribers_of(&p.topic) {
                let Some(&g) = owner.get(sub.name.as_str()) else { continue };
                if g == group {
                    continue;
                }
                let reliable = sub
                    .subscriptions
                    .iter()
                    .any(|s| s.topic == p.topic && s.qos.reliability == Reliability::Reliable);
                *per_group.entry(g).or_default() |= reliable;
            }
            let mut list = Vec::new();
            for (g, reliable) in per_group {
                let addr = *endpoints
                    .get(g)
                    .ok_or_else(|| format!("no endpoint for group `{g}`"))?;
                list.push(RemoteRoute {
                    group: g.to_string(),
                    addr,
                    mode: if reliable { ack } else { DeliveryMode::BestEffort },
                });
            }
            if !list.is_empty() {
                routes.insert(p.topic.clone(), list);
            }
        }
    }
    Ok(BusConfig {
        topics: spec.topics().into_iter().collect(),
        listen: endpoints.get(group).copied(),
        routes,
        fault: None,
        max_fragment: 0,
    })
}

pub fn endpoints_from_params(spec: &WorkloadSpec) -> Result<BTreeMap<String, SocketAddr>, String> {
    spec.manifest
        .launch_params
        .iter()
        .filter_map(|(k, v)| k.strip_prefix(ENDPOINT_PREFIX).map(|g| (g, v)))
        .map(|(g, v)| {
            v.parse()
                .map(|a| (g.to_string(), a))
                .map_err(|_| format!("bad endpoint `{v}` for group `{g}`"))
        })
        .collect()
}

fn param<T: std::str::FromStr>(spec: &WorkloadSpec, key: &str) -> Result<Option<T>, String> {
    match spec.manifest.launch_params.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| format!("bad value `{v}` for `{key}`")),
    }
}

pub struct NodeHostArgs {
    pub module: String,
    pub spec: PathBuf,
    pub run_id: String,
}

pub fn trace_file_name(run_id: &str, group: &str) -> String {
    format!("{run_id}.{group}.trace")
}

pub fn node_report_file_name(run_id: &str, group: &str) -> String {
    format!("{run_id}.{group}.nodes.json")
}

/// Entry point of a `--role node-host` child. Returns the exit code.
pub fn run_node_host(args: &NodeHostArgs) -> i32 {
    install_stop_handler();
    let started = now_ns();
    let setup = || -> Result<_, String> {
        let text = std::fs::read_to_string(&args.spec).map_err(|e| format!("{}: {e}", args.spec.display()))?;
        let spec = parse_workload_spec(&text).map_err(|e| format!("{}: {e}", args.spec.display()))?;
        let variant = param::<String>(&spec, PARAM_VARIANT)?
            .and_then(|v| DeploymentVariant::parse(&v))
            .unwrap_or(DeploymentVariant::SingleGroup);
        let groups = plan_groups(&spec, variant)?;
        let me = groups
            .iter()
            .find(|g| g.name == args.module)
            .ok_or_else(|| format!("no group `{}` in this deployment", args.module))?
            .clone();
        let endpoints = endpoints_from_params(&spec)?;
        let bus_cfg = bus_config_for_group(&spec, &groups, &me.name, &endpoints, DeliveryMode::reliable())?;
        let duration = param::<u64>(&spec, PARAM_DURATION_MS)?.map(|ms| ms_to_ns(ms as f64));
        let exec = ExecutorConfig {
            workers: param(&spec, PARAM_WORKERS)?,
            seed: param(&spec, PARAM_SEED)?.unwrap_or(ExecutorConfig::default().seed),
        };
        let nodes: Vec<NodeSpec> = me.nodes.iter().filter_map(|n| spec.node(n).cloned()).collect();
        Ok((me, bus_cfg, duration, exec, nodes))
    };
    let (me, bus_cfg, duration, exec, nodes) = match setup() {
        Ok(x) => x,
        Err(e) => {
            log::error!("node-host: {e}");
            return EXIT_CONFIG;
        }
    };
    let fallback = args.spec.parent().unwrap_or(Path::new(".")).to_path_buf();
    let dir = trace_dir(&fallback);
    let session = TraceSession::new(args.run_id.clone());
    let bus = match Bus::new(bus_cfg, session.clone()) {
        Ok(b) => b,
        Err(e) => {
            log::error!("node-host {}: {e}", me.name);
            return EXIT_RUNTIME;
        }
    };
    let host = match NodeHost::start(&bus, nodes, exec) {
        Ok(h) => h,
        Err(e) => {
            log::error!("node-host {}: {e}", me.name);
            return EXIT_RUNTIME;
        }
    };
    while !stop_requested() && duration.is_none_or(|d| now_ns() - started < d) {
        std::thread::sleep(std::time::Duration::from_millis(20));
    }
    let reports = host.stop();
    bus.shutdown();
    finish(&dir, &args.run_id, &me.name, &session, &reports)
}

fn finish(
    dir: &Path,
    run_id: &str,
    group: &str,
    session: &Arc<TraceSession>,
    reports: &[crate::workload::NodeReport],
) -> i32 {
    let log = session.drain();
    if let Err(e) = write_trace_file(&log, &dir.join(trace_file_name(run_id, group))) {
        log::error!("node-host {group}: cannot write trace: {e}");
        return EXIT_RUNTIME;
    }
    match serde_json::to_string_pretty(reports) {
        Ok(json) => {
            if let Err(e) = std::fs::write(dir.join(node_report_file_name(run_id, group)), json) {
                log::warn!("node-host {group}: cannot write node report: {e}");
            }
        }
        Err(e) => log::warn!("node-host {group}: {e}"),
    }
    EXIT_OK
}
