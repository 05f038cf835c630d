use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Keep-last history with a fixed depth plus a reliability kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QosPolicy {
    pub depth: usize,
    pub reliability: Reliability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reliability {
    BestEffort,
    Reliable,
}

impl Default for QosPolicy {
    /// keep_last(1), best effort: the setting of the evaluated chain.
    fn default() -> Self {
        Self {
            depth: 1,
            reliability: Reliability::BestEffort,
        }
    }
}

impl QosPolicy {
    pub fn keep_last(depth: usize) -> Self {
        Self {
            depth,
            ..Self::default()
        }
    }

    pub fn reliable(mut self) -> Self {
        self.reliability = Reliability::Reliable;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimerSpec {
    pub period_ns: u64,
    pub callback: String,
    /// Topic whose most recently stored input the timer consumes. `None`
    /// means "whatever subscription input arrived last".
    pub reads: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscriptionSpec {
    pub topic: String,
    pub callback: String,
    pub qos: QosPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicationSpec {
    pub topic: String,
    pub payload_size: usize,
    /// Callback (timer or subscription) on the same node that emits it.
    pub trigger: String,
}

/// Busy-work duration model, all durations in nanoseconds.
///
/// `LogNormal` draws `exp(N(mu, sigma))` milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ComputeModel {
    Fixed(u64),
    Uniform { lo: u64, hi: u64 },
    LogNormal { mu: f64, sigma: f64 },
}

impl Default for ComputeModel {
    fn default() -> Self {
        ComputeModel::Fixed(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub timers: Vec<TimerSpec>,
    pub subscriptions: Vec<SubscriptionSpec>,
    pub publications: Vec<PublicationSpec>,
    pub compute: ComputeModel,
}

impl NodeSpec {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            timers: Vec::new(),
            subscriptions: Vec::new(),
            publications: Vec::new(),
            compute: ComputeModel::default(),
        }
    }

    pub fn timer(mut self, period_ns: u64, callback: &str) -> Self {
        self.timers.push(TimerSpec {
            period_ns,
            callback: callback.to_string(),
            reads: None,
        });
        self
    }

    pub fn timer_reading(mut self, period_ns: u64, callback: &str, topic: &str) -> Self {
        self.timers.push(TimerSpec {
            period_ns,
            callback: callback.to_string(),
            reads: Some(topic.to_string()),
        });
        self
    }

    pub fn sub(mut self, topic: &str, callback: &str) -> Self {
        self.subscriptions.push(SubscriptionSpec {
            topic: topic.to_string(),
            callback: callback.to_string(),
            qos: QosPolicy::default(),
        });
        self
    }

    pub fn sub_qos(mut self, topic: &str, callback: &str, qos: QosPolicy) -> Self {
        self.subscriptions.push(SubscriptionSpec {
            topic: topic.to_string(),
            callback: callback.to_string(),
            qos,
        });
        self
    }

    pub fn publish(mut self, topic: &str, payload_size: usize, trigger: &str) -> Self {
        self.publications.push(PublicationSpec {
            topic: topic.to_string(),
            payload_size,
            trigger: trigger.to_string(),
        });
        self
    }

    pub fn compute(mut self, compute: ComputeModel) -> Self {
        self.compute = compute;
        self
    }

    /// Whether `callback` is declared by a timer or subscription of this node.
    pub fn declares_callback(&self, callback: &str) -> bool {
        self.timers.iter().any(|t| t.callback == callback)
            || self.subscriptions.iter().any(|s| s.callback == callback)
    }

    pub fn publications_of<'a>(&'a self, callback: &'a str) -> impl Iterator<Item = &'a PublicationSpec> {
        self.publications.iter().filter(move |p| p.trigger == callback)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleEntry {
    pub name: String,
    pub nodes: Vec<String>,
}

/// Grouping of nodes into launchable modules plus the central launch
/// parameters shared by all of them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleManifest {
    pub modules: Vec<ModuleEntry>,
    pub launch_params: BTreeMap<String, String>,
}

impl ModuleManifest {
    pub fn module_of(&self, node: &str) -> Option<&str> {
        self.modules
            .iter()
            .find(|m| m.nodes.iter().any(|n| n == node))
            .map(|m| m.name.as_str())
    }

    pub fn module(&self, name: &str) -> Option<&ModuleEntry> {
        self.modules.iter().find(|m| m.name == name)
    }

    pub fn node_counts(&self) -> Vec<(String, usize)> {
        self.modules
            .iter()
            .map(|m| (m.name.clone(), m.nodes.len()))
            .collect()
    }
}

/// A parsed `workload.spec` document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub nodes: Vec<NodeSpec>,
    pub manifest: ModuleManifest,
}

impl WorkloadSpec {
    pub fn node(&self, name: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn publishers_of<'a>(&'a self, topic: &'a str) -> impl Iterator<Item = &'a NodeSpec> {
        self.nodes
            .iter()
            .filter(move |n| n.publications.iter().any(|p| p.topic == topic))
    }

    pub fn subscribers_of<'a>(&'a self, topic: &'a str) -> impl Iterator<Item = &'a NodeSpec> {
        self.nodes
            .iter()
            .filter(move |n| n.subscriptions.iter().any(|s| s.topic == topic))
    }

    /// Every topic that is published or subscribed anywhere, sorted.
    pub fn topics(&self) -> Vec<String> {
        let mut topics: Vec<String> = self
            .nodes
            .iter()
            .flat_map(|n| {
                n.publications
                    .iter()
                    .map(|p| p.topic.clone())
                    .chain(n.subscriptions.iter().map(|s| s.topic.clone()))
            })
            .collect();
        topics.sort();
        topics.dedup();
        topics
    }

    /// Restrict to the nodes of one module, keeping the manifest intact.
    pub fn module_nodes(&self, module: &str) -> Vec<&NodeSpec> {
        match self.manifest.module(module) {
            Some(m) => m.nodes.iter().filter_map(|n| self.node(n)).collect(),
            None => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum HopKind {
    /// `Node::(Sig)`: the signature is an opaque label; `topic` is filled in
    /// when the chain is resolved against a workload graph.
    Subscription {
        signature: String,
        topic: Option<String>,
    },
    /// `Node::()`
    Timer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainHop {
    pub node: String,
    pub kind: HopKind,
    pub output_topic: Option<String>,
}

impl ChainHop {
    pub fn is_timer(&self) -> bool {
        matches!(self.kind, HopKind::Timer)
    }

    pub fn topic(&self) -> Option<&str> {
        match &self.kind {
            HopKind::Subscription { topic, .. } => topic.as_deref(),
            HopKind::Timer => None,
        }
    }
}

/// Ordered callback sequence from a sensor topic to the final output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub hops: Vec<ChainHop>,
    pub sensor_topic: Option<String>,
}

impl ChainSpec {
    pub fn len(&self) -> usize {
        self.hops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hops.is_empty()
    }

    pub fn timer_positions(&self) -> Vec<usize> {
        self.hops
            .iter()
            .enumerate()
            .filter(|(_, h)| h.is_timer())
            .map(|(i, _)| i)
            .collect()
    }

    /// True once every subscription hop carries a topic and the sensor topic is known.
    pub fn is_resolved(&self) -> bool {
        self.sensor_topic.is_some()
            && self
                .hops
                .iter()
                .all(|h| h.is_timer() || h.topic().is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeploymentVariant {
    /// Everything inside the driver process (bare-metal analog).
    InProcess,
    /// All nodes in one child process group (one-container analog).
    SingleGroup,
    /// One child process group per module (dedicated-containers analog).
    MultiGroup,
}

impl DeploymentVariant {
    pub const ALL: [DeploymentVariant; 3] = [
        DeploymentVariant::InProcess,
        DeploymentVariant::SingleGroup,
        DeploymentVariant::MultiGroup,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DeploymentVariant::InProcess => "in_process",
            DeploymentVariant::SingleGroup => "single_group",
            DeploymentVariant::MultiGroup => "multi_group",
        }
    }

    /// BM / SC / MC: bare-metal, single-container and multi-container analogs.
    pub fn short_label(self) -> &'static str {
        match self {
            DeploymentVariant::InProcess => "BM",
            DeploymentVariant::SingleGroup => "SC",
            DeploymentVariant::MultiGroup => "MC",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.replace('-', "_").as_str() {
            "in_process" | "bare" => Some(DeploymentVariant::InProcess),
            "single_group" => Some(DeploymentVariant::SingleGroup),
            "multi_group" => Some(DeploymentVariant::MultiGroup),
            _ => None,
        }
    }
}

impl fmt::Display for DeploymentVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IsolationLevel {
    None,
    ProcessGroup,
    ProcessGroupWithLimits,
}

/// Opt-in control-group limits applied per process group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceLimits {
    /// CPU quota in cores (1.0 == one full core).
    pub cpu_cores: Option<f64>,
    pub memory_bytes: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentPlan {
    pub variant: DeploymentVariant,
    /// CPU set per group name; the key `*` applies to every group.
    pub affinity: Option<BTreeMap<String, Vec<usize>>>,
    pub isolation: IsolationLevel,
    pub limits: Option<ResourceLimits>,
}

impl DeploymentPlan {
    pub fn new(variant: DeploymentVariant) -> Self {
        let isolation = match variant {
            DeploymentVariant::InProcess => IsolationLevel::None,
            _ => IsolationLevel::ProcessGroup,
        };
        Self {
            variant,
            affinity: None,
            isolation,
            limits: None,
        }
    }

    pub fn affinity_for(&self, group: &str) -> Option<&[usize]> {
        let map = self.affinity.as_ref()?;
        map.get(group).or_else(|| map.get("*")).map(Vec::as_slice)
    }

    /// Checks the plan against a manifest and the host CPU count.
    pub fn validate(&self, manifest: &ModuleManifest, host_cpus: usize) -> Result<(), String> {
        if self.variant == DeploymentVariant::MultiGroup && manifest.modules.is_empty() {
            return Err("multi_group deployment requires a module manifest".into());
        }
        if let Some(map) = &self.affinity {
            for (group, cpus) in map {
                if cpus.is_empty() {
                    return Err(format!("empty CPU set for group `{group}`"));
                }
                if let Some(bad) = cpus.iter().find(|&&c| c >= host_cpus) {
                    return Err(format!(
                        "CPU {bad} in affinity of `{group}` is not valid on this host ({host_cpus} CPUs)"
                    ));
                }
            }
        }
        if self.isolation == IsolationLevel::ProcessGroupWithLimits && self.limits.is_none() {
            return Err("process_group_with_limits needs resource limits".into());
        }
        Ok(())
    }
}
