//! A scaled-down Autoware-like graph: eight modules, background filler
//! traffic, and a 17-hop localization → planning → control → vehicle chain.

use std::collections::BTreeMap;

use super::WorkloadError;
use crate::model::{
    parse_chain_spec, ChainSpec, ComputeModel, ModuleEntry, ModuleManifest, NodeSpec, WorkloadSpec,
};

/// Modules and their node counts in the full-size deployment.
pub const MODULE_NODE_COUNTS: [(&str, usize); 8] = [
    ("sensing", 48),
    ("perception", 49),
    ("localization", 33),
    ("map", 6),
    ("planning", 25),
    ("control", 8),
    ("vehicle", 1),
    ("system", 21),
];

/// Callback signatures of the evaluated filter → controller chain.
pub const CHAIN_TEXT: &str = "\
(0) Filter::(PointCloud2,PointIndices)
(1) NDTScanMatcher::(PointCloud2)
(2) EKFLocalizer::(PoseWithCovarianceStamped)
(3) EKFLocalizer::()
(4) StopFilter::(Odometry)
(5) BehaviorPathPlannerNode::(Odometry)
(6) BehaviorPathPlannerNode::()
(7) BehaviorVelocityPlannerNode::(PathWithLaneId)
(8) ObstacleAvoidancePlanner::(Path)
(9) ObstacleVelocityLimiterNode::(Trajectory)
(10) ObstacleStopPlannerNode::(Trajectory)
(11) ScenarioSelectorNode::(Trajectory)
(12) MotionVelocitySmootherNode::(Trajectory)
(13) PlanningValidator::(Trajectory)
(14) Controller::(Trajectory)
(15) Controller::()
(16) VehicleCmdGate::(AckermannControlCommand)
";

pub const SENSOR_TOPIC: &str = "sensing/lidar/pointcloud";

const MS: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PresetConfig {
    /// Fraction of the full node counts, in (0, 1]. Counts round up, min 1.
    pub scale: f64,
    pub sensor_period_ns: u64,
    /// Timer period per chain node with a timer hop.
    pub chain_periods: BTreeMap<String, u64>,
    /// Payload bytes per topic; unlisted topics use `default_payload`.
    pub payload_profile: BTreeMap<String, usize>,
    pub default_payload: usize,
    pub filler_period_ns: u64,
    pub filler_payload: usize,
    pub filler_compute: ComputeModel,
}

impl Default for PresetConfig {
    /// Periods are artifact defaults: 10 Hz sensor, 50 Hz EKF prediction,
    /// 10 Hz behavior planning, 30 Hz control.
    fn default() -> Self {
        let chain_periods = [
            ("EKFLocalizer", 20 * MS),
            ("BehaviorPathPlannerNode", 100 * MS),
            ("Controller", 33_333_333),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let payload_profile = [
            (SENSOR_TOPIC, 128 * 1024),
            ("sensing/lidar/indices", 8 * 1024),
            ("localization/filtered_points", 64 * 1024),
            ("planning/path_with_lane_id", 16 * 1024),
            ("planning/path", 16 * 1024),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            scale: 1.0,
            sensor_period_ns: 100 * MS,
            chain_periods,
            payload_profile,
            default_payload: 4 * 1024,
            filler_period_ns: 100 * MS,
            filler_payload: 1024,
            filler_compute: ComputeModel::Uniform {
                lo: 50_000,
                hi: 200_000,
            },
        }
    }
}

impl PresetConfig {
    pub fn with_scale(scale: f64) -> Self {
        Self {
            scale,
            ..Self::default()
        }
    }

    /// `ceil(count * scale)`, at least 1, per module.
    pub fn nominal_counts(&self) -> Result<Vec<(&'static str, usize)>, WorkloadError> {
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(WorkloadError::Invalid(format!(
                "preset scale {} outside (0, 1]",
                self.scale
            )));
        }
        Ok(MODULE_NODE_COUNTS
            .iter()
            .map(|&(m, c)| {
                // guard against 30 * 0.1 = 3.0000000000000004
                let scaled = (c as f64 * self.scale - 1e-9).ceil() as usize;
                (m, scaled.max(1))
            })
            .collect())
    }

    fn payload(&self, topic: &str) -> usize {
        self.payload_profile
            .get(topic)
            .copied()
            .unwrap_or(self.default_payload)
    }

    fn period(&self, node: &str) -> u64 {
        self.chain_periods.get(node).copied().unwrap_or(100 * MS)
    }
}

fn uniform_ms(lo: f64, hi: f64) -> ComputeModel {
    ComputeModel::Uniform {
        lo: (lo * MS as f64) as u64,
        hi: (hi * MS as f64) as u64,
    }
}

/// Chain nodes with their module.
fn chain_nodes(cfg: &PresetConfig) -> Vec<(&'static str, NodeSpec)> {
    let p = |t: &str| cfg.payload(t);
    // relay: subscription callback that publishes the next topic
    let relay = |name: &str, input: &str, output: &str, compute: ComputeModel| {
        NodeSpec::new(name)
            .sub(input, "on_input")
            .publish(output, p(output), "on_input")
            .compute(compute)
    };
    vec![
        (
            "sensing",
            NodeSpec::new("LidarDriver")
                .timer(cfg.sensor_period_ns, "on_scan")
                .publish(SENSOR_TOPIC, p(SENSOR_TOPIC), "on_scan")
                .publish("sensing/lidar/indices", p("sensing/lidar/indices"), "on_scan")
                .compute(uniform_ms(0.2, 0.5)),
        ),
        (
            "localization",
            NodeSpec::new("Filter")
                .sub(SENSOR_TOPIC, "on_cloud")
                .sub("sensing/lidar/indices", "on_indices")
                .publish("localization/filtered_points", p("localization/filtered_points"), "on_cloud")
                .compute(uniform_ms(1.0, 3.0)),
        ),
        (
            "localization",
            relay(
                "NDTScanMatcher",
                "localization/filtered_points",
                "localization/ndt_pose",
                uniform_ms(5.0, 12.0),
            ),
        ),
        (
            "localization",
            NodeSpec::new("EKFLocalizer")
                .sub("localization/ndt_pose", "on_pose")
                .timer_reading(cfg.period("EKFLocalizer"), "on_predict", "localization/ndt_pose")
                .publish("localization/kinematic_state", p("localization/kinematic_state"), "on_predict")
                .compute(uniform_ms(0.2, 0.8)),
        ),
        (
            "localization",
            relay(
                "StopFilter",
                "localization/kinematic_state",
                "localization/odometry",
                uniform_ms(0.1, 0.3),
            ),
        ),
        (
            "planning",
            NodeSpec::new("BehaviorPathPlannerNode")
                .sub("localization/odometry", "on_odometry")
                .timer_reading(
                    cfg.period("BehaviorPathPlannerNode"),
                    "on_plan",
                    "localization/odometry",
                )
                .publish("planning/path_with_lane_id", p("planning/path_with_lane_id"), "on_plan")
                .compute(uniform_ms(2.0, 8.0)),
        ),
        (
            "planning",
            relay(
                "BehaviorVelocityPlannerNode",
                "planning/path_with_lane_id",
                "planning/path",
                uniform_ms(2.0, 5.0),
            ),
        ),
        (
            "planning",
            relay(
                "ObstacleAvoidancePlanner",
                "planning/path",
                "planning/trajectory/avoidance",
                uniform_ms(2.0, 6.0),
            ),
        ),
        (
            "planning",
            relay(
                "ObstacleVelocityLimiterNode",
                "planning/trajectory/avoidance",
                "planning/trajectory/limited",
                uniform_ms(0.5, 2.0),
            ),
        ),
        (
            "planning",
            relay(
                "ObstacleStopPlannerNode",
                "planning/trajectory/limited",
                "planning/trajectory/stop",
                uniform_ms(0.5, 2.0),
            ),
        ),
        (
            "planning",
            relay(
                "ScenarioSelectorNode",
                "planning/trajectory/stop",
                "planning/trajectory/scenario",
                uniform_ms(0.1, 0.5),
            ),
        ),
        (
            "planning",
            relay(
                "MotionVelocitySmootherNode",
                "planning/trajectory/scenario",
                "planning/trajectory/smoothed",
                uniform_ms(1.0, 4.0),
            ),
        ),
        (
            "planning",
            relay(
                "PlanningValidator",
                "planning/trajectory/smoothed",
                "planning/trajectory",
                uniform_ms(0.2, 0.8),
            ),
        ),
        (
            "control",
            NodeSpec::new("Controller")
                .sub("planning/trajectory", "on_trajectory")
                .timer_reading(cfg.period("Controller"), "on_control", "planning/trajectory")
                .publish("control/command", p("control/command"), "on_control")
                .compute(uniform_ms(0.5, 2.0)),
        ),
        (
            "vehicle",
            relay(
                "VehicleCmdGate",
                "control/command",
                "vehicle/command",
                uniform_ms(0.1, 0.3),
            ),
        ),
    ]
}

/// Build the preset graph, its module manifest and the resolved chain.
///
/// Modules that host chain nodes keep at least that many nodes, even when
/// the scaled count is smaller.
pub fn build_mini_autoware(
    cfg: &PresetConfig,
) -> Result<(WorkloadSpec, ModuleManifest, ChainSpec), WorkloadError> {
    let nominal = cfg.nominal_counts()?;
    let chain = chain_nodes(cfg);
    let mut per_module: BTreeMap<&str, Vec<NodeSpec>> = BTreeMap::new();
    for (m, n) in chain {
        per_module.entry(m).or_default().push(n);
    }

    // filler nodes form one ring of 1 KB / 10 Hz traffic across modules
    let mut filler_names = Vec::new();
    for &(module, count) in &nominal {
        let have = per_module.get(module).map_or(0, Vec::len);
        for i in 0..count.saturating_sub(have) {
            filler_names.push((module, format!("{module}_node_{i:02}")));
        }
    }
    let total_fill = filler_names.len();
    for (idx, (module, name)) in filler_names.iter().enumerate() {
        let upstream = &filler_names[(idx + total_fill - 1) % total_fill].1;
        let node = NodeSpec::new(name.clone())
            .timer(cfg.filler_period_ns, "on_timer")
            .sub(&format!("filler/{upstream}"), "on_input")
            .publish(&format!("filler/{name}"), cfg.filler_payload, "on_timer")
            .compute(cfg.filler_compute.clone());
        per_module.entry(module).or_default().push(node);
    }

    let mut spec = WorkloadSpec::default();
    let mut manifest = ModuleManifest::default();
    for &(module, _) in &nominal {
        let nodes = per_module.remove(module).unwrap_or_default();
        if nodes.is_empty() {
            return Err(WorkloadError::Invalid(format!("module `{module}` is empty")));
        }
        manifest.modules.push(ModuleEntry {
            name: module.to_string(),
            nodes: nodes.iter().map(|n| n.name.clone()).collect(),
        });
        spec.nodes.extend(nodes);
    }
    manifest
        .launch_params
        .insert("preset".into(), "mini-autoware".into());
    manifest
        .launch_params
        .insert("preset.scale".into(), cfg.scale.to_string());
    spec.manifest = manifest.clone();

    let chain = parse_chain_spec(CHAIN_TEXT).map_err(|e| WorkloadError::Invalid(e.to_string()))?;
    let report = crate::model::validate_graph(&spec, &chain);
    let resolved = match report.chain {
        Some(c) if report.valid() => c,
        _ => {
            let msgs: Vec<String> = report.fatal().map(|f| f.message.clone()).collect();
            return Err(WorkloadError::Invalid(msgs.join("; ")));
        }
    };
    Ok((spec, manifest, resolved))
}
