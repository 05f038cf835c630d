//! Per-run records persisted next to the traces.

use std::path::{Path, PathBuf};

use chainbench_core::model::{DeploymentPlan, DeploymentVariant};
use chainbench_core::orchestrator::GroupStatus;
use chainbench_core::workload::NodeReport;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::util::{CliResult, Failure, OrRuntime};

pub const RECORD_FILE: &str = "record.json";
pub const SPEC_FILE: &str = "workload.spec";
pub const CHAIN_FILE: &str = "chain.spec";
pub const RESOURCES_FILE: &str = "resources.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Valid,
    /// Ran, but the trace cannot be used; excluded from analysis.
    Invalid { reason: String },
    Failed { reason: String },
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Valid => "valid",
            Outcome::Invalid { .. } => "invalid",
            Outcome::Failed { .. } => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub variant: DeploymentVariant,
    pub plan: DeploymentPlan,
    /// SHA-256 over the workload and chain files.
    pub spec_hash: String,
    /// Paths below are relative to the run directory.
    pub spec_file: String,
    pub chain_file: String,
    pub trace_files: Vec<String>,
    pub attempt: u32,
    pub launch_unix_ms: u128,
    pub start_ts: u64,
    pub end_ts: u64,
    pub duration_ns: u64,
    pub rampup_ns: Option<u64>,
    pub not_ready: Vec<String>,
    pub groups: Vec<(String, GroupStatus)>,
    pub orphans: Vec<i32>,
    pub complete_paths: usize,
    pub incomplete_paths: usize,
    pub mean_cpu_percent: Option<f64>,
    pub peak_rss_bytes: u64,
    pub node_reports: Vec<NodeReport>,
    pub warnings: Vec<String>,
    pub outcome: Outcome,
}

pub fn spec_hash(spec_text: &str, chain_text: &str) -> String {
    let mut h = Sha256::new();
    h.update(spec_text.as_bytes());
    h.update([0u8]);
    h.update(chain_text.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn runs_root(out: &Path) -> PathBuf {
    out.join("runs")
}

/// Claim a fresh `<out>/runs/<prefix>-NNNN` directory.
pub fn claim_run_dir(out: &Path, prefix: &str) -> CliResult<(String, PathBuf)> {
    let root = runs_root(out);
    std::fs::create_dir_all(&root).or_runtime(&format!("cannot create {}", root.display()))?;
    for n in 1.. {
        let id = format!("{prefix}-{n:04}");
        let dir = root.join(&id);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok((id, dir)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Failure::runtime(format!("cannot create {}: {e}", dir.display()))),
        }
    }
    unreachable!()
}

pub fn write_record(dir: &Path, record: &RunRecord) -> CliResult<()> {
    let json = serde_json::to_string_pretty(record).or_runtime("cannot encode run record")?;
    let path = dir.join(RECORD_FILE);
    std::fs::write(&path, json).or_runtime(&format!("cannot write {}", path.display()))
}

/// Every record under `<out>/runs`, sorted by run id.
pub fn load_records(out: &Path) -> CliResult<Vec<(PathBuf, RunRecord)>> {
    let root = runs_root(out);
    let entries = match std::fs::read_dir(&root) {
        Ok(e) => e,
        Err(_) => return Ok(Vec::new()),
    };
    let mut dirs: Vec<PathBuf> = entries.filter_map(Result::ok).map(|e| e.path()).filter(|p| p.is_dir()).collect();
    dirs.sort();
    let mut out = Vec::new();
    for dir in dirs {
        let path = dir.join(RECORD_FILE);
        let Ok(text) = std::fs::read_to_string(&path) else { continue };
        let record: RunRecord =
            serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        out.push((dir, record));
    }
    Ok(out)
}
