//! Host capabilities for the container analog: process groups, CPU pinning
//! and control-group limits.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::model::ResourceLimits;

const CGROUP_ROOT: &str = "/sys/fs/cgroup";
const CFS_PERIOD_US: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CgroupFlavor {
    /// Separate `cpu` and `memory` hierarchies.
    V1 { cpu: PathBuf, memory: PathBuf },
    /// Unified hierarchy with both controllers enabled.
    V2 { root: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IsolationDriver {
    pub process_group: bool,
    pub cpu_affinity: bool,
    pub resource_limits: bool,
    pub cgroups: Option<CgroupFlavor>,
    pub host_cpus: usize,
}

impl IsolationDriver {
    pub fn probe() -> Self {
        let host_cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
        // SAFETY: zeroed cpu_set_t is a valid out-parameter.
        let cpu_affinity = unsafe {
            let mut set: libc::cpu_set_t = std::mem::zeroed();
            libc::sched_getaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &mut set) == 0
        };
        let cgroups = probe_cgroups(Path::new(CGROUP_ROOT));
        Self {
            process_group: true,
            cpu_affinity,
            resource_limits: cgroups.is_some(),
            cgroups,
            host_cpus,
        }
    }

    /// A driver that reports nothing beyond process groups.
    pub fn minimal() -> Self {
        Self {
            process_group: true,
            cpu_affinity: false,
            resource_limits: false,
            cgroups: None,
            host_cpus: 1,
        }
    }

    /// Create a control group named `name` with `limits` and move `pid` in.
    pub fn apply_limits(&self, name: &str, pid: u32, limits: &ResourceLimits) -> io::Result<CgroupGuard> {
        let flavor = self
            .cgroups
            .as_ref()
            .ok_or_else(|| io::Error::new(io::ErrorKind::Unsupported, "no writable cgroup hierarchy"))?;
        let mut dirs = Vec::new();
        let result = (|| {
            match flavor {
                CgroupFlavor::V1 { cpu, memory } => {
                    if let Some(cores) = limits.cpu_cores {
                        let d = cpu.join("chainbench").join(name);
                        fs::create_dir_all(&d)?;
                        dirs.push(d.clone());
                        fs::write(d.join("cpu.cfs_period_us"), CFS_PERIOD_US.to_string())?;
                        let quota = (cores * CFS_PERIOD_US as f64).round() as u64;
                        fs::write(d.join("cpu.cfs_quota_us"), quota.to_string())?;
                        fs::write(d.join("cgroup.procs"), pid.to_string())?;
                    }
                    if let Some(bytes) = limits.memory_bytes {
                        let d = memory.join("chainbench").join(name);
                        fs::create_dir_all(&d)?;
                        dirs.push(d.clone());
                        fs::write(d.join("memory.limit_in_bytes"), bytes.to_string())?;
                        fs::write(d.join("cgroup.procs"), pid.to_string())?;
                    }
                }
                CgroupFlavor::V2 { root } => {
                    let d = root.join("chainbench").join(name);
                    fs::create_dir_all(&d)?;
                    dirs.push(d.clone());
                    if let Some(cores) = limits.cpu_cores {
                        let quota = (cores * CFS_PERIOD_US as f64).round() as u64;
                        fs::write(d.join("cpu.max"), format!("{quota} {CFS_PERIOD_US}"))?;
                    }
                    if let Some(bytes) = limits.memory_bytes {
                        fs::write(d.join("memory.max"), bytes.to_string())?;
                    }
                    fs::write(d.join("cgroup.procs"), pid.to_string())?;
                }
            }
            Ok(())
        })();
        let guard = CgroupGuard { dirs };
        result.map(|_| guard)
    }
}

/// Removes the control groups it created once their processes are gone.
#[derive(Debug, Default)]
pub struct CgroupGuard {
    dirs: Vec<PathBuf>,
}

impl CgroupGuard {
    pub fn dirs(&self) -> &[PathBuf] {
        &self.dirs
    }
}

impl Drop for CgroupGuard {
    fn drop(&mut self) {
        for d in self.dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }
}

fn writable_probe(dir: &Path) -> bool {
    let probe = dir.join("chainbench").join(format!("probe-{}", std::process::id()));
    let ok = fs::create_dir_all(&probe).is_ok();
    let _ = fs::remove_dir(&probe);
    ok
}

fn probe_cgroups(root: &Path) -> Option<CgroupFlavor> {
    let cpu = root.join("cpu");
    let memory = root.join("memory");
    if cpu.join("cpu.cfs_quota_us").exists()
        && memory.join("memory.limit_in_bytes").exists()
        && writable_probe(&cpu)
        && writable_probe(&memory)
    {
        return Some(CgroupFlavor::V1 { cpu, memory });
    }
    for unified in [root.to_path_buf(), root.join("unified")] {
        let controllers = fs::read_to_string(unified.join("cgroup.controllers")).unwrap_or_default();
        let has = |c: &str| controllers.split_whitespace().any(|x| x == c);
        if has("cpu") && has("memory") && writable_probe(&unified) {
            return Some(CgroupFlavor::V2 { root: unified });
        }
    }
    None
}
