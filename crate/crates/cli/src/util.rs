use std::fmt;
use std::path::{Path, PathBuf};

use chainbench_core::model::{parse_size, DeploymentVariant};
use chainbench_core::orchestrator::{EXIT_CONFIG, EXIT_RUNTIME};

/// An error carrying the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl fmt::Display) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.to_string(),
        }
    }

    pub fn runtime(message: impl fmt::Display) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;

pub trait OrRuntime<T> {
    fn or_runtime(self, what: &str) -> CliResult<T>;
}

impl<T, E: fmt::Display> OrRuntime<T> for Result<T, E> {
    fn or_runtime(self, what: &str) -> CliResult<T> {
        self.map_err(|e| Failure::runtime(format!("{what}: {e}")))
    }
}

/// `1.5s`, `200ms`, `2m`, `500us`, or plain seconds.
pub fn parse_duration(text: &str) -> Result<u64, String> {
    let t = text.trim();
    let (num, scale) = [("ms", 1e6), ("us", 1e3), ("ns", 1.0), ("s", 1e9), ("m", 60e9), ("h", 3600e9)]
        .iter()
        .find_map(|&(suffix, scale)| t.strip_suffix(suffix).map(|n| (n, scale)))
        .unwrap_or((t, 1e9));
    let v: f64 = num.trim().parse().map_err(|_| format!("invalid duration `{text}`"))?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!("invalid duration `{text}`"));
    }
    Ok((v * scale).round() as u64)
}

pub fn parse_bytes(text: &str) -> Result<usize, String> {
    parse_size(text).ok_or_else(|| format!("invalid size `{text}` (e.g. 512, 4KB, 0.92MB)"))
}

/// One variant, or all three for `all`.
pub fn parse_deployments(text: &str) -> Result<Vec<DeploymentVariant>, String> {
    if text == "all" {
        return Ok(DeploymentVariant::ALL.to_vec());
    }
    DeploymentVariant::parse(text)
        .map(|v| vec![v])
        .ok_or_else(|| format!("unknown deployment `{text}` (in-process, single-group, multi-group, all)"))
}

pub fn ensure_dir(dir: &Path) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).or_runtime(&format!("cannot create {}", dir.display()))?;
    Ok(dir.to_path_buf())
}

pub fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).or_runtime(&format!("cannot write {}", path.display()))
}
