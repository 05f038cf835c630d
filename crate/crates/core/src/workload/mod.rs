//! Node runtime with synthetic busy-work, and the preset graph.

mod compute;
mod preset;
mod runtime;

use thiserror::Error;

pub use compute::{busy_compute, sample_duration};
pub use preset::{build_mini_autoware, PresetConfig, CHAIN_TEXT, MODULE_NODE_COUNTS, SENSOR_TOPIC};
pub use runtime::{run_node, ExecutorConfig, NodeHost, NodeReport, NodeRuntime};

use crate::middleware::MiddlewareError;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error(transparent)]
    Middleware(#[from] MiddlewareError),
    #[error("invalid workload: {0}")]
    Invalid(String),
    #[error("cannot start executor: {0}")]
    Spawn(String),
}
