//! Workload graphs, module manifests, computation chains and deployment plans.

mod chain;
mod config;
mod types;
mod validate;

pub use chain::{parse_chain_spec, render_chain_spec, ChainError};
pub use config::{
    format_ms, parse_ms, parse_size, parse_workload_spec, render_workload_spec, ConfigError,
    ConfigErrorKind,
};
pub use types::*;
pub use validate::{validate_graph, Finding, Severity, ValidationReport};
