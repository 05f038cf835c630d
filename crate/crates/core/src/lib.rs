//! Desk-scale testbed for end-to-end latency of pub/sub callback graphs.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: workload graphs, module manifests, computation chains and
//!   deployment plans, plus the `workload.spec` / `chain.spec` text formats.
//! - [`middleware`]: topic-based publish/subscribe with keep-last queues, an
//!   in-process path and a loopback UDP path (best-effort or acknowledged).
//! - [`trace`]: per-producer event buffers and the line-oriented trace format.
//! - [`workload`]: node executors (timers, subscriptions, busy-spin compute)
//!   and the mini-Autoware preset graph.
//! - [`analysis`]: chain path reconstruction, data-age latency and its
//!   idle/communication/compute decomposition, statistics and reports.
//! - [`benchmarks`]: ping-pong round trip and frame-rate sweeps.
//! - [`orchestrator`]: deployment variants, process groups, ramp-up and
//!   per-process CPU/memory sampling.

pub mod analysis;
pub mod benchmarks;
pub mod clock;
pub mod middleware;
pub mod model;
pub mod orchestrator;
pub mod trace;
pub mod workload;


pub use analysis::{LatencyBreakdown, PathInstance, StatsSummary};
pub use middleware::{Bus, DeliveryMode, MessageEnvelope};
pub use model::{
    ChainHop, ChainSpec, DeploymentPlan, ModuleManifest, NodeSpec, QosPolicy, WorkloadSpec,
};
pub use trace::{TraceEvent, TraceLog, TraceSession};
