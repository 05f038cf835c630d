//! Trace analysis: chain paths, data age and its decomposition, statistics,
//! reports and histograms.

mod paths;
mod report;
mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use paths::{
    data_age_series, decompose, kpi_series, reconstruct_paths, HopBreakdown, HopEvent, KpiSeries,
    LatencyBreakdown, PathInstance,
};
pub use report::{
    parse_report_csv, render_report, Kpi, Report, ReportRow, SummaryTable, COLUMNS, CSV_HEADER,
};
pub use stats::{histogram, histogram_csv, jitter, quantile, summarize, HistogramBin, StatsSummary};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("chain is not resolved against a workload graph")]
    UnresolvedChain,
    #[error("trace holds no dispatch of the first chain hop `{0}`")]
    NoHopZeroEvents(String),
    #[error("path of sensor seq {0} is incomplete")]
    IncompletePath(u64),
    #[error("timestamps of sensor seq {0} go backwards along the path")]
    NonMonotonic(u64),
    #[error("empty input")]
    EmptyInput,
    #[error("sample contains NaN or infinity")]
    NonFinite,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("bin width must be positive, got {0}")]
    InvalidBinWidth(f64),
    #[error("report CSV line {0}: {1}")]
    Csv(usize, String),
}

/// Per-process usage at one sampler tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessUsage {
    pub pid: i32,
    /// 100 == one core fully busy over the interval.
    pub cpu_percent: f64,
    pub rss_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceSample {
    pub t: u64,
    pub processes: Vec<ProcessUsage>,
    /// Free-form labels (run id, group, variant).
    pub tags: Vec<String>,
}

impl ResourceSample {
    pub fn total_cpu(&self) -> f64 {
        self.processes.iter().map(|p| p.cpu_percent).sum()
    }

    pub fn total_rss(&self) -> u64 {
        self.processes.iter().map(|p| p.rss_bytes).sum()
    }
}

/// Mean of the per-tick summed CPU usage.
pub fn mean_cpu(samples: &[ResourceSample]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    Some(samples.iter().map(ResourceSample::total_cpu).sum::<f64>() / samples.len() as f64)
}
