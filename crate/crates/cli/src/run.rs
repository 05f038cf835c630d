//! `chainbench run`: repeated launches of a workload per deployment variant.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use chainbench_core::analysis::{kpi_series, reconstruct_paths, ResourceSample};
use chainbench_core::clock::now_ns;
use chainbench_core::model::{
    parse_chain_spec, parse_workload_spec, render_chain_spec, render_workload_spec, validate_graph, ChainSpec,
    DeploymentPlan, DeploymentVariant, IsolationLevel, ModuleManifest, ResourceLimits, WorkloadSpec,
};
use chainbench_core::orchestrator::{
    install_stop_handler, launch, measure_rampup, stop_requested, IsolationDriver, LaunchConfig, OrchestratorError,
    DEFAULT_GRACE, EXIT_RUNTIME,
};
use chainbench_core::trace::load_run;
use chainbench_core::workload::{build_mini_autoware, PresetConfig};

use crate::record::{claim_run_dir, spec_hash, write_record, Outcome, RunRecord, CHAIN_FILE, RESOURCES_FILE, SPEC_FILE};
use crate::util::{write_file, CliResult, Failure, OrRuntime};

pub const DESK_RUNS: u32 = 3;
pub const FULL_RUNS: u32 = 100;
pub const DEFAULT_RUN_NS: u64 = 10_000_000_000;

pub struct Workload {
    pub spec: WorkloadSpec,
    pub manifest: ModuleManifest,
    pub chain: ChainSpec,
    pub spec_text: String,
    pub chain_text: String,
}

/// Parse and resolve a workload file plus its chain file.
pub fn load_workload_files(spec_path: &Path, chain_path: &Path) -> CliResult<Workload> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Failure::config(format!("{}: {e}", p.display())));
    let spec_text = read(spec_path)?;
    let chain_text = read(chain_path)?;
    let spec = parse_workload_spec(&spec_text).map_err(|e| Failure::config(format!("{}: {e}", spec_path.display())))?;
    let chain = parse_chain_spec(&chain_text).map_err(|e| Failure::config(format!("{}: {e}", chain_path.display())))?;
    let report = validate_graph(&spec, &chain);
    for f in &report.findings {
        log::warn!("{}: {}", spec_path.display(), f.message);
    }
    let chain = match (report.valid(), report.chain) {
        (true, Some(c)) => c,
        _ => {
            let fatal: Vec<String> = report.findings.iter().map(|f| f.message.clone()).collect();
            return Err(Failure::config(format!("invalid workload: {}", fatal.join("; "))));
        }
    };
    Ok(Workload {
        manifest: spec.manifest.clone(),
        spec,
        chain,
        spec_text,
        chain_text,
    })
}

pub fn load_preset(name: &str, scale: f64) -> CliResult<Workload> {
    if name != "mini-autoware" {
        return Err(Failure::config(format!("unknown preset `{name}` (available: mini-autoware)")));
    }
    let (mut spec, manifest, chain) =
        build_mini_autoware(&PresetConfig::with_scale(scale)).map_err(Failure::config)?;
    spec.manifest = manifest.clone();
    Ok(Workload {
        spec_text: render_workload_spec(&spec),
        chain_text: render_chain_spec(&chain),
        spec,
        manifest,
        chain,
    })
}

pub struct RunOptions {
    pub variants: Vec<DeploymentVariant>,
    pub runs: u32,
    pub retries: u32,
    pub duration_ns: u64,
    pub seed: u64,
    pub workers: Option<usize>,
    pub cpus: Vec<usize>,
    pub limits: Option<ResourceLimits>,
    pub sample_interval_ns: u64,
}

fn plan_for(variant: DeploymentVariant, opts: &RunOptions) -> DeploymentPlan {
    let mut plan = DeploymentPlan::new(variant);
    if !opts.cpus.is_empty() {
        plan.affinity = Some([("*".to_string(), opts.cpus.clone())].into());
    }
    if opts.limits.is_some() {
        plan.isolation = IsolationLevel::ProcessGroupWithLimits;
        plan.limits = opts.limits;
    }
    plan
}

/// Execute the runs; returns the process exit code.
pub fn cmd_run(out: &Path, workload: &Workload, opts: &RunOptions) -> CliResult<i32> {
    if opts.runs == 0 {
        return Err(Failure::config("--runs must be at least 1"));
    }
    if opts.duration_ns == 0 {
        return Err(Failure::config("--duration must be positive"));
    }
    install_stop_handler();
    let exe = std::env::current_exe().or_runtime("cannot locate own executable")?;
    let isolation = IsolationDriver::probe();
    let mut shortfall = Vec::new();
    for &variant in &opts.variants {
        let plan = plan_for(variant, opts);
        let (mut valid, mut failed, mut attempt) = (0u32, 0u32, 0u32);
        while valid < opts.runs && !stop_requested() {
            attempt += 1;
            let record = run_once(out, workload, &plan, opts, &exe, &isolation, attempt)?;
            match &record.outcome {
                Outcome::Valid => valid += 1,
                Outcome::Invalid { reason } | Outcome::Failed { reason } => {
                    failed += 1;
                    eprintln!("run {} excluded: {reason}", record.run_id);
                }
            }
            println!(
                "{} {} {} ramp-up {} paths {}/{}",
                variant,
                record.run_id,
                record.outcome.label(),
                record.rampup_ns.map_or("-".to_string(), |r| format!("{:.1} ms", r as f64 / 1e6)),
                record.complete_paths,
                record.complete_paths + record.incomplete_paths,
            );
            if failed > opts.retries {
                break;
            }
        }
        if valid < opts.runs {
            shortfall.push(format!("{variant}: {valid}/{} valid runs", opts.runs));
        }
    }
    if stop_requested() {
        eprintln!("interrupted");
        return Ok(EXIT_RUNTIME);
    }
    if shortfall.is_empty() {
        Ok(0)
    } else {
        eprintln!("retry budget exhausted: {}", shortfall.join(", "));
        Ok(EXIT_RUNTIME)
    }
}

fn resources_csv(samples: &[ResourceSample]) -> String {
    let mut s = String::from("t_ns,pid,cpu_percent,rss_bytes\n");
    for sample in samples {
        for p in &sample.processes {
            s.push_str(&format!("{},{},{},{}\n", sample.t, p.pid, p.cpu_percent, p.rss_bytes));
        }
    }
    s
}

#[allow(clippy::too_many_arguments)]
fn run_once(
    out: &Path,
    workload: &Workload,
    plan: &DeploymentPlan,
    opts: &RunOptions,
    exe: &Path,
    isolation: &IsolationDriver,
    attempt: u32,
) -> CliResult<RunRecord> {
    let (run_id, dir) = claim_run_dir(out, plan.variant.short_label().to_lowercase().as_str())?;
    write_file(&dir.join(SPEC_FILE), &workload.spec_text)?;
    write_file(&dir.join(CHAIN_FILE), &workload.chain_text)?;
    let cfg = LaunchConfig {
        exe: Some(exe.to_path_buf()),
        run_dir: dir.clone(),
        run_id: run_id.clone(),
        duration_ns: Some(opts.duration_ns),
        seed: opts.seed.wrapping_add(attempt as u64),
        workers: opts.workers,
        isolation: isolation.clone(),
    };
    let launch_unix_ms = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
    let mut record = RunRecord {
        run_id: run_id.clone(),
        variant: plan.variant,
        plan: plan.clone(),
        spec_hash: spec_hash(&workload.spec_text, &workload.chain_text),
        spec_file: SPEC_FILE.into(),
        chain_file: CHAIN_FILE.into(),
        trace_files: Vec::new(),
        attempt,
        launch_unix_ms,
        start_ts: now_ns(),
        end_ts: 0,
        duration_ns: opts.duration_ns,
        rampup_ns: None,
        not_ready: Vec::new(),
        groups: Vec::new(),
        orphans: Vec::new(),
        complete_paths: 0,
        incomplete_paths: 0,
        mean_cpu_percent: None,
        peak_rss_bytes: 0,
        node_reports: Vec::new(),
        warnings: Vec::new(),
        outcome: Outcome::Valid,
    };
    let mut handle = match launch(&workload.spec, &workload.manifest, plan, &cfg) {
        Ok(h) => h,
        Err(e) => {
            record.end_ts = now_ns();
            record.outcome = Outcome::Failed { reason: e.to_string() };
            write_record(&dir, &record)?;
            let code = e.exit_code();
            return Err(match e {
                OrchestratorError::Config(_) => Failure::config(e),
                _ => Failure { code, message: e.to_string() },
            });
        }
    };
    record.start_ts = handle.start_ts;
    record.warnings = handle.warnings.clone();
    let sampler = handle.sample_resources(opts.sample_interval_ns);
    handle.wait();
    let sampled = sampler.stop();
    let teardown = handle.teardown(DEFAULT_GRACE);
    record.end_ts = now_ns();
    record.groups = teardown.statuses.clone();
    record.orphans = teardown.orphans.clone();
    record.node_reports = teardown.node_reports.clone();
    record.mean_cpu_percent = chainbench_core::analysis::mean_cpu(&sampled.samples);
    record.peak_rss_bytes = sampled.samples.iter().map(ResourceSample::total_rss).max().unwrap_or(0);
    write_file(&dir.join(RESOURCES_FILE), &resources_csv(&sampled.samples))?;
    record.trace_files = handle
        .trace_paths()
        .iter()
        .filter(|p| p.exists())
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    drop(handle);

    let mut problems = Vec::new();
    if !record.orphans.is_empty() {
        problems.push(format!("orphan processes {:?}", record.orphans));
    }
    for (g, status) in &record.groups {
        if !status.is_clean() {
            problems.push(format!("group {g} ended {status:?}"));
        }
    }
    match load_run(&dir, &run_id) {
        Ok(trace) => {
            if trace.dropped_count > 0 {
                problems.push(format!("{} trace events dropped", trace.dropped_count));
            }
            match measure_rampup(&trace, &workload.spec, record.start_ts) {
                Ok(r) => record.rampup_ns = Some(r),
                Err(e) => {
                    problems.push(e.to_string());
                    record.not_ready = e.missing;
                }
            }
            match reconstruct_paths(&trace, &workload.chain) {
                Ok(paths) => {
                    let series = kpi_series(&paths);
                    record.complete_paths = series.complete_paths;
                    record.incomplete_paths = series.incomplete_paths;
                    if series.e2e.is_empty() {
                        problems.push("no complete chain path".into());
                    }
                }
                Err(e) => problems.push(e.to_string()),
            }
        }
        Err(e) => problems.push(format!("trace: {e}")),
    }
    if !problems.is_empty() {
        record.outcome = Outcome::Invalid {
            reason: problems.join("; "),
        };
    }
    write_record(&dir, &record)?;
    Ok(record)
}
