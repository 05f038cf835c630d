//! `chainbench`: run callback-chain workloads under deployment variants,
//! analyze their traces, and run the ping-pong and frame-rate benchmarks.

mod analyze;
mod bench;
mod record;
mod run;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use chainbench_core::benchmarks::{
    run_bench_host, FrameRate, DEFAULT_FRAME_BYTES, DEFAULT_ITERATIONS, DEFAULT_ITERATION_NS, DEFAULT_REPEATS,
    DEFAULT_SWEEP_SIZES, DEFAULT_TIMEOUT_NS, DEFAULT_WORKER_COMPUTE_NS, DESK_RATE_RUNS, DESK_SWEEP_DURATION_NS,
    FULL_RATE_RUNS, FULL_SWEEP_DURATION_NS,
};
use chainbench_core::model::{DeploymentVariant, ResourceLimits};
use chainbench_core::orchestrator::{run_node_host, NodeHostArgs, EXIT_CONFIG};
use clap::{Args, Parser, Subcommand};

use crate::util::{parse_bytes, parse_deployments, parse_duration, CliResult, Failure};

#[derive(Parser)]
#[command(name = "chainbench", version, about, arg_required_else_help = true)]
struct Cli {
    /// Output directory; nothing is written outside it.
    #[arg(long, global = true, default_value = "chainbench-out")]
    out: PathBuf,
    /// Switch desk defaults (durations, run counts) to full-length values.
    #[arg(long, global = true, alias = "paper-scale")]
    full_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Launch a workload repeatedly under one or all deployment variants.
    Run(RunCmd),
    /// Data-age statistics over recorded runs (or given trace files).
    Analyze(AnalyzeCmd),
    /// Print a report CSV as a text table.
    Report(ReportCmd),
    /// Microbenchmarks.
    #[command(subcommand, arg_required_else_help = true)]
    Bench(BenchCmd),
}

#[derive(Args)]
struct RunCmd {
    /// Built-in workload (mini-autoware).
    #[arg(long, conflicts_with = "spec")]
    preset: Option<String>,
    /// Fraction of the preset's node counts, in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Workload file; needs --chain.
    #[arg(long, requires = "chain")]
    spec: Option<PathBuf>,
    /// Chain file for --spec.
    #[arg(long, requires = "spec")]
    chain: Option<PathBuf>,
    /// in-process, single-group, multi-group or all.
    #[arg(long, default_value = "all")]
    deployment: String,
    /// Valid runs per variant [default: 3, or 100 with --full-scale].
    #[arg(long)]
    runs: Option<u32>,
    /// Length of one run.
    #[arg(long, value_parser = parse_duration)]
    duration: Option<u64>,
    /// Invalid runs tolerated per variant before giving up [default: --runs].
    #[arg(long)]
    retries: Option<u32>,
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    /// Executor threads per process [default: one per node].
    #[arg(long)]
    workers: Option<usize>,
    /// Pin every process group to these CPUs, e.g. 0,1.
    #[arg(long, value_delimiter = ',')]
    cpus: Vec<usize>,
    /// CPU quota per process group, in cores.
    #[arg(long)]
    cpu_limit: Option<f64>,
    /// Memory limit per process group, e.g. 512MB.
    #[arg(long, value_parser = parse_bytes)]
    memory_limit: Option<usize>,
    /// Resource sampling interval.
    #[arg(long, value_parser = parse_duration, default_value = "200ms")]
    sample_interval: u64,
}

#[derive(Args)]
struct AnalyzeCmd {
    /// Restrict to these run ids.
    #[arg(long)]
    run: Vec<String>,
    /// Analyze trace files directly; needs --spec and --chain.
    #[arg(long)]
    trace: Vec<PathBuf>,
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    chain: Option<PathBuf>,
    /// Variant label for --trace input.
    #[arg(long, default_value = "in-process", value_parser = parse_one_deployment)]
    variant: DeploymentVariant,
    /// Histogram bin width in milliseconds.
    #[arg(long, default_value_t = 1.0)]
    bin_width: f64,
}

#[derive(Args)]
struct ReportCmd {
    /// Report CSV [default: <out>/analysis/report.csv].
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Round trips between two nodes over a message-size sweep.
    Pingpong(PingPongCmd),
    /// Playback → worker at fixed frame rates or closed-loop maximum.
    Rate(RateCmd),
}

#[derive(Args)]
struct PingPongCmd {
    /// Message sizes, e.g. 1KB,8MB [default: the 13-size sweep].
    #[arg(long, value_delimiter = ',', value_parser = parse_bytes)]
    size: Vec<usize>,
    /// best-effort or reliable.
    #[arg(long, default_value = "best-effort", value_parser = bench::parse_mode)]
    mode: chainbench_core::DeliveryMode,
    /// in-process, single-group, multi-group or all.
    #[arg(long, default_value = "in-process")]
    deployment: String,
    /// Per size and repeat [default: 30s, or 30m with --full-scale].
    #[arg(long, value_parser = parse_duration)]
    duration: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_REPEATS)]
    repeats: usize,
    /// Round trips slower than this count as lost.
    #[arg(long, value_parser = parse_duration)]
    timeout: Option<u64>,
}

#[derive(Args)]
struct RateCmd {
    /// 10, 30, 60, max, or all.
    #[arg(long, default_value = "all")]
    fps: String,
    /// in-process, single-group, multi-group or all.
    #[arg(long, default_value = "in-process")]
    deployment: String,
    /// Launches per setup [default: 10, or 100 with --full-scale].
    #[arg(long)]
    runs: Option<u32>,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    iterations: u32,
    /// Length of one iteration.
    #[arg(long, value_parser = parse_duration)]
    duration: Option<u64>,
    /// Frame size.
    #[arg(long, value_parser = parse_bytes)]
    payload: Option<usize>,
    /// Worker busy time per frame.
    #[arg(long, value_parser = parse_duration)]
    compute: Option<u64>,
    #[arg(long, default_value = "best-effort", value_parser = bench::parse_mode)]
    mode: chainbench_core::DeliveryMode,
    #[arg(long, value_parser = parse_duration, default_value = "200ms")]
    sample_interval: u64,
}

fn parse_one_deployment(text: &str) -> Result<DeploymentVariant, String> {
    DeploymentVariant::parse(text).ok_or_else(|| format!("unknown deployment `{text}`"))
}

fn parse_rates(text: &str) -> Result<Vec<FrameRate>, String> {
    if text == "all" {
        return Ok(FrameRate::SETUPS.to_vec());
    }
    FrameRate::parse(text)
        .map(|r| vec![r])
        .ok_or_else(|| format!("unknown frame rate `{text}` (10, 30, 60, max, all)"))
}

/// Hidden child roles: `--role node-host ...` and `--role bench-host ...`.
#[derive(Parser)]
#[command(name = "chainbench")]
struct RoleArgs {
    #[arg(long)]
    role: String,
    #[arg(long)]
    module: Option<String>,
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn run_role(args: RoleArgs) -> i32 {
    match (args.role.as_str(), args.module, args.spec, args.run_id, args.config) {
        ("node-host", Some(module), Some(spec), Some(run_id), _) => run_node_host(&NodeHostArgs { module, spec, run_id }),
        ("bench-host", _, _, _, Some(config)) => run_bench_host(&config),
        (role, ..) => {
            eprintln!("invalid arguments for role `{role}`");
            EXIT_CONFIG
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<i32> {
    let out = &cli.out;
    match cli.command {
        Command::Run(a) => {
            let workload = match (&a.spec, &a.chain) {
                (Some(s), Some(c)) => run::load_workload_files(s, c)?,
                _ => run::load_preset(a.preset.as_deref().unwrap_or("mini-autoware"), a.scale)?,
            };
            let runs = a.runs.unwrap_or(if cli.full_scale { run::FULL_RUNS } else { run::DESK_RUNS });
            let limits = (a.cpu_limit.is_some() || a.memory_limit.is_some()).then_some(ResourceLimits {
                cpu_cores: a.cpu_limit,
                memory_bytes: a.memory_limit.map(|m| m as u64),
            });
            let opts = run::RunOptions {
                variants: parse_deployments(&a.deployment).map_err(Failure::config)?,
                runs,
                retries: a.retries.unwrap_or(runs),
                duration_ns: a.duration.unwrap_or(run::DEFAULT_RUN_NS),
                seed: a.seed,
                workers: a.workers,
                cpus: a.cpus,
                limits,
                sample_interval_ns: a.sample_interval,
            };
            run::cmd_run(out, &workload, &opts)
        }
        Command::Analyze(a) => {
            if a.bin_width.is_nan() || a.bin_width <= 0.0 {
                return Err(Failure::config("--bin-width must be positive"));
            }
            analyze::cmd_analyze(
                out,
                &analyze::AnalyzeOptions {
                    runs: a.run,
                    traces: a.trace,
                    spec: a.spec,
                    chain: a.chain,
                    variant: a.variant,
                    bin_width_ms: a.bin_width,
                },
            )
        }
        Command::Report(a) => analyze::cmd_report(out, a.csv.as_deref()),
        Command::Bench(BenchCmd::Pingpong(a)) => bench::cmd_pingpong(
            out,
            &bench::PingPongOptions {
                sizes: if a.size.is_empty() { DEFAULT_SWEEP_SIZES.to_vec() } else { a.size },
                mode: a.mode,
                variants: parse_deployments(&a.deployment).map_err(Failure::config)?,
                duration_ns: a.duration.unwrap_or(if cli.full_scale {
                    FULL_SWEEP_DURATION_NS
                } else {
                    DESK_SWEEP_DURATION_NS
                }),
                repeats: a.repeats,
                timeout_ns: a.timeout.unwrap_or(DEFAULT_TIMEOUT_NS),
            },
        ),
        Command::Bench(BenchCmd::Rate(a)) => bench::cmd_rate(
            out,
            &bench::RateOptions {
                rates: parse_rates(&a.fps).map_err(Failure::config)?,
                variants: parse_deployments(&a.deployment).map_err(Failure::config)?,
                runs: a.runs.unwrap_or(if cli.full_scale { FULL_RATE_RUNS } else { DESK_RATE_RUNS }),
                iterations: a.iterations,
                iteration_ns: a.duration.unwrap_or(DEFAULT_ITERATION_NS),
                payload: a.payload.unwrap_or(DEFAULT_FRAME_BYTES),
                compute_ns: a.compute.unwrap_or(DEFAULT_WORKER_COMPUTE_NS),
                mode: a.mode,
                sample_interval_ns: a.sample_interval,
            },
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = if std::env::args().nth(1).as_deref() == Some("--role") {
        match RoleArgs::try_parse() {
            Ok(a) => run_role(a),
            Err(e) => {
                let _ = e.print();
                EXIT_CONFIG
            }
        }
    } else {
        match dispatch(Cli::parse()) {
            Ok(code) => code,
            Err(f) => {
                eprintln!("error: {}", f.message);
                f.code
            }
        }
    };
    ExitCode::from(code.clamp(0, 255) as u8)
}
