//! `chainbench bench pingpong|rate`.

use std::path::Path;

use chainbench_core::benchmarks::{
    pingpong_sweep, rate_run, FrameRate, Launcher, PingPongConfig, RateConfig, SweepTable,
};
use chainbench_core::middleware::DeliveryMode;
use chainbench_core::model::DeploymentVariant;

use crate::util::{ensure_dir, write_file, CliResult, Failure, OrRuntime};

pub struct PingPongOptions {
    pub sizes: Vec<usize>,
    pub mode: DeliveryMode,
    pub variants: Vec<DeploymentVariant>,
    pub duration_ns: u64,
    pub repeats: usize,
    pub timeout_ns: u64,
}

pub struct RateOptions {
    pub rates: Vec<FrameRate>,
    pub variants: Vec<DeploymentVariant>,
    pub runs: u32,
    pub iterations: u32,
    pub iteration_ns: u64,
    pub payload: usize,
    pub compute_ns: u64,
    pub mode: DeliveryMode,
    pub sample_interval_ns: u64,
}

pub fn parse_mode(text: &str) -> Result<DeliveryMode, String> {
    match text.replace('_', "-").as_str() {
        "best-effort" => Ok(DeliveryMode::BestEffort),
        "reliable" => Ok(DeliveryMode::reliable()),
        _ => Err(format!("unknown mode `{text}` (best-effort, reliable)")),
    }
}

fn mode_label(mode: DeliveryMode) -> &'static str {
    if mode.is_reliable() {
        "reliable"
    } else {
        "best_effort"
    }
}

fn launcher(out: &Path) -> CliResult<Launcher> {
    let exe = std::env::current_exe().or_runtime("cannot locate own executable")?;
    Ok(Launcher {
        exe: Some(exe),
        work_dir: ensure_dir(&out.join("bench").join("work"))?,
    })
}

pub fn cmd_pingpong(out: &Path, opts: &PingPongOptions) -> CliResult<i32> {
    if opts.duration_ns == 0 {
        return Err(Failure::config("--duration must be positive"));
    }
    let dir = ensure_dir(&out.join("bench"))?;
    let launcher = launcher(out)?;
    for &variant in &opts.variants {
        let mut base = PingPongConfig::new(opts.sizes[0], opts.mode, opts.duration_ns, variant);
        base.timeout_ns = opts.timeout_ns;
        base.launcher = launcher.clone();
        let table: SweepTable = pingpong_sweep(&opts.sizes, opts.repeats, opts.duration_ns, &base)
            .map_err(|e| Failure { code: e.exit_code(), message: e.to_string() })?;
        let path = dir.join(format!("pingpong_{}_{}.csv", variant.as_str(), mode_label(opts.mode)));
        write_file(&path, &table.csv())?;
        println!("{variant} {}:", mode_label(opts.mode));
        println!("{:>10}  {:>14}  {:>12}  {:>6}", "size", "mean_rtt_us", "packets", "lost");
        for row in &table.rows {
            let lost: u64 = row.results.iter().map(|r| r.lost).sum();
            println!(
                "{:>10}  {:>14.1}  {:>12.1}  {:>6}",
                row.message_size, row.mean_rtt_us, row.mean_packet_count, lost
            );
        }
        if let Some(rho) = table.size_rtt_spearman() {
            println!("size/RTT rank correlation: {rho:.3}");
        }
        println!("wrote {}", path.display());
    }
    Ok(0)
}

pub fn cmd_rate(out: &Path, opts: &RateOptions) -> CliResult<i32> {
    if opts.runs == 0 || opts.iterations == 0 {
        return Err(Failure::config("--runs and --iterations must be at least 1"));
    }
    if opts.iteration_ns == 0 {
        return Err(Failure::config("--duration must be positive"));
    }
    let dir = ensure_dir(&out.join("bench"))?;
    let launcher = launcher(out)?;
    let mut summary = String::from("variant,rate,mean_latency_ms,mean_jitter_ms,mean_cpu_percent,published,drops\n");
    println!(
        "{:<14}  {:>6}  {:>12}  {:>11}  {:>8}  {:>6}",
        "variant", "rate", "latency_ms", "jitter_ms", "cpu_%", "drops"
    );
    for &variant in &opts.variants {
        let mut per_variant = String::new();
        for &rate in &opts.rates {
            let mut cfg = RateConfig::new(rate, variant);
            cfg.runs = opts.runs;
            cfg.iterations_per_run = opts.iterations;
            cfg.iteration_ns = opts.iteration_ns;
            cfg.payload = opts.payload;
            cfg.compute_ns = opts.compute_ns;
            cfg.mode = opts.mode;
            cfg.sample_interval_ns = opts.sample_interval_ns;
            cfg.launcher = launcher.clone();
            let r = rate_run(&cfg).map_err(|e| Failure { code: e.exit_code(), message: e.to_string() })?;
            per_variant.push_str(&r.csv());
            let published: u64 = r.iterations.iter().map(|i| i.published).sum();
            summary.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                variant.as_str(),
                rate.label(),
                r.mean_latency_ms,
                r.mean_jitter_ms,
                r.mean_cpu.unwrap_or(f64::NAN),
                published,
                r.total_drops()
            ));
            println!(
                "{:<14}  {:>6}  {:>12.3}  {:>11.3}  {:>8.1}  {:>6}",
                variant.as_str(),
                rate.label(),
                r.mean_latency_ms,
                r.mean_jitter_ms,
                r.mean_cpu.unwrap_or(f64::NAN),
                r.total_drops()
            );
        }
        write_file(&dir.join(format!("rate_{}.csv", variant.as_str())), &per_variant)?;
    }
    write_file(&dir.join("rate_summary.csv"), &summary)?;
    println!("wrote {}", dir.display());
    Ok(0)
}
