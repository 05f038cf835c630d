//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p chainbench-cli --test acceptance`.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use chainbench_core::analysis::{
    data_age_series, decompose, parse_report_csv, reconstruct_paths, render_report, summarize, HopEvent, Kpi,
    PathInstance, COLUMNS,
};
use chainbench_core::benchmarks::{
    pingpong_sweep, rate_run, FrameRate, Launcher, PingPongConfig, RateConfig, DEFAULT_SWEEP_SIZES,
};
use chainbench_core::middleware::{Bus, BusConfig, DeliveryMode, RemoteRoute};
use chainbench_core::model::{DeploymentPlan, DeploymentVariant, QosPolicy};
use chainbench_core::orchestrator::{launch, median, read_stat, LaunchConfig, ResourceSampler, SampleScope, DEFAULT_GRACE};
use chainbench_core::trace::TraceSession;
use chainbench_core::workload::{build_mini_autoware, PresetConfig};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::contracts::{keep_last_contract, reliable_contract};
use support::moments::{close, exact};
use support::schedule::{canonical, generate, random_path};

// Tolerances and budgets.
const DECOMPOSITION_PATHS: usize = 10_000;
const DECOMPOSITION_BUDGET: Duration = Duration::from_secs(10);
const RECONSTRUCTION_SCHEDULES: usize = 1_000;
const RECONSTRUCTION_MAX_HOPS: usize = 17;
const RECONSTRUCTION_BUDGET: Duration = Duration::from_secs(60);
const STATS_SAMPLES: usize = 100;
const STATS_MAX_N: usize = 10_000;
const STATS_REL_TOL: f64 = 1e-9;
const QOS_MESSAGES: u64 = 10_000;
const QOS_CONSUMER_NS: u64 = 1_000_000;
const RELIABLE_MESSAGES: u64 = 10_000;
const RELIABLE_DROP: f64 = 0.3;
const RELIABLE_ACK_NS: u64 = 1_000_000;
const RELIABLE_BUDGET: Duration = Duration::from_secs(30);
const SWEEP_SIZE_NS: u64 = 2_000_000_000;
const SWEEP_MIN_SPEARMAN: f64 = 0.9;
const RATE_WINDOW_NS: u64 = 10_000_000_000;
const RATE_COUNT_TOL: i64 = 1;
const CALIBRATION_WINDOW_NS: u64 = 3_000_000_000;
const COMPUTE_NS: u64 = 5_000_000;
const COMPUTE_WINDOW_NS: u64 = 5_000_000_000;
const VARIANT_RUN_NS: u64 = 2_000_000_000;
const PRESET_MODULES: usize = 8;
const SAMPLER_INTERVAL_NS: u64 = 200_000_000;
const SAMPLER_INTERVAL_TOL: f64 = 0.2;
const SPINNER_CPU: f64 = 100.0;
const SPINNER_CPU_TOL: f64 = 10.0;
const SAMPLER_WINDOW: Duration = Duration::from_secs(3);
const SMOKE_BUDGET: Duration = Duration::from_secs(300);

type Verdict = Result<String, String>;

fn exe() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_chainbench"))
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn ms(d: Duration) -> String {
    format!("{:.1} s", d.as_secs_f64())
}

fn criterion_1() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let start = Instant::now();
    for i in 0..DECOMPOSITION_PATHS {
        let hops = rng.random_range(1..=RECONSTRUCTION_MAX_HOPS);
        let (path, idle, comm, compute) = random_path(&mut rng, hops);
        let b = decompose(&path).map_err(|e| format!("path {i}: {e}"))?;
        ensure(b.idle + b.communication + b.compute == b.e2e, format!("path {i}: sum != e2e"))?;
        ensure(
            (b.idle, b.communication, b.compute) == (idle, comm, compute),
            format!("path {i}: components differ from the generator"),
        )?;
    }
    let t = start.elapsed();
    ensure(t < DECOMPOSITION_BUDGET, format!("took {}", ms(t)))?;
    Ok(format!("{DECOMPOSITION_PATHS} paths exact in {}", ms(t)))
}

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let start = Instant::now();
    let (mut complete, mut incomplete) = (0, 0);
    for i in 0..RECONSTRUCTION_SCHEDULES {
        let s = generate(&mut rng, RECONSTRUCTION_MAX_HOPS, 40);
        complete += s.truth.iter().filter(|p| p.complete).count();
        incomplete += s.truth.iter().filter(|p| !p.complete).count();
        match reconstruct_paths(&s.trace, &s.chain) {
            Ok(got) => ensure(canonical(got) == canonical(s.truth), format!("schedule {i}: path sets differ"))?,
            // nothing reached hop 0, which the ground truth must agree with
            Err(e) => ensure(
                s.truth.iter().all(|p| !p.complete && p.hops.is_empty()),
                format!("schedule {i}: {e}"),
            )?,
        }
    }
    let t = start.elapsed();
    ensure(t < RECONSTRUCTION_BUDGET, format!("took {}", ms(t)))?;
    Ok(format!(
        "{RECONSTRUCTION_SCHEDULES} schedules match ({complete} complete, {incomplete} incomplete paths) in {}",
        ms(t)
    ))
}

fn criterion_3() -> Verdict {
    let ps = [0.25, 0.5, 0.75, 0.99];
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for i in 0..STATS_SAMPLES {
        let n = if i == 0 { STATS_MAX_N } else { rng.random_range(1..=STATS_MAX_N) };
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..250.0)).collect();
        let s = summarize(&xs).map_err(|e| e.to_string())?;
        let e = exact(&xs, &ps);
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        let pairs = [
            ("mean", s.mean, e.mean),
            ("std", s.std, e.std),
            ("min", s.min, sorted[0]),
            ("max", s.max, sorted[n - 1]),
            ("q25", s.q25, e.quantiles[0]),
            ("q50", s.q50, e.quantiles[1]),
            ("q75", s.q75, e.quantiles[2]),
            ("p99", s.p99, e.quantiles[3]),
        ];
        for (name, got, want) in pairs {
            ensure(close(got, want, STATS_REL_TOL), format!("sample {i} (n={n}) {name}: {got} vs {want}"))?;
        }
        for (name, got, want) in [("skew", s.skew, e.skew), ("kurtosis", s.kurtosis, e.kurtosis)] {
            match (got, want) {
                (Some(a), Some(b)) => ensure(close(a, b, STATS_REL_TOL), format!("sample {i} {name}: {a} vs {b}"))?,
                (None, None) => {}
                _ => return Err(format!("sample {i} (n={n}) {name}: {got:?} vs {want:?}")),
            }
        }
    }
    let s = summarize(&[1.0, 2.0, 3.0, 4.0, 5.0]).map_err(|e| e.to_string())?;
    let fixed = [
        ("mean", Some(s.mean), 3.0),
        ("skew", s.skew, 0.0),
        ("kurtosis", s.kurtosis, -1.3),
        ("q25", Some(s.q25), 2.0),
        ("p99", Some(s.p99), 4.96),
    ];
    for (name, got, want) in fixed {
        ensure(
            got.is_some_and(|g| close(g, want, STATS_REL_TOL)),
            format!("[1..5] {name}: {got:?} vs {want}"),
        )?;
    }
    Ok(format!("{STATS_SAMPLES} samples within {STATS_REL_TOL:e}; [1..5] fixed values hold"))
}

fn single_hop_path(seq: u64, e2e_ns: u64) -> PathInstance {
    PathInstance {
        sensor_seq: seq,
        sensor_ts: 1_000_000_000,
        hops: vec![HopEvent {
            timer: false,
            start: 1_000_000_000 + 2_000_000,
            end: 1_000_000_000 + e2e_ns + 500_000,
            output_ts: Some(1_000_000_000 + e2e_ns),
        }],
        complete: true,
    }
}

fn criterion_4() -> Verdict {
    let paths = [single_hop_path(7, 100_000_000), single_hop_path(7, 120_000_000)];
    let series = data_age_series(&paths);
    ensure(series == vec![110.0], format!("got {series:?}"))?;
    Ok("paths {100 ms, 120 ms} give one 110 ms sample".into())
}

fn criterion_5() -> Verdict {
    let out = keep_last_contract(QOS_MESSAGES, QOS_CONSUMER_NS);
    ensure(out.violations.is_empty(), out.violations.iter().take(3).cloned().collect::<Vec<_>>().join("; "))?;
    ensure(out.high_water <= 1, format!("buffered up to {}", out.high_water))?;
    Ok(format!(
        "{} published, {} delivered newest-first, {} overwritten, max buffered {}",
        out.published, out.delivered, out.evicted, out.high_water
    ))
}

fn criterion_6() -> Verdict {
    let start = Instant::now();
    let out = reliable_contract(RELIABLE_MESSAGES, RELIABLE_DROP, 606, RELIABLE_ACK_NS);
    let t = start.elapsed();
    let want: Vec<(u64, u64)> = (1..=RELIABLE_MESSAGES).map(|i| (i, i)).collect();
    if out.received != want {
        let first_bad = out.received.iter().zip(&want).position(|(a, b)| a != b);
        return Err(format!("{} delivered, first mismatch at {first_bad:?}", out.received.len()));
    }
    ensure(out.injected_drops > 0, "no drops were injected")?;
    ensure(t < RELIABLE_BUDGET, format!("took {}", ms(t)))?;
    let datagrams = RELIABLE_MESSAGES + out.retransmissions;
    Ok(format!(
        "all {RELIABLE_MESSAGES} once and in order; {} of {datagrams} datagrams dropped ({:.1}%), {} retransmissions, {} duplicates suppressed, {}",
        out.injected_drops,
        100.0 * out.injected_drops as f64 / datagrams as f64,
        out.retransmissions,
        out.duplicates,
        ms(t)
    ))
}

/// Send `payload` A → B, echo it B → A over loopback UDP and return what came back.
fn loopback_echo(payload: Vec<u8>) -> Result<Vec<u8>, String> {
    let listen = || BusConfig {
        topics: ["ping".to_string(), "pong".to_string()].into(),
        listen: Some("127.0.0.1:0".parse().unwrap()),
        ..BusConfig::default()
    };
    let a_rx = Bus::new(listen(), TraceSession::disabled()).map_err(|e| e.to_string())?;
    let b_rx = Bus::new(listen(), TraceSession::disabled()).map_err(|e| e.to_string())?;
    let route = |topic: &str, addr| BusConfig {
        topics: ["ping".to_string(), "pong".to_string()].into(),
        routes: HashMap::from([(
            topic.to_string(),
            vec![RemoteRoute { group: "peer".into(), addr, mode: DeliveryMode::reliable() }],
        )]),
        ..BusConfig::default()
    };
    let a_tx = Bus::new(route("ping", b_rx.local_addr().unwrap()), TraceSession::disabled()).map_err(|e| e.to_string())?;
    let b_tx = Bus::new(route("pong", a_rx.local_addr().unwrap()), TraceSession::disabled()).map_err(|e| e.to_string())?;

    let got_b = Arc::new(Mutex::new(None));
    let g = got_b.clone();
    let mut sub_b = b_rx
        .subscribe(&b_rx.create_node("b"), "ping", QosPolicy::keep_last(1), "on_ping", move |e| {
            *g.lock().unwrap() = Some(e.payload.clone())
        })
        .map_err(|e| e.to_string())?;
    let got_a = Arc::new(Mutex::new(None));
    let g = got_a.clone();
    let mut sub_a = a_rx
        .subscribe(&a_rx.create_node("a"), "pong", QosPolicy::keep_last(1), "on_pong", move |e| {
            *g.lock().unwrap() = Some(e.payload.clone())
        })
        .map_err(|e| e.to_string())?;

    let ping = a_tx.advertise(&a_tx.create_node("a"), "ping").map_err(|e| e.to_string())?;
    let pong = b_tx.advertise(&b_tx.create_node("b"), "pong").map_err(|e| e.to_string())?;
    ping.publish(payload).map_err(|e| e.to_string())?;
    sub_b.dispatch_next().ok_or("ping not delivered")?;
    let mid = got_b.lock().unwrap().take().ok_or("ping callback did not run")?;
    pong.publish(mid).map_err(|e| e.to_string())?;
    sub_a.dispatch_next().ok_or("pong not delivered")?;
    let back = got_a.lock().unwrap().take().ok_or("pong callback did not run")?;
    Ok(back.to_vec())
}

fn criterion_7(work: &Path) -> Verdict {
    let mut base = PingPongConfig::new(
        DEFAULT_SWEEP_SIZES[0],
        DeliveryMode::BestEffort,
        SWEEP_SIZE_NS,
        DeploymentVariant::MultiGroup,
    );
    base.launcher = Launcher { exe: Some(exe()), work_dir: work.join("pingpong") };
    let table = pingpong_sweep(&DEFAULT_SWEEP_SIZES, 1, SWEEP_SIZE_NS, &base).map_err(|e| e.to_string())?;
    ensure(table.rows.len() == 13, format!("{} rows", table.rows.len()))?;
    let rho = table.size_rtt_spearman().ok_or("no correlation")?;
    // independent rank correlation over the same table
    let x: Vec<f64> = table.rows.iter().map(|r| r.message_size as f64).collect();
    let y: Vec<f64> = table.rows.iter().map(|r| r.mean_rtt_us).collect();
    let oracle = pearson(&avg_ranks(&x), &avg_ranks(&y));
    ensure((rho - oracle).abs() < 1e-12, format!("spearman {rho} vs oracle {oracle}"))?;
    ensure(oracle >= SWEEP_MIN_SPEARMAN, format!("spearman {oracle:.3} < {SWEEP_MIN_SPEARMAN}"))?;
    for size in [1024usize, 8 << 20] {
        let row = table.rows.iter().find(|r| r.message_size == size).ok_or(format!("no {size} row"))?;
        let r = &row.results[0];
        ensure(r.packet_count > 0, format!("{size} B: no completed round trip"))?;
        ensure(r.echo_errors == 0, format!("{size} B: {} echoes differed", r.echo_errors))?;
        let mut payload = vec![0u8; size];
        ChaCha8Rng::seed_from_u64(size as u64).fill_bytes(&mut payload);
        let back = loopback_echo(payload.clone())?;
        ensure(back == payload, format!("{size} B: loopback echo differs"))?;
    }
    let rtts: Vec<String> = table.rows.iter().map(|r| format!("{:.0}", r.mean_rtt_us)).collect();
    Ok(format!("spearman {oracle:.3}; echo identical at 1 KB and 8 MB; mean RTT us [{}]", rtts.join(", ")))
}

fn avg_ranks(v: &[f64]) -> Vec<f64> {
    (0..v.len())
        .map(|i| {
            let less = v.iter().filter(|&&x| x < v[i]).count() as f64;
            let equal = v.iter().filter(|&&x| x == v[i]).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn rate_cfg(rate: FrameRate, window_ns: u64, compute_ns: u64) -> RateConfig {
    let mut cfg = RateConfig::new(rate, DeploymentVariant::InProcess);
    cfg.runs = 1;
    cfg.iterations_per_run = 1;
    cfg.iteration_ns = window_ns;
    cfg.compute_ns = compute_ns;
    cfg
}

fn criterion_8() -> Verdict {
    let mut counts = Vec::new();
    for fps in [10u32, 30, 60] {
        let r = rate_run(&rate_cfg(FrameRate::Fps(fps), RATE_WINDOW_NS, 0)).map_err(|e| e.to_string())?;
        let published: u64 = r.iterations.iter().map(|i| i.published).sum();
        let want = fps as u64 * RATE_WINDOW_NS / 1_000_000_000;
        ensure(
            (published as i64 - want as i64).abs() <= RATE_COUNT_TOL,
            format!("{fps} fps: {published} published, want {want}"),
        )?;
        counts.push(format!("{fps}fps {published}/{want}"));
    }
    // dispatch budget: 2 x p99 of zero-compute latency plus 1 ms
    let cal = rate_run(&rate_cfg(FrameRate::Fps(10), CALIBRATION_WINDOW_NS, 0)).map_err(|e| e.to_string())?;
    let mut lat: Vec<u64> = cal.latencies_ns().collect();
    ensure(!lat.is_empty(), "calibration produced no latency")?;
    lat.sort_unstable();
    let p99 = lat[((lat.len() - 1) as f64 * 0.99).round() as usize];
    let budget_ns = 2 * p99 + 1_000_000;
    let r = rate_run(&rate_cfg(FrameRate::Fps(10), COMPUTE_WINDOW_NS, COMPUTE_NS)).map_err(|e| e.to_string())?;
    let lat: Vec<u64> = r.latencies_ns().collect();
    ensure(!lat.is_empty(), "no processed frame")?;
    let mean = lat.iter().sum::<u64>() as f64 / lat.len() as f64;
    let (lo, hi) = (COMPUTE_NS as f64, (COMPUTE_NS + budget_ns) as f64);
    ensure(
        mean >= lo && mean <= hi,
        format!("mean latency {:.3} ms outside [{:.3}, {:.3}] ms", mean / 1e6, lo / 1e6, hi / 1e6),
    )?;
    Ok(format!(
        "{}; 5 ms compute mean {:.3} ms within [5, {:.3}] ms",
        counts.join(", "),
        mean / 1e6,
        hi / 1e6
    ))
}

/// Live (non-zombie) processes in any of `pgids`, read straight from /proc.
fn live_in_groups(pgids: &[i32]) -> Vec<i32> {
    let Ok(dir) = std::fs::read_dir("/proc") else { return Vec::new() };
    dir.filter_map(|e| e.ok()?.file_name().to_str()?.parse::<i32>().ok())
        .filter_map(read_stat)
        .filter(|s| pgids.contains(&s.pgrp) && !matches!(s.state, 'Z' | 'X'))
        .map(|s| s.pid)
        .collect()
}

fn criterion_9(work: &Path) -> Verdict {
    let (spec, manifest, _) = build_mini_autoware(&PresetConfig::with_scale(0.1)).map_err(|e| e.to_string())?;
    ensure(manifest.modules.len() == PRESET_MODULES, format!("{} modules", manifest.modules.len()))?;
    let expected: BTreeSet<String> = spec.nodes.iter().map(|n| n.name.clone()).collect();
    let mut groups_per_variant = Vec::new();
    for variant in DeploymentVariant::ALL {
        let run_id = format!("acc-{}", variant.short_label().to_lowercase());
        let dir = work.join(&run_id);
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        let mut cfg = LaunchConfig::new(&dir, &run_id);
        cfg.exe = Some(exe());
        cfg.duration_ns = Some(VARIANT_RUN_NS);
        let mut h = launch(&spec, &manifest, &DeploymentPlan::new(variant), &cfg).map_err(|e| format!("{variant}: {e}"))?;
        let nodes: BTreeSet<String> = h.launched_nodes().into_iter().collect();
        let pgids = h.pgids();
        let groups: Vec<(String, BTreeSet<String>)> =
            h.groups.iter().map(|g| (g.name.clone(), g.nodes.iter().cloned().collect())).collect();
        h.wait();
        let report = h.teardown(DEFAULT_GRACE);
        drop(h);
        ensure(nodes == expected, format!("{variant}: node set differs from the workload"))?;
        ensure(report.orphans.is_empty(), format!("{variant}: orphans {:?}", report.orphans))?;
        let live = live_in_groups(&pgids);
        ensure(live.is_empty(), format!("{variant}: processes still alive {live:?}"))?;
        if variant == DeploymentVariant::MultiGroup {
            ensure(
                pgids.len() == PRESET_MODULES && pgids.iter().collect::<BTreeSet<_>>().len() == PRESET_MODULES,
                format!("multi_group: {} process groups", pgids.len()),
            )?;
            for m in &manifest.modules {
                let want: BTreeSet<String> = m.nodes.iter().cloned().collect();
                ensure(
                    groups.iter().any(|(g, n)| g == &m.name && *n == want),
                    format!("multi_group: module {} not launched as its own group", m.name),
                )?;
            }
        }
        groups_per_variant.push(format!("{} {}", variant.short_label(), groups.len()));
    }
    Ok(format!(
        "{} nodes in every variant; groups: {}; zero orphans",
        expected.len(),
        groups_per_variant.join(", ")
    ))
}

fn criterion_10(smoke_out: Option<&Path>) -> Verdict {
    let out = smoke_out.ok_or("no analyze output (smoke run failed)")?;
    let csv = std::fs::read_to_string(out.join("analysis/report.csv")).map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(out.join("analysis/report.txt")).map_err(|e| e.to_string())?;
    let header: Vec<&str> = text.lines().next().unwrap_or("").split_whitespace().collect();
    let mut want = vec!["KPI", "Variant"];
    want.extend(COLUMNS);
    want.push("N");
    ensure(header == want, format!("header {header:?}"))?;
    ensure(
        COLUMNS == ["Mean", "Std", "Skew", "Kurtosis", "Min", "Q25", "Q50", "Q75", "P99", "Max"],
        "column order",
    )?;

    let table = parse_report_csv(&csv).map_err(|e| e.to_string())?;
    ensure(table.len() == 12, format!("{} rows", table.len()))?;
    for kpi in Kpi::ALL {
        for v in DeploymentVariant::ALL {
            ensure(table.contains_key(&(kpi, v)), format!("missing {} / {v}", kpi.label()))?;
        }
    }
    // minima recomputed from the CSV and compared with the text's `*` marks
    let mut flags: BTreeMap<(String, String), Vec<bool>> = BTreeMap::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 14 {
            continue;
        }
        let variant = f[2].trim_matches(|c| c == '(' || c == ')').to_string();
        flags.insert((f[0].to_string(), variant), f[3..13].iter().map(|c| c.ends_with('*')).collect());
    }
    ensure(flags.len() == 12, format!("{} text rows", flags.len()))?;
    let mut flagged = 0;
    for kpi in Kpi::ALL {
        for c in 0..COLUMNS.len() {
            let vals: Vec<(DeploymentVariant, f64)> =
                DeploymentVariant::ALL.iter().map(|&v| (v, table[&(kpi, v)].columns()[c])).collect();
            let min = vals.iter().map(|x| x.1).filter(|x| !x.is_nan()).fold(f64::INFINITY, f64::min);
            for (v, x) in vals {
                let want = x == min;
                let got = flags[&(kpi.label().to_string(), v.as_str().to_string())][c];
                ensure(got == want, format!("{} {} {v}: flag {got}, minimum {want}", kpi.label(), COLUMNS[c]))?;
                flagged += got as usize;
            }
        }
    }
    let rendered = render_report(&table).map_err(|e| e.to_string())?.csv();
    ensure(rendered == csv, "CSV does not round-trip byte for byte")?;
    let reparsed = parse_report_csv(&rendered).map_err(|e| e.to_string())?;
    for (k, s) in &table {
        let r = &reparsed[k];
        let same = s.columns().iter().zip(r.columns()).all(|(a, b)| a.to_bits() == b.to_bits()) && s.n == r.n;
        ensure(same, format!("{} / {} changed on round trip", k.0.label(), k.1))?;
    }
    Ok(format!("10 columns in order, 4 KPIs x 3 variants, {flagged} minima flagged correctly, CSV lossless"))
}

fn criterion_11() -> Verdict {
    let mut spinner = Command::new("sh")
        .args(["-c", "while :; do :; done"])
        .spawn()
        .map_err(|e| e.to_string())?;
    let pid = spinner.id() as i32;
    let sampler = ResourceSampler::start(SampleScope::Pids(vec![pid]), SAMPLER_INTERVAL_NS, Vec::new());
    std::thread::sleep(SAMPLER_WINDOW);
    let out = sampler.stop();
    let _ = spinner.kill();
    let _ = spinner.wait();

    let intervals = out.intervals();
    let med = median(&intervals).ok_or("fewer than two samples")? as f64;
    let (lo, hi) = (
        SAMPLER_INTERVAL_NS as f64 * (1.0 - SAMPLER_INTERVAL_TOL),
        SAMPLER_INTERVAL_NS as f64 * (1.0 + SAMPLER_INTERVAL_TOL),
    );
    ensure(med >= lo && med <= hi, format!("median interval {:.1} ms", med / 1e6))?;
    let cpu: Vec<f64> = out
        .samples
        .iter()
        .flat_map(|s| s.processes.iter().filter(|p| p.pid == pid).map(|p| p.cpu_percent))
        .collect();
    ensure(!cpu.is_empty(), "spinner never sampled")?;
    let mean = cpu.iter().sum::<f64>() / cpu.len() as f64;
    ensure(
        (mean - SPINNER_CPU).abs() <= SPINNER_CPU_TOL,
        format!("spinner measured {mean:.1}% over {} samples", cpu.len()),
    )?;
    Ok(format!("median interval {:.1} ms; spinner {mean:.1}% over {} samples", med / 1e6, cpu.len()))
}

fn cli(out: &Path, args: &[&str]) -> Result<String, String> {
    let o = Command::new(exe())
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        let err = String::from_utf8_lossy(&o.stderr);
        let tail: Vec<&str> = err.lines().rev().take(3).collect();
        return Err(format!("`{}` exited {:?}: {}", args.join(" "), o.status.code(), tail.join(" | ")));
    }
    Ok(String::from_utf8_lossy(&o.stdout).into_owned())
}

fn criterion_12(out: &Path) -> Verdict {
    let start = Instant::now();
    cli(out, &["run", "--preset", "mini-autoware", "--scale", "0.1", "--deployment", "all", "--runs", "3"])?;
    cli(out, &["analyze"])?;
    let t = start.elapsed();
    let csv = std::fs::read_to_string(out.join("analysis/report.csv")).map_err(|e| e.to_string())?;
    let table = parse_report_csv(&csv).map_err(|e| e.to_string())?;
    let mut counts = Vec::new();
    for v in DeploymentVariant::ALL {
        let n = table.get(&(Kpi::E2E, v)).map_or(0, |s| s.n);
        ensure(n > 0, format!("{v}: no data-age samples"))?;
        counts.push(format!("{} {n}", v.short_label()));
    }
    ensure(t < SMOKE_BUDGET, format!("took {}", ms(t)))?;
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    Ok(format!("data-age samples {} in {} on {cpus} CPU(s)", counts.join(", "), ms(t)))
}

fn run(id: u32, name: &str, f: &mut dyn FnMut() -> Verdict) -> bool {
    let start = Instant::now();
    let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let t = ms(start.elapsed());
    match verdict {
        Ok(detail) => {
            println!("PASS {id:>2} {name}: {detail} [{t}]");
            true
        }
        Err(detail) => {
            println!("FAIL {id:>2} {name}: {detail} [{t}]");
            false
        }
    }
}

fn main() {
    // optional criterion numbers on the command line select a subset
    let only: BTreeSet<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |id: u32| only.is_empty() || only.contains(&id) || (id == 12 && only.contains(&10));
    let work = tempfile::tempdir().expect("temp dir");
    let smoke = work.path().join("smoke");
    let mut ok = true;
    let mut check = |id: u32, name: &str, f: &mut dyn FnMut() -> Verdict| {
        if wanted(id) {
            let passed = run(id, name, f);
            ok &= passed;
            passed
        } else {
            false
        }
    };
    check(1, "decomposition identity", &mut criterion_1);
    check(2, "path reconstruction oracle", &mut criterion_2);
    check(3, "statistics oracle", &mut criterion_3);
    check(4, "data-age definition", &mut criterion_4);
    check(5, "keep-last QoS contract", &mut criterion_5);
    check(6, "reliability contract", &mut criterion_6);
    check(7, "ping-pong sweep", &mut || criterion_7(work.path()));
    check(8, "rate benchmark", &mut criterion_8);
    check(9, "deployment variants", &mut || criterion_9(work.path()));
    // the report check reads the smoke run's analysis output
    let smoke_ok = check(12, "end-to-end smoke", &mut || criterion_12(&smoke));
    check(10, "report fidelity", &mut || criterion_10(smoke_ok.then_some(smoke.as_path())));
    check(11, "resource sampler", &mut criterion_11);
    if !ok {
        std::process::exit(1);
    }
}
