//! `chainbench analyze` and `chainbench report`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chainbench_core::analysis::{
    histogram, histogram_csv, kpi_series, parse_report_csv, reconstruct_paths, render_report, summarize, Kpi,
    KpiSeries, SummaryTable,
};
use chainbench_core::model::DeploymentVariant;
use chainbench_core::trace::{load_run, load_trace_file, TraceLog};

use crate::record::{load_records, Outcome, CHAIN_FILE, SPEC_FILE};
use crate::run::{load_workload_files, Workload};
use crate::util::{ensure_dir, write_file, CliResult, Failure};

pub struct AnalyzeOptions {
    /// Only these run ids (all valid runs when empty).
    pub runs: Vec<String>,
    /// Analyze these trace files directly instead of recorded runs.
    pub traces: Vec<PathBuf>,
    pub spec: Option<PathBuf>,
    pub chain: Option<PathBuf>,
    pub variant: DeploymentVariant,
    pub bin_width_ms: f64,
}

#[derive(Default)]
struct VariantData {
    kpis: BTreeMap<Kpi, Vec<f64>>,
    runs: usize,
    rampup_ms: Vec<f64>,
    cpu: Vec<f64>,
    rss: Vec<f64>,
}

fn series_csv(s: &KpiSeries) -> String {
    let mut out = String::from("sensor_seq,e2e_ms,idle_ms,communication_ms,computation_ms\n");
    for i in 0..s.e2e.len() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.sensor_seqs[i], s.e2e[i], s.idle[i], s.communication[i], s.computation[i]
        ));
    }
    out
}

fn analyze_trace(trace: &TraceLog, workload: &Workload, label: &str) -> CliResult<KpiSeries> {
    if trace.events.is_empty() {
        return Err(Failure::config(format!("{label}: trace is empty")));
    }
    let paths = reconstruct_paths(trace, &workload.chain).map_err(|e| Failure::config(format!("{label}: {e}")))?;
    Ok(kpi_series(&paths))
}

fn add_series(data: &mut VariantData, s: &KpiSeries) {
    for (kpi, v) in [
        (Kpi::E2E, &s.e2e),
        (Kpi::Idle, &s.idle),
        (Kpi::Communication, &s.communication),
        (Kpi::Computation, &s.computation),
    ] {
        data.kpis.entry(kpi).or_default().extend_from_slice(v);
    }
    data.runs += 1;
}

pub fn cmd_analyze(out: &Path, opts: &AnalyzeOptions) -> CliResult<i32> {
    let dir = out.join("analysis");
    let mut per_variant: BTreeMap<DeploymentVariant, VariantData> = BTreeMap::new();

    if !opts.traces.is_empty() {
        let (Some(spec), Some(chain)) = (&opts.spec, &opts.chain) else {
            return Err(Failure::config("--trace needs --spec and --chain"));
        };
        let workload = load_workload_files(spec, chain)?;
        let mut logs = Vec::new();
        for p in &opts.traces {
            logs.push(load_trace_file(p).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?);
        }
        let trace = TraceLog::merge(logs).map_err(Failure::config)?;
        let series = analyze_trace(&trace, &workload, "trace")?;
        ensure_dir(&dir.join("series"))?;
        write_file(&dir.join("series").join(format!("{}.csv", trace.run_id)), &series_csv(&series))?;
        add_series(per_variant.entry(opts.variant).or_default(), &series);
    } else {
        let records = load_records(out)?;
        let selected: Vec<_> = records
            .into_iter()
            .filter(|(_, r)| opts.runs.is_empty() || opts.runs.contains(&r.run_id))
            .collect();
        for id in &opts.runs {
            if !selected.iter().any(|(_, r)| &r.run_id == id) {
                return Err(Failure::config(format!("no recorded run `{id}` under {}", out.display())));
            }
        }
        let valid: Vec<_> = selected.into_iter().filter(|(_, r)| r.outcome == Outcome::Valid).collect();
        if valid.is_empty() {
            return Err(Failure::config(format!("no valid runs under {}", out.join("runs").display())));
        }
        ensure_dir(&dir.join("series"))?;
        for (run_dir, record) in &valid {
            let workload = load_workload_files(&run_dir.join(SPEC_FILE), &run_dir.join(CHAIN_FILE))?;
            let trace = load_run(run_dir, &record.run_id)
                .map_err(|e| Failure::config(format!("{}: {e}", run_dir.display())))?;
            let series = analyze_trace(&trace, &workload, &record.run_id)?;
            write_file(&dir.join("series").join(format!("{}.csv", record.run_id)), &series_csv(&series))?;
            let data = per_variant.entry(record.variant).or_default();
            add_series(data, &series);
            if let Some(r) = record.rampup_ns {
                data.rampup_ms.push(r as f64 / 1e6);
            }
            if let Some(c) = record.mean_cpu_percent {
                data.cpu.push(c);
            }
            data.rss.push(record.peak_rss_bytes as f64);
        }
    }

    let mut table = SummaryTable::new();
    for (&variant, data) in &per_variant {
        for (&kpi, samples) in &data.kpis {
            if samples.is_empty() {
                log::warn!("{variant}: no {} samples", kpi.label());
                continue;
            }
            let s = summarize(samples).map_err(Failure::runtime)?;
            table.insert((kpi, variant), s);
            let bins = histogram(samples, opts.bin_width_ms).map_err(Failure::config)?;
            write_file(
                &dir.join(format!("hist_{}_{}.csv", kpi.label().to_lowercase(), variant.as_str())),
                &histogram_csv(&bins),
            )?;
        }
    }
    if table.is_empty() {
        return Err(Failure::config("no data-age samples: no complete chain path in any trace"));
    }
    let report = render_report(&table).map_err(Failure::runtime)?;
    let text = report.text();
    write_file(&dir.join("report.txt"), &text)?;
    write_file(&dir.join("report.csv"), &report.csv())?;

    let mut summary = String::from("variant,runs,mean_rampup_ms,mean_cpu_percent,mean_peak_rss_bytes\n");
    let mean = |v: &[f64]| {
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    for (variant, data) in &per_variant {
        summary.push_str(&format!(
            "{},{},{},{},{}\n",
            variant.as_str(),
            data.runs,
            mean(&data.rampup_ms),
            mean(&data.cpu),
            mean(&data.rss)
        ));
    }
    write_file(&dir.join("runs.csv"), &summary)?;

    print!("{text}");
    let ramps: Vec<(DeploymentVariant, f64)> = per_variant
        .iter()
        .map(|(v, d)| (*v, mean(&d.rampup_ms)))
        .filter(|(_, r)| !r.is_nan())
        .collect();
    if !ramps.is_empty() {
        let parts: Vec<String> = ramps.iter().map(|(v, r)| format!("{} {r:.1} ms", v.short_label())).collect();
        println!("mean ramp-up: {}", parts.join(", "));
    }
    if let (Some(sc), Some(mc)) = (
        ramps.iter().find(|(v, _)| *v == DeploymentVariant::SingleGroup),
        ramps.iter().find(|(v, _)| *v == DeploymentVariant::MultiGroup),
    ) {
        let verdict = if mc.1 < sc.1 { "lower" } else { "not lower" };
        println!("multi_group ramp-up is {verdict} than single_group");
    }
    println!("wrote {}", dir.display());
    Ok(0)
}

/// Re-render a report CSV as the aligned text table.
pub fn cmd_report(out: &Path, csv: Option<&Path>) -> CliResult<i32> {
    let path = csv.map_or_else(|| out.join("analysis").join("report.csv"), Path::to_path_buf);
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let table = parse_report_csv(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let report = render_report(&table).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let dir = ensure_dir(&out.join("analysis"))?;
    write_file(&dir.join("report.txt"), &report.text())?;
    print!("{}", report.text());
    Ok(0)
}
