//! Consolidated statistics tables: aligned text with minima marked, and a
//! CSV document that parses back into the same summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, StatsSummary};
use crate::model::DeploymentVariant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Kpi {
    E2E,
    Idle,
    Communication,
    Computation,
}

impl Kpi {
    pub const ALL: [Kpi; 4] = [Kpi::E2E, Kpi::Idle, Kpi::Communication, Kpi::Computation];

    pub fn label(self) -> &'static str {
        match self {
            Kpi::E2E => "E2E",
            Kpi::Idle => "Idle",
            Kpi::Communication => "Communication",
            Kpi::Computation => "Computation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.label() == s)
    }
}

pub const COLUMNS: [&str; 10] = [
    "Mean", "Std", "Skew", "Kurtosis", "Min", "Q25", "Q50", "Q75", "P99", "Max",
];

pub const CSV_HEADER: &str = "kpi,variant,mean,std,skew,kurtosis,min,q25,q50,q75,p99,max,n";

pub type SummaryTable = BTreeMap<(Kpi, DeploymentVariant), StatsSummary>;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub kpi: Kpi,
    pub variant: DeploymentVariant,
    pub summary: StatsSummary,
    /// Per column: this row holds the smallest value among its KPI's rows.
    pub minima: [bool; 10],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

/// Rows ordered by KPI, then variant; ties for a column minimum are all flagged.
pub fn render_report(summaries: &SummaryTable) -> Result<Report, AnalysisError> {
    if summaries.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let mut rows: Vec<ReportRow> = summaries
        .iter()
        .map(|(&(kpi, variant), s)| ReportRow {
            kpi,
            variant,
            summary: s.clone(),
            minima: [false; 10],
        })
        .collect();
    for kpi in Kpi::ALL {
        let idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].kpi == kpi).collect();
        for c in 0..COLUMNS.len() {
            let min = idx
                .iter()
                .map(|&i| rows[i].summary.columns()[c])
                .filter(|v| !v.is_nan())
                .fold(f64::INFINITY, f64::min);
            for &i in &idx {
                rows[i].minima[c] = rows[i].summary.columns()[c] == min;
            }
        }
    }
    Ok(Report { rows })
}

impl Report {
    /// Aligned table; `*` marks column minima within a KPI.
    pub fn text(&self) -> String {
        let mut cells: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["KPI".to_string(), "Variant".to_string()];
        header.extend(COLUMNS.iter().map(|c| c.to_string()));
        header.push("N".into());
        cells.push(header);
        for r in &self.rows {
            let mut line = vec![
                r.kpi.label().to_string(),
                format!("{} ({})", r.variant.short_label(), r.variant.as_str()),
            ];
            for (v, m) in r.summary.columns().iter().zip(r.minima) {
                let mark = if m { "*" } else { "" };
                line.push(if v.is_nan() { "-".into() } else { format!("{v:.2}{mark}") });
            }
            line.push(r.summary.n.to_string());
            cells.push(line);
        }
        let widths: Vec<usize> = (0..cells[0].len())
            .map(|c| cells.iter().map(|l| l[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, line) in cells.iter().enumerate() {
            if i > 1 && cells[i - 1][0] != line[0] {
                out.push('\n');
            }
            for (c, cell) in line.iter().enumerate() {
                if c < 2 {
                    let _ = write!(out, "{cell:<w$}  ", w = widths[c]);
                } else {
                    let _ = write!(out, "{cell:>w$}  ", w = widths[c]);
                }
            }
            let trimmed = out.trim_end_matches(' ').len();
            out.truncate(trimmed);
            out.push('\n');
        }
        out.push_str("values in ms except Skew/Kurtosis; * = minimum across variants\n");
        out
    }

    /// Machine-readable form; floats use the shortest round-tripping
    /// representation, undefined moments are `NaN`.
    pub fn csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let _ = write!(out, "{},{}", r.kpi.label(), r.variant.as_str());
            for v in r.summary.columns() {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{}", r.summary.n);
        }
        out
    }
}

pub fn parse_report_csv(text: &str) -> Result<SummaryTable, AnalysisError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(AnalysisError::Csv(1, "missing header".into())),
    }
    let mut table = SummaryTable::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 13 {
            return Err(AnalysisError::Csv(lineno, format!("expected 13 fields, got {}", f.len())));
        }
        let kpi = Kpi::parse(f[0]).ok_or_else(|| AnalysisError::Csv(lineno, format!("unknown kpi `{}`", f[0])))?;
        let variant = DeploymentVariant::parse(f[1])
            .ok_or_else(|| AnalysisError::Csv(lineno, format!("unknown variant `{}`", f[1])))?;
        let mut v = [0f64; 10];
        for (j, slot) in v.iter_mut().enumerate() {
            *slot = f[2 + j]
                .parse()
                .map_err(|_| AnalysisError::Csv(lineno, format!("bad number `{}`", f[2 + j])))?;
        }
        let n = f[12]
            .parse()
            .map_err(|_| AnalysisError::Csv(lineno, format!("bad count `{}`", f[12])))?;
        let opt = |x: f64| (!x.is_nan()).then_some(x);
        table.insert(
            (kpi, variant),
            StatsSummary {
                mean: v[0],
                std: v[1],
                skew: opt(v[2]),
                kurtosis: opt(v[3]),
                min: v[4],
                q25: v[5],
                q50: v[6],
                q75: v[7],
                p99: v[8],
                max: v[9],
                n,
            },
        );
    }
    Ok(table)
}
