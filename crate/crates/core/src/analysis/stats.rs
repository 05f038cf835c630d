use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// Consolidated statistics of a sample. Latency fields share the unit of the
/// input (ms throughout the crate); skew and kurtosis are dimensionless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub mean: f64,
    /// Sample standard deviation (n − 1); 0 for a single value.
    pub std: f64,
    /// Fisher-Pearson g1; `None` for n < 3 or zero variance.
    pub skew: Option<f64>,
    /// Excess kurtosis g2; `None` for n < 4 or zero variance.
    pub kurtosis: Option<f64>,
    pub min: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub p99: f64,
    pub max: f64,
    pub n: usize,
}

impl StatsSummary {
    /// Values in report column order; undefined moments as NaN.
    pub fn columns(&self) -> [f64; 10] {
        [
            self.mean,
            self.std,
            self.skew.unwrap_or(f64::NAN),
            self.kurtosis.unwrap_or(f64::NAN),
            self.min,
            self.q25,
            self.q50,
            self.q75,
            self.p99,
            self.max,
        ]
    }
}

/// Linear interpolation at position `p * (n - 1)` of a sorted sample.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(samples: &[f64]) -> Result<StatsSummary, AnalysisError> {
    if samples.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let n = samples.len();
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in samples {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let ss = m2;
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let std = if n > 1 { (ss / (nf - 1.0)).sqrt() } else { 0.0 };
    let skew = (n >= 3 && m2 > 0.0).then(|| m3 / m2.powf(1.5));
    let kurtosis = (n >= 4 && m2 > 0.0).then(|| m4 / (m2 * m2) - 3.0);

    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(StatsSummary {
        mean,
        std,
        skew,
        kurtosis,
        min: sorted[0],
        q25: quantile(&sorted, 0.25),
        q50: quantile(&sorted, 0.5),
        q75: quantile(&sorted, 0.75),
        p99: quantile(&sorted, 0.99),
        max: sorted[n - 1],
        n,
    })
}

/// Mean absolute difference of consecutive samples.
pub fn jitter(series: &[f64]) -> Result<f64, AnalysisError> {
    if series.len() < 2 {
        return Err(AnalysisError::TooFewSamples {
            needed: 2,
            got: series.len(),
        });
    }
    let total: f64 = series.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Ok(total / (series.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo_ms: f64,
    pub count: usize,
}

/// Counts per `[k*w, (k+1)*w)`, contiguous from the lowest to the highest
/// occupied bin.
pub fn histogram(samples: &[f64], bin_width_ms: f64) -> Result<Vec<HistogramBin>, AnalysisError> {
    if !(bin_width_ms > 0.0 && bin_width_ms.is_finite()) {
        return Err(AnalysisError::InvalidBinWidth(bin_width_ms));
    }
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let ks: Vec<i64> = samples.iter().map(|x| (x / bin_width_ms).floor() as i64).collect();
    let lo = *ks.iter().min().unwrap();
    let hi = *ks.iter().max().unwrap();
    let mut bins: Vec<HistogramBin> = (lo..=hi)
        .map(|k| HistogramBin {
            lo_ms: k as f64 * bin_width_ms,
            count: 0,
        })
        .collect();
    for k in ks {
        bins[(k - lo) as usize].count += 1;
    }
    Ok(bins)
}

pub fn histogram_csv(bins: &[HistogramBin]) -> String {
    let mut out = String::from("bin_lo_ms,count\n");
    for b in bins {
        out.push_str(&format!("{},{}\n", b.lo_ms, b.count));
    }
    out
}
