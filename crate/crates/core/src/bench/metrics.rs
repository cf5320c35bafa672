//! Per-request samples and their aggregation into the report.

use std::fmt::Write as _;

use super::workload::{Condition, Template};
use crate::storage::ExecutionStats;

/// Nearest-rank percentile of `sorted` (ascending); 0 when empty.
pub fn percentile(sorted: &[u64], p: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// One completed request.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RequestSample {
    pub stream: usize,
    pub template: usize,
    pub issued_at: u64,
    pub completed_at: u64,
    pub stats: ExecutionStats,
    pub evictions: u64,
}

impl RequestSample {
    pub fn latency(&self) -> u64 {
        self.completed_at - self.issued_at
    }

    /// Microseconds of this request's lifetime inside `[0, window)`.
    fn active_within(&self, window: u64) -> u64 {
        self.completed_at.min(window).saturating_sub(self.issued_at.min(window))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    /// Template name, or `ALL`.
    pub template: String,
    pub requests: u64,
    pub completed_in_window: u64,
    pub empty_rate: f64,
    pub p50_us: u64,
    pub p95_us: u64,
    pub p99_us: u64,
    pub throughput_per_min: f64,
    pub aas: f64,
    pub rows_returned: u64,
    pub pages_touched: u64,
    pub shared_hits: u64,
    pub disk_reads: u64,
    pub evictions: u64,
}

impl MetricsRow {
    pub fn from_samples<'a>(template: &str, samples: impl IntoIterator<Item = &'a RequestSample>, window: u64) -> Self {
        let samples: Vec<&RequestSample> = samples.into_iter().collect();
        let mut latencies: Vec<u64> = samples.iter().map(|s| s.latency()).collect();
        latencies.sort_unstable();
        let completed_in_window = samples.iter().filter(|s| s.completed_at <= window).count() as u64;
        let empty = samples.iter().filter(|s| s.stats.rows_returned == 0).count();
        let sum = |f: fn(&RequestSample) -> u64| samples.iter().map(|s| f(s)).sum::<u64>();
        Self {
            template: template.to_owned(),
            requests: samples.len() as u64,
            completed_in_window,
            empty_rate: if samples.is_empty() {
                0.0
            } else {
                empty as f64 / samples.len() as f64
            },
            p50_us: percentile(&latencies, 50.0),
            p95_us: percentile(&latencies, 95.0),
            p99_us: percentile(&latencies, 99.0),
            throughput_per_min: completed_in_window as f64 * 60e6 / window as f64,
            aas: samples.iter().map(|s| s.active_within(window)).sum::<u64>() as f64 / window as f64,
            rows_returned: sum(|s| s.stats.rows_returned),
            pages_touched: sum(|s| s.stats.pages_touched),
            shared_hits: sum(|s| s.stats.shared_hits),
            disk_reads: sum(|s| s.stats.disk_reads),
            evictions: sum(|s| s.evictions),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub condition: Condition,
    /// Measurement window in microseconds (the full issue window).
    pub window_us: u64,
    /// `ALL` first, then one row per template in template order.
    pub rows: Vec<MetricsRow>,
    pub samples: Vec<RequestSample>,
}

pub const CSV_HEADER: &str = "condition,template,requests,completed_in_window,empty_rate,p50_us,p95_us,p99_us,\
throughput_per_min,aas,rows_returned,pages_touched,shared_hits,disk_reads,evictions";

impl MetricsReport {
    pub fn build(condition: Condition, window_us: u64, templates: &[Template], samples: Vec<RequestSample>) -> Self {
        let mut rows = vec![MetricsRow::from_samples("ALL", &samples, window_us)];
        for (i, t) in templates.iter().enumerate() {
            rows.push(MetricsRow::from_samples(
                t.name,
                samples.iter().filter(|s| s.template == i),
                window_us,
            ));
        }
        Self {
            condition,
            window_us,
            rows,
            samples,
        }
    }

    pub fn overall(&self) -> &MetricsRow {
        &self.rows[0]
    }

    pub fn template(&self, name: &str) -> Option<&MetricsRow> {
        self.rows.iter().skip(1).find(|r| r.template == name)
    }

    /// CSV body lines without the header.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{},{},{},{:.6},{:.6},{},{},{},{},{}",
                self.condition,
                r.template,
                r.requests,
                r.completed_in_window,
                r.empty_rate,
                r.p50_us,
                r.p95_us,
                r.p99_us,
                r.throughput_per_min,
                r.aas,
                r.rows_returned,
                r.pages_touched,
                r.shared_hits,
                r.disk_reads,
                r.evictions
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        let o = self.overall();
        format!(
            "{:<12} requests={:<6} window_done={:<6} p50={:>9.3}ms p95={:>9.3}ms p99={:>9.3}ms thr/min={:>8.2} aas={:>6.3} hits={} reads={} evictions={} empty={:.3}",
            self.condition.as_str(),
            o.requests,
            o.completed_in_window,
            o.p50_us as f64 / 1000.0,
            o.p95_us as f64 / 1000.0,
            o.p99_us as f64 / 1000.0,
            o.throughput_per_min,
            o.aas,
            o.shared_hits,
            o.disk_reads,
            o.evictions,
            o.empty_rate
        )
    }
}

/// Header plus the rows of every report.
pub fn to_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_rows());
    }
    out
}
