//! Grid runs over the heuristic and termination parameters.

use std::fmt::Write as _;

use super::metrics::MetricsRow;
use super::workload::{Template, WorkloadSpec};
use super::{Bench, BenchError};
use crate::config::{invalid, ConfigError, KvConfig};
use crate::corpus::TenantId;
use crate::engine::{Engine, EngineConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub candidates_per_event: Vec<usize>,
    pub values_per_candidate: Vec<usize>,
    pub weight_relevance: Vec<f64>,
    pub weight_cost: Vec<f64>,
    pub empty_threshold: Vec<u32>,
}

impl SweepGrid {
    /// The one-point grid at `base`.
    pub fn single(base: &EngineConfig) -> Self {
        Self {
            candidates_per_event: vec![base.heuristics.candidates_per_event],
            values_per_candidate: vec![base.heuristics.values_per_candidate],
            weight_relevance: vec![base.heuristics.weight_relevance],
            weight_cost: vec![base.heuristics.weight_cost],
            empty_threshold: vec![base.termination.empty_threshold],
        }
    }

    /// Reads comma-separated value lists under `prefix`; missing keys keep
    /// the single value from `base`.
    pub fn from_kv(cfg: &KvConfig, prefix: &str, base: &EngineConfig) -> Result<Self, ConfigError> {
        cfg.check_known(
            prefix,
            &[
                "candidates_per_event",
                "values_per_candidate",
                "weight_relevance",
                "weight_cost",
                "empty_threshold",
            ],
        )?;
        fn list<T: std::str::FromStr>(cfg: &KvConfig, key: String, out: &mut Vec<T>) -> Result<(), ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            if let Some(raw) = cfg.get(&key) {
                *out = raw
                    .split(',')
                    .map(|p| p.trim().parse::<T>().map_err(|e| invalid(&key, raw, &e.to_string())))
                    .collect::<Result<_, _>>()?;
                if out.is_empty() {
                    return Err(invalid(&key, raw, "empty list"));
                }
            }
            Ok(())
        }
        let mut g = Self::single(base);
        list(
            cfg,
            format!("{prefix}candidates_per_event"),
            &mut g.candidates_per_event,
        )?;
        list(
            cfg,
            format!("{prefix}values_per_candidate"),
            &mut g.values_per_candidate,
        )?;
        list(cfg, format!("{prefix}weight_relevance"), &mut g.weight_relevance)?;
        list(cfg, format!("{prefix}weight_cost"), &mut g.weight_cost)?;
        list(cfg, format!("{prefix}empty_threshold"), &mut g.empty_threshold)?;
        Ok(g)
    }

    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &candidates_per_event in &self.candidates_per_event {
            for &values_per_candidate in &self.values_per_candidate {
                for &weight_relevance in &self.weight_relevance {
                    for &weight_cost in &self.weight_cost {
                        for &empty_threshold in &self.empty_threshold {
                            out.push(SweepPoint {
                                candidates_per_event,
                                values_per_candidate,
                                weight_relevance,
                                weight_cost,
                                empty_threshold,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub candidates_per_event: usize,
    pub values_per_candidate: usize,
    pub weight_relevance: f64,
    pub weight_cost: f64,
    pub empty_threshold: u32,
}

impl SweepPoint {
    pub fn apply(&self, base: &EngineConfig) -> EngineConfig {
        let mut c = base.clone();
        c.heuristics.candidates_per_event = self.candidates_per_event;
        c.heuristics.values_per_candidate = self.values_per_candidate;
        c.heuristics.weight_relevance = self.weight_relevance;
        c.heuristics.weight_cost = self.weight_cost;
        c.termination.empty_threshold = self.empty_threshold;
        c.termination.per_class.clear();
        c
    }
}

/// Totals from paging one query to termination without touching a pool.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DrainTotals {
    pub rows: u64,
    pub pages: u64,
    pub max_pages: u64,
}

/// Pages `template` for `tenant` on a fresh engine until no token is returned.
pub fn drain_template(
    bench: &Bench,
    config: &EngineConfig,
    template: &Template,
    tenant: &TenantId,
) -> Result<DrainTotals, BenchError> {
    let engine = Engine::new(
        config.clone(),
        bench.layout.clone(),
        bench.snapshot.clone(),
        bench.storage.cost,
    );
    let query = template.instantiate(tenant);
    let mut totals = DrainTotals::default();
    let mut token = None;
    loop {
        let page = engine.plan_page(&query, token.as_ref(), 0)?;
        totals.rows += page.prepared.rows.len() as u64;
        totals.pages += 1;
        match page.next_token {
            Some(t) => token = Some(t),
            None => break,
        }
    }
    totals.max_pages = totals.pages;
    Ok(totals)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub metrics: MetricsRow,
    pub drained: DrainTotals,
}

pub const SWEEP_CSV_HEADER: &str = "candidates_per_event,values_per_candidate,weight_relevance,weight_cost,empty_threshold,\
requests,completed_in_window,p50_us,p95_us,p99_us,throughput_per_min,aas,empty_rate,drained_rows,drained_pages,max_pages_per_query";

/// Runs the HSSPS workload and a per-template drain at every grid point.
pub fn sensitivity_sweep(
    bench: &Bench,
    base: &EngineConfig,
    workload: &WorkloadSpec,
    grid: &SweepGrid,
) -> Result<Vec<SweepRow>, BenchError> {
    let tenants: Vec<TenantId> = bench.layout.tenants().cloned().collect();
    let templates = bench.templates();
    let mut rows = Vec::new();
    for point in grid.points() {
        let config = point.apply(base);
        config
            .heuristics
            .validate()
            .map_err(|e| BenchError::Config(e.to_string()))?;
        if point.empty_threshold == 0 {
            return Err(BenchError::Config("empty_threshold must be at least 1".into()));
        }
        let report = bench.run(&config, workload)?;
        let mut drained = DrainTotals::default();
        for t in &templates {
            for tenant in &tenants {
                let d = drain_template(bench, &config, t, tenant)?;
                drained.rows += d.rows;
                drained.pages += d.pages;
                drained.max_pages = drained.max_pages.max(d.max_pages);
            }
        }
        rows.push(SweepRow {
            point,
            metrics: report.overall().clone(),
            drained,
        });
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let (p, m) = (&r.point, &r.metrics);
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{},{},{},{},{},{},{:.6},{:.6},{:.6},{},{},{}",
            p.candidates_per_event,
            p.values_per_candidate,
            p.weight_relevance,
            p.weight_cost,
            p.empty_threshold,
            m.requests,
            m.completed_in_window,
            m.p50_us,
            m.p95_us,
            m.p99_us,
            m.throughput_per_min,
            m.aas,
            m.empty_rate,
            r.drained.rows,
            r.drained.pages,
            r.drained.max_pages
        );
    }
    out
}
