//! Same query, same plan, three cache states.
//!
//! The pool is sized to a fraction of the whole table, which is the working
//! set of the concurrent load. The probe query covers one tenant and fits
//! the pool on its own, so a repeat run is fully warm; scans of the other
//! tenants, interleaved page by page, then push it back out.

use super::{BenchError, StorageConfig};
use crate::corpus::{generate_corpus, CorpusSpec, TenantId};
use crate::metadata::Snapshot;
use crate::query::{explain, parse_query, prepare, QueryPlan};
use crate::storage::{build_layout, replay, BufferPool, ExecutionStats, PageId, SharedBufferPool, TableLayout};

pub const DEFAULT_CACHE_QUERY: &str = "region in (us-east-1,us-west-2,eu-west-1)";

#[derive(Clone, Debug, PartialEq)]
pub struct CacheRun {
    pub label: &'static str,
    pub plan: QueryPlan,
    pub stats: ExecutionStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CacheExperiment {
    pub tenant: TenantId,
    pub pool_pages: usize,
    pub working_set_pages: u64,
    pub query_pages: u64,
    pub eviction_pages: u64,
    pub runs: [CacheRun; 3],
}

impl CacheExperiment {
    pub fn plans_identical(&self) -> bool {
        self.runs.iter().all(|r| r.plan == self.runs[0].plan)
    }

    pub fn cold_warm_ratio(&self) -> f64 {
        self.runs[0].stats.simulated_time as f64 / self.runs[1].stats.simulated_time.max(1) as f64
    }

    pub fn report(&self) -> String {
        let mut out = format!(
            "tenant={} pool_pages={} working_set_pages={} query_pages={} eviction_pages={}\n",
            self.tenant, self.pool_pages, self.working_set_pages, self.query_pages, self.eviction_pages
        );
        out.push_str("run,access,est_rows,est_pages,simulated_time_us,shared_hits,disk_reads\n");
        for r in &self.runs {
            out.push_str(&format!(
                "{},{:?},{},{},{},{},{}\n",
                r.label,
                r.plan.access,
                r.plan.estimated_rows,
                r.plan.estimated_pages,
                r.stats.simulated_time,
                r.stats.shared_hits,
                r.stats.disk_reads
            ));
        }
        out.push_str(&format!(
            "plans_identical={} cold_warm_ratio={:.3}\n",
            self.plans_identical(),
            self.cold_warm_ratio()
        ));
        out
    }
}

/// Round-robin interleaving of full scans of every tenant except `probe`.
pub fn eviction_trace(layout: &TableLayout, probe: &TenantId) -> Vec<PageId> {
    let traces: Vec<Vec<PageId>> = layout
        .tenants()
        .filter(|t| *t != probe)
        .map(|t| {
            let accounts = layout.tenant_accounts(t).iter().cloned().collect();
            layout.scan_trace(Some(&accounts))
        })
        .collect();
    let longest = traces.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = Vec::new();
    for i in 0..longest {
        out.extend(traces.iter().filter_map(|t| t.get(i)));
    }
    out
}

pub fn buffer_cache_experiment(
    corpus: &CorpusSpec,
    storage: &StorageConfig,
    query_body: &str,
) -> Result<CacheExperiment, BenchError> {
    storage.validate()?;
    let records = generate_corpus(corpus)?;
    let layout = build_layout(&records, storage.page_size)?;
    let snapshot = Snapshot::build(&records, corpus.horizon, None);
    let tenant = layout
        .tenants()
        .next()
        .cloned()
        .ok_or_else(|| BenchError::Config("corpus has no tenants".into()))?;
    let query = parse_query(&format!("tenant={tenant}; {query_body}"))?;

    let working_set = u64::from(layout.data_page_count());
    let pool_pages = storage.pool_capacity(working_set);
    let pool = SharedBufferPool::new(BufferPool::new(pool_pages)?);
    let load = eviction_trace(&layout, &tenant);

    let run = |label| -> Result<CacheRun, BenchError> {
        let plan = explain(&layout, &snapshot, &storage.cost, &query);
        let prepared = prepare(&layout, &query, &plan)?;
        let mut stats = replay(&pool, &storage.cost, &prepared.trace);
        stats.rows_returned = prepared.rows.len() as u64;
        stats.rows_examined = prepared.rows_examined;
        Ok(CacheRun { label, plan, stats })
    };
    let cold = run("cold")?;
    let warm = run("warm")?;
    replay(&pool, &storage.cost, &load);
    let evicted = run("after_load")?;
    Ok(CacheExperiment {
        query_pages: cold.stats.pages_touched,
        tenant,
        pool_pages,
        working_set_pages: working_set,
        eviction_pages: load.len() as u64,
        runs: [cold, warm, evicted],
    })
}
