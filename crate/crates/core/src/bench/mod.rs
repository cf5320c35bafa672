//! Workload generation, discrete-event execution and reporting.

mod cache_exp;
mod metrics;
mod scheduler;
mod sweep;
mod workload;

use std::sync::Arc;

use thiserror::Error;

pub use cache_exp::{buffer_cache_experiment, eviction_trace, CacheExperiment, CacheRun, DEFAULT_CACHE_QUERY};
pub use metrics::{percentile, to_csv, MetricsReport, MetricsRow, RequestSample, CSV_HEADER};
pub use scheduler::{index_plan, Simulation};
pub use sweep::{
    drain_template, sensitivity_sweep, sweep_csv, DrainTotals, SweepGrid, SweepPoint, SweepRow, SWEEP_CSV_HEADER,
};
pub use workload::{templates, Condition, Template, WorkloadSpec};

use crate::config::{invalid, ConfigError, KvConfig};
use crate::corpus::{generate_corpus, CorpusError, CorpusSpec, Tick};
use crate::engine::{EngineConfig, EngineError};
use crate::metadata::Snapshot;
use crate::query::QueryError;
use crate::storage::{
    build_layout, BufferPool, CostModel, SharedBufferPool, StorageError, TableLayout, DEFAULT_PAGE_SIZE,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    ConfigKey(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StorageConfig {
    pub page_size: u32,
    /// Pool size as a fraction of all table pages, unless `pool_pages` is set.
    pub pool_fraction: f64,
    pub pool_pages: Option<usize>,
    pub cost: CostModel,
    /// Disk reads served concurrently.
    pub io_channels: usize,
}

impl Default for StorageConfig {
    fn default() -> Self {
        Self {
            page_size: DEFAULT_PAGE_SIZE,
            pool_fraction: 0.10,
            pool_pages: None,
            cost: CostModel::default(),
            io_channels: 4,
        }
    }
}

const STORAGE_KEYS: &[&str] = &[
    "page_size",
    "pool_fraction",
    "pool_pages",
    "hit_cost",
    "miss_cost",
    "io_channels",
];

impl StorageConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if !(self.pool_fraction > 0.0 && self.pool_fraction <= 1.0) {
            return Err(BenchError::Config("pool_fraction must be in (0, 1]".into()));
        }
        if self.io_channels == 0 || self.pool_pages == Some(0) {
            return Err(BenchError::Config("io_channels and pool_pages must be positive".into()));
        }
        self.cost.validate()?;
        Ok(())
    }

    pub fn pool_capacity(&self, pages: u64) -> usize {
        self.pool_pages
            .unwrap_or_else(|| ((pages as f64 * self.pool_fraction).ceil() as usize).max(1))
    }

    pub fn overlay(&self, cfg: &KvConfig, prefix: &str) -> Result<Self, ConfigError> {
        cfg.check_known(prefix, STORAGE_KEYS)?;
        let mut out = self.clone();
        let key = |k: &str| format!("{prefix}{k}");
        cfg.read(&key("page_size"), &mut out.page_size)?;
        cfg.read(&key("pool_fraction"), &mut out.pool_fraction)?;
        cfg.read(&key("hit_cost"), &mut out.cost.hit_cost)?;
        cfg.read(&key("miss_cost"), &mut out.cost.miss_cost)?;
        cfg.read(&key("io_channels"), &mut out.io_channels)?;
        if let Some(raw) = cfg.get(&key("pool_pages")) {
            out.pool_pages = Some(
                raw.trim()
                    .parse()
                    .map_err(|e: std::num::ParseIntError| invalid(&key("pool_pages"), raw, &e.to_string()))?,
            );
        }
        out.validate()
            .map_err(|e| invalid(&format!("{prefix}*"), "", &e.to_string()))?;
        Ok(out)
    }

    pub fn to_kv(&self, prefix: &str, cfg: &mut KvConfig) {
        let key = |k: &str| format!("{prefix}{k}");
        cfg.set(key("page_size"), self.page_size);
        cfg.set(key("pool_fraction"), self.pool_fraction);
        cfg.set(key("hit_cost"), self.cost.hit_cost);
        cfg.set(key("miss_cost"), self.cost.miss_cost);
        cfg.set(key("io_channels"), self.io_channels);
        if let Some(p) = self.pool_pages {
            cfg.set(key("pool_pages"), p);
        }
    }
}

/// A loaded corpus shared by every benchmark run over it.
#[derive(Clone, Debug)]
pub struct Bench {
    pub corpus: CorpusSpec,
    pub storage: StorageConfig,
    pub layout: Arc<TableLayout>,
    pub snapshot: Arc<Snapshot>,
}

impl Bench {
    pub fn new(corpus: &CorpusSpec, storage: &StorageConfig) -> Result<Self, BenchError> {
        storage.validate()?;
        let records = generate_corpus(corpus)?;
        let layout = build_layout(&records, storage.page_size)?;
        let snapshot = Snapshot::build(&records, corpus.horizon, None);
        Ok(Self {
            corpus: corpus.clone(),
            storage: storage.clone(),
            layout: Arc::new(layout),
            snapshot: Arc::new(snapshot),
        })
    }

    pub fn horizon(&self) -> Tick {
        self.corpus.horizon
    }

    pub fn templates(&self) -> Vec<Template> {
        templates(self.corpus.horizon)
    }

    /// A cold pool sized by the storage config.
    pub fn fresh_pool(&self) -> SharedBufferPool {
        let cap = self.storage.pool_capacity(u64::from(self.layout.total_pages()));
        SharedBufferPool::new(BufferPool::new(cap).expect("capacity is positive"))
    }

    pub fn run(&self, engine: &EngineConfig, workload: &WorkloadSpec) -> Result<MetricsReport, BenchError> {
        Simulation::new(self, engine, workload)?.run()
    }
}

/// Generates the corpus and runs one workload over it.
pub fn run_benchmark(
    corpus: &CorpusSpec,
    storage: &StorageConfig,
    engine: &EngineConfig,
    workload: &WorkloadSpec,
) -> Result<MetricsReport, BenchError> {
    Bench::new(corpus, storage)?.run(engine, workload)
}
