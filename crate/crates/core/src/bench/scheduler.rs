//! Single-threaded discrete-event execution of concurrent request streams.
//!
//! Every page access is an event. Hits cost CPU time only; misses queue on
//! the earliest-free of `io_channels` disk servers. Each stream issues a
//! request every `request_interval_us`, or as soon as its previous request
//! completes when that takes longer. Under HSSPS a stream keeps paging the
//! same logical query until no token comes back.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::metrics::{MetricsReport, RequestSample};
use super::workload::{Condition, Template, WorkloadSpec};
use super::{Bench, BenchError};
use crate::corpus::TenantId;
use crate::engine::{Engine, EngineConfig};
use crate::metadata::Snapshot;
use crate::pagination::PageToken;
use crate::query::{explain, explain_with_path, prepare, AccessPath, Query, QueryPlan};
use crate::storage::CostModel;
use crate::storage::{Access, ExecutionStats, PageId, SharedBufferPool, TableLayout};

const US_PER_TICK: u64 = 1_000_000;

/// Plan for the index condition: the leading filter's index when there is
/// one, otherwise the default scan plan.
pub fn index_plan(layout: &TableLayout, snapshot: &Snapshot, cost: &CostModel, query: &Query) -> QueryPlan {
    if query.join.is_none() {
        if let Ok((field, _)) = crate::query::index_lookup(query) {
            if let Ok(plan) = explain_with_path(layout, snapshot, cost, query, AccessPath::Index(field)) {
                return plan;
            }
        }
    }
    explain(layout, snapshot, cost, query)
}

/// Trace, rows and rows examined of a cached unpaginated or index plan.
type StaticPlan = (Arc<Vec<PageId>>, u64, u64);

/// Trace and outcome of one request, computed before any page is read.
#[derive(Debug)]
struct Work {
    trace: Arc<Vec<PageId>>,
    rows: u64,
    rows_examined: u64,
    next_token: Option<PageToken>,
}

#[derive(Debug)]
struct InFlight {
    template: usize,
    issued_at: u64,
    work: Work,
    pos: usize,
    stats: ExecutionStats,
    evictions: u64,
}

#[derive(Debug)]
struct Stream {
    rng: ChaCha8Rng,
    /// Logical query being paged, with the token for its next page.
    paging: Option<(usize, Query, PageToken)>,
    current: Option<InFlight>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Issue,
    Access,
}

pub struct Simulation<'a> {
    bench: &'a Bench,
    workload: WorkloadSpec,
    templates: Vec<Template>,
    tenants: Vec<TenantId>,
    chooser: WeightedIndex<f64>,
    engine: Engine,
    pool: SharedBufferPool,
    channels: Vec<u64>,
    streams: Vec<Stream>,
    queue: BinaryHeap<Reverse<(u64, u64, usize, Event)>>,
    seq: u64,
    cache: HashMap<(usize, TenantId), StaticPlan>,
    samples: Vec<RequestSample>,
    window: u64,
}

impl<'a> Simulation<'a> {
    pub fn new(bench: &'a Bench, engine: &EngineConfig, workload: &WorkloadSpec) -> Result<Self, BenchError> {
        let templates = bench.templates();
        workload.validate(&templates).map_err(BenchError::Config)?;
        let chooser = WeightedIndex::new(workload.weights(&templates))
            .map_err(|e| BenchError::Config(format!("template weights: {e}")))?;
        let tenants: Vec<TenantId> = bench.layout.tenants().cloned().collect();
        if tenants.is_empty() {
            return Err(BenchError::Config("corpus has no tenants".into()));
        }
        let engine = Engine::new(
            engine.clone(),
            bench.layout.clone(),
            bench.snapshot.clone(),
            bench.storage.cost,
        );
        let streams = (0..workload.concurrency)
            .map(|i| Stream {
                rng: ChaCha8Rng::seed_from_u64(workload.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
                paging: None,
                current: None,
            })
            .collect();
        Ok(Self {
            bench,
            workload: workload.clone(),
            templates,
            tenants,
            chooser,
            engine,
            pool: bench.fresh_pool(),
            channels: vec![0; bench.storage.io_channels],
            streams,
            queue: BinaryHeap::new(),
            seq: 0,
            cache: HashMap::new(),
            samples: Vec::new(),
            window: workload.duration * US_PER_TICK,
        })
    }

    fn push(&mut self, time: u64, stream: usize, event: Event) {
        self.seq += 1;
        self.queue.push(Reverse((time, self.seq, stream, event)));
    }

    pub fn run(mut self) -> Result<MetricsReport, BenchError> {
        for s in 0..self.streams.len() {
            let offset = self.streams[s].rng.gen_range(0..self.workload.request_interval_us);
            if offset < self.window {
                self.push(offset, s, Event::Issue);
            }
        }
        while let Some(Reverse((time, _, stream, event))) = self.queue.pop() {
            match event {
                Event::Issue => self.issue(stream, time)?,
                Event::Access => self.access(stream, time),
            }
        }
        let counters = self.pool.counters();
        let touched: u64 = self.samples.iter().map(|s| s.stats.pages_touched).sum();
        if touched != counters.shared_hits + counters.disk_reads {
            return Err(BenchError::Invariant(format!(
                "pages touched {touched} != pool hits + reads {}",
                counters.shared_hits + counters.disk_reads
            )));
        }
        let evictions: u64 = self.samples.iter().map(|s| s.evictions).sum();
        if evictions != counters.evictions {
            return Err(BenchError::Invariant(
                "eviction accounting diverged from the pool".into(),
            ));
        }
        let report = MetricsReport::build(self.workload.condition, self.window, &self.templates, self.samples);
        for r in &report.rows {
            if !(r.p50_us <= r.p95_us && r.p95_us <= r.p99_us) || r.aas < 0.0 {
                return Err(BenchError::Invariant(format!(
                    "metrics out of order for {}",
                    r.template
                )));
            }
        }
        Ok(report)
    }

    fn static_work(&mut self, template: usize, query: &Query) -> Result<Work, BenchError> {
        let key = (template, query.tenant.clone());
        let entry = match self.cache.get(&key) {
            Some(e) => e.clone(),
            None => {
                let (layout, snapshot, cost) = (&*self.bench.layout, &*self.bench.snapshot, &self.bench.storage.cost);
                let plan = match self.workload.condition {
                    Condition::Index => index_plan(layout, snapshot, cost, query),
                    _ => explain(layout, snapshot, cost, query),
                };
                let p = prepare(layout, query, &plan)?;
                let e = (Arc::new(p.trace), p.rows.len() as u64, p.rows_examined);
                self.cache.insert(key, e.clone());
                e
            }
        };
        Ok(Work {
            trace: entry.0,
            rows: entry.1,
            rows_examined: entry.2,
            next_token: None,
        })
    }

    fn issue(&mut self, s: usize, now: u64) -> Result<(), BenchError> {
        let (template, query, token) = match self.streams[s].paging.take() {
            Some((t, q, tok)) => (t, q, Some(tok)),
            None => {
                let stream = &mut self.streams[s];
                let t = self.chooser.sample(&mut stream.rng);
                let tenant = self.tenants[stream.rng.gen_range(0..self.tenants.len())].clone();
                (t, self.templates[t].instantiate(&tenant), None)
            }
        };
        let work = match self.workload.condition {
            Condition::Unpaginated | Condition::Index => self.static_work(template, &query)?,
            Condition::Hssps => {
                let page = self.engine.plan_page(&query, token.as_ref(), now / US_PER_TICK)?;
                Work {
                    rows: page.prepared.rows.len() as u64,
                    rows_examined: page.prepared.rows_examined,
                    trace: Arc::new(page.prepared.trace),
                    next_token: page.next_token,
                }
            }
        };
        if let Some(tok) = &work.next_token {
            self.streams[s].paging = Some((template, query, tok.clone()));
        }
        self.streams[s].current = Some(InFlight {
            template,
            issued_at: now,
            work,
            pos: 0,
            stats: ExecutionStats::default(),
            evictions: 0,
        });
        self.access(s, now);
        Ok(())
    }

    /// Reads the next page of the stream's request, or completes it.
    fn access(&mut self, s: usize, now: u64) {
        let cost = self.bench.storage.cost;
        let flight = self.streams[s].current.as_mut().expect("access without a request");
        if flight.pos == flight.work.trace.len() {
            let done = self.streams[s].current.take().expect("checked above");
            let mut stats = done.stats;
            stats.rows_returned = done.work.rows;
            stats.rows_examined = done.work.rows_examined;
            self.samples.push(RequestSample {
                stream: s,
                template: done.template,
                issued_at: done.issued_at,
                completed_at: now,
                stats,
                evictions: done.evictions,
            });
            let next = now.max(done.issued_at + self.workload.request_interval_us);
            if next < self.window {
                self.push(next, s, Event::Issue);
            }
            return;
        }
        let page = flight.work.trace[flight.pos];
        flight.pos += 1;
        let access = self.pool.access(page);
        flight.stats.record(access, &cost);
        let next = match access {
            Access::Hit => now + cost.hit_cost,
            Access::Miss { evicted } => {
                flight.evictions += u64::from(evicted.is_some());
                let (idx, free) = self
                    .channels
                    .iter()
                    .copied()
                    .enumerate()
                    .min_by_key(|&(i, t)| (t, i))
                    .expect("at least one channel");
                let done = now.max(free) + cost.miss_cost;
                self.channels[idx] = done;
                done
            }
        };
        self.push(next, s, Event::Access);
    }
}
