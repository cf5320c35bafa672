//! Eligibility, the partitioning event loop and pass-through execution.
//!
//! A page request is split into [`Engine::plan_page`], which is pure and
//! yields the page trace, rows and next token, and [`Engine::run`], which
//! replays the trace against the buffer pool. The bench interleaves the
//! replay of many plans; [`Engine::first_page`] and [`Engine::next_page`]
//! do both steps at once.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::config::{invalid, ConfigError, KvConfig};
use crate::corpus::{TenantId, Tick};
use crate::heuristics::{
    generate_candidates, rank_values, rotate, select_best, CursorStore, HeuristicConfig, HeuristicError,
};
use crate::metadata::Snapshot;
use crate::pagination::{
    advance, check_context, mint, verify, Advance, ExhaustReason, InvariantViolation, PageToken, TerminationConfig,
    TokenError, TokenKey, TokenPayload, DEFAULT_TOKEN_TTL,
};
use crate::query::{explain, prepare, KeyField, PartitionValue, PreparedExecution, Query, QueryError, QueryPlan, Row};
use crate::storage::{replay, CostModel, ExecutionStats, PageId, SharedBufferPool, TableLayout};

pub const DEFAULT_CARDINALITY_THRESHOLD: u64 = 10_000;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Heuristic(#[from] HeuristicError),
    #[error(transparent)]
    Invariant(#[from] InvariantViolation),
}

impl EngineError {
    pub fn kind(&self) -> &'static str {
        match self {
            EngineError::Token(e) => e.kind(),
            EngineError::Query(_) => "query",
            EngineError::Heuristic(_) => "heuristic",
            EngineError::Invariant(_) => "invariant",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    /// Minimum tenant row count (deleted rows included) for partitioning.
    pub cardinality_threshold: u64,
    pub key_field: KeyField,
    pub heuristics: HeuristicConfig,
    pub tenant_heuristics: BTreeMap<TenantId, HeuristicConfig>,
    pub termination: TerminationConfig,
    pub token_key: TokenKey,
    pub token_ttl: Tick,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            cardinality_threshold: DEFAULT_CARDINALITY_THRESHOLD,
            key_field: KeyField::Account,
            heuristics: HeuristicConfig::default(),
            tenant_heuristics: BTreeMap::new(),
            termination: TerminationConfig::default(),
            token_key: TokenKey::from_seed(0),
            token_ttl: DEFAULT_TOKEN_TTL,
        }
    }
}

const ENGINE_KEYS: &[&str] = &[
    "cardinality_threshold",
    "key_field",
    "token_ttl",
    "token_key",
    "token_seed",
];

impl EngineConfig {
    pub fn heuristics_for(&self, tenant: &TenantId) -> &HeuristicConfig {
        self.tenant_heuristics.get(tenant).unwrap_or(&self.heuristics)
    }

    /// Reads `engine.*`, `heuristics.*`, `termination.*` and
    /// `tenant.<id>.heuristics.*` keys.
    pub fn from_kv(cfg: &KvConfig) -> Result<Self, ConfigError> {
        cfg.check_known("engine.", ENGINE_KEYS)?;
        let mut out = Self::default();
        cfg.read("engine.cardinality_threshold", &mut out.cardinality_threshold)?;
        cfg.read("engine.token_ttl", &mut out.token_ttl)?;
        if out.token_ttl == 0 {
            return Err(invalid("engine.token_ttl", 0, "must be positive"));
        }
        if let Some(raw) = cfg.get("engine.key_field") {
            out.key_field = raw
                .trim()
                .parse()
                .map_err(|e: String| invalid("engine.key_field", raw, &e))?;
        }
        if let Some(raw) = cfg.get("engine.token_seed") {
            let seed: u64 = raw
                .trim()
                .parse()
                .map_err(|e: std::num::ParseIntError| invalid("engine.token_seed", raw, &e.to_string()))?;
            out.token_key = TokenKey::from_seed(seed);
        }
        if let Some(raw) = cfg.get("engine.token_key") {
            let bytes = decode_hex32(raw.trim())
                .ok_or_else(|| invalid("engine.token_key", "<redacted>", "expected 64 hex digits"))?;
            out.token_key = TokenKey::new(bytes);
        }
        out.heuristics = out.heuristics.overlay(cfg, "heuristics.")?;
        out.termination = out.termination.overlay(cfg, "termination.")?;

        let mut tenants = BTreeSet::new();
        for k in cfg.keys() {
            if let Some(rest) = k.strip_prefix("tenant.") {
                match rest.split_once(".heuristics.") {
                    Some((tenant, _)) if !tenant.is_empty() => {
                        tenants.insert(tenant.to_owned());
                    }
                    _ => return Err(ConfigError::UnknownKey(k.to_owned())),
                }
            }
        }
        for t in tenants {
            let h = out.heuristics.overlay(cfg, &format!("tenant.{t}.heuristics."))?;
            out.tenant_heuristics.insert(TenantId::new(t), h);
        }
        Ok(out)
    }

    /// Writes every setting except the token key.
    pub fn to_kv(&self, cfg: &mut KvConfig) {
        cfg.set("engine.cardinality_threshold", self.cardinality_threshold);
        cfg.set("engine.key_field", self.key_field);
        cfg.set("engine.token_ttl", self.token_ttl);
        self.heuristics.to_kv("heuristics.", cfg);
        self.termination.to_kv("termination.", cfg);
        for (t, h) in &self.tenant_heuristics {
            h.to_kv(&format!("tenant.{t}.heuristics."), cfg);
        }
    }
}

fn decode_hex32(s: &str) -> Option<[u8; 32]> {
    if s.len() != 64 || !s.is_ascii() {
        return None;
    }
    let mut out = [0u8; 32];
    for (i, b) in out.iter_mut().enumerate() {
        *b = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok()?;
    }
    Some(out)
}

/// What the partitioning event chose, for observability.
#[derive(Clone, Debug, PartialEq)]
pub struct EventDiagnostics {
    pub values: BTreeSet<PartitionValue>,
    pub candidates_considered: usize,
    pub relevance_score: f64,
    pub cost_penalty: f64,
    pub composite_score: f64,
    pub plan: QueryPlan,
    pub exhausted: Option<ExhaustReason>,
}

/// A page whose rows and trace are known but whose pages are not yet read.
#[derive(Clone, Debug, PartialEq)]
pub struct PagePlan {
    pub query: Query,
    pub plan: QueryPlan,
    pub prepared: PreparedExecution,
    pub next_token: Option<PageToken>,
    /// `None` for pass-through.
    pub event: Option<EventDiagnostics>,
}

impl PagePlan {
    pub fn trace(&self) -> &[PageId] {
        &self.prepared.trace
    }

    pub fn is_pass_through(&self) -> bool {
        self.event.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PageResult {
    pub rows: Vec<Row>,
    pub next_token: Option<PageToken>,
    pub stats: ExecutionStats,
    pub event: Option<EventDiagnostics>,
}

impl PageResult {
    /// Assembles a result from a plan and the stats of replaying its trace.
    pub fn complete(plan: PagePlan, mut stats: ExecutionStats) -> Self {
        stats.rows_examined = plan.prepared.rows_examined;
        stats.rows_returned = plan.prepared.rows.len() as u64;
        Self {
            rows: plan.prepared.rows,
            next_token: plan.next_token,
            stats,
            event: plan.event,
        }
    }
}

pub struct Engine {
    config: EngineConfig,
    layout: Arc<TableLayout>,
    snapshot: Arc<Snapshot>,
    cost: CostModel,
    cursors: CursorStore,
}

impl Engine {
    pub fn new(config: EngineConfig, layout: Arc<TableLayout>, snapshot: Arc<Snapshot>, cost: CostModel) -> Self {
        Self {
            config,
            layout,
            snapshot,
            cost,
            cursors: CursorStore::new(),
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn layout(&self) -> &TableLayout {
        &self.layout
    }

    pub fn snapshot(&self) -> &Arc<Snapshot> {
        &self.snapshot
    }

    pub fn cost(&self) -> &CostModel {
        &self.cost
    }

    pub fn set_snapshot(&mut self, snapshot: Arc<Snapshot>) {
        self.snapshot = snapshot;
    }

    pub fn eligible(&self, query: &Query) -> bool {
        eligible(query, &self.layout, &self.config)
    }

    /// Plans the page for `token`, or the first page when `token` is `None`.
    pub fn plan_page(&self, query: &Query, token: Option<&PageToken>, now: Tick) -> Result<PagePlan, EngineError> {
        let key = self.config.key_field;
        let universe = self.snapshot.universe(&query.tenant, key);
        let signature = query.signature();
        let payload = match token {
            Some(token) => {
                let payload = verify(token, &self.config.token_key, &query.tenant, now)?;
                check_context(&payload, key, &universe, signature)?;
                payload
            }
            None if !self.eligible(query) => return self.pass_through(query),
            None => {
                let cursor = self.cursors.next(&query.tenant, signature);
                TokenPayload::start(query.tenant.clone(), key, &universe, signature, cursor)
            }
        };

        let config = self.config.heuristics_for(&query.tenant);
        let excluded: BTreeSet<PartitionValue> =
            payload.searched.iter().map(|&i| universe[i as usize].clone()).collect();
        let ranking = rotate(
            rank_values(&self.snapshot, query, key, &excluded, config),
            payload.cursor,
        );
        if ranking.is_empty() {
            // tenant has no partition values at all
            return self.pass_through(query);
        }
        let candidates = generate_candidates(&ranking, query, key, config, &self.layout, &self.snapshot, &self.cost)?;
        let considered = candidates.len();
        let best = select_best(candidates)?;
        let prepared = prepare(&self.layout, &best.query, &best.plan)?;

        let executed: BTreeSet<u32> = best
            .values
            .iter()
            .map(|v| {
                universe
                    .binary_search(v)
                    .expect("candidate values come from the universe") as u32
            })
            .collect();
        let threshold = self.config.termination.threshold(query.class);
        let next_cursor = payload.cursor.wrapping_add(1);
        let (next_token, exhausted) =
            match advance(payload, &executed, prepared.rows.len() as u64, next_cursor, threshold)? {
                Advance::Continue(next) => (
                    Some(mint(&next.stamped(now, self.config.token_ttl), &self.config.token_key)),
                    None,
                ),
                Advance::Exhausted { reason, .. } => (None, Some(reason)),
            };
        Ok(PagePlan {
            query: best.query,
            plan: best.plan.clone(),
            prepared,
            next_token,
            event: Some(EventDiagnostics {
                values: best.values,
                candidates_considered: considered,
                relevance_score: best.relevance_score,
                cost_penalty: best.cost_penalty,
                composite_score: best.composite_score,
                plan: best.plan,
                exhausted,
            }),
        })
    }

    fn pass_through(&self, query: &Query) -> Result<PagePlan, EngineError> {
        let plan = explain(&self.layout, &self.snapshot, &self.cost, query);
        let prepared = prepare(&self.layout, query, &plan)?;
        Ok(PagePlan {
            query: query.clone(),
            plan,
            prepared,
            next_token: None,
            event: None,
        })
    }

    /// Reads the plan's pages through the pool.
    pub fn run(&self, plan: PagePlan, pool: &SharedBufferPool) -> PageResult {
        let stats = replay(pool, &self.cost, plan.trace());
        PageResult::complete(plan, stats)
    }

    pub fn first_page(&self, query: &Query, pool: &SharedBufferPool, now: Tick) -> Result<PageResult, EngineError> {
        Ok(self.run(self.plan_page(query, None, now)?, pool))
    }

    pub fn next_page(
        &self,
        query: &Query,
        token: &PageToken,
        pool: &SharedBufferPool,
        now: Tick,
    ) -> Result<PageResult, EngineError> {
        Ok(self.run(self.plan_page(query, Some(token), now)?, pool))
    }
}

/// True when the query leaves the key open and its tenant is large enough.
pub fn eligible(query: &Query, layout: &TableLayout, config: &EngineConfig) -> bool {
    !query.constrains_partition_key() && layout.tenant_record_count(&query.tenant) >= config.cardinality_threshold
}
