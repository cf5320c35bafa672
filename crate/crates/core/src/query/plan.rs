//! EXPLAIN-style estimation and page-level execution.
//!
//! Row estimates come from the metadata snapshot (active + deleted rows, since
//! deleted rows still occupy scanned pages) scaled by per-filter selectivity
//! under an independence assumption:
//!
//! * equality on a non-key field: `1 / distinct(field)`
//! * membership of `k` values: `min(1, k / distinct(field))`
//! * range on `updated_at`: covered fraction of the tenant's observed tick span
//!
//! Page estimates come from the layout's account runs; cost assumes every
//! page is a disk read.

use std::collections::{BTreeSet, HashMap};

use super::{matches_all, partition_scope, Field, Filter, KeyField, PartitionValue, Query, QueryError, Row};
use crate::corpus::{AccountId, ResourceRecord};
use crate::metadata::{Snapshot, TenantStats};
use crate::storage::{
    index_trace, CostModel, ExecutionStats, IndexKey, IndexLookup, IndexedField, PageId, SharedBufferPool, TableLayout,
    INDEX_ENTRY_BYTES,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AccessPath {
    /// Every data page of the tenant.
    Full,
    /// Secondary index on the leading filter's field.
    Index(IndexedField),
    /// Only the runs of the listed partition values' accounts.
    PartitionScoped {
        key: KeyField,
        values: BTreeSet<PartitionValue>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryPlan {
    pub access: AccessPath,
    pub estimated_rows: u64,
    pub estimated_cost: u64,
    pub estimated_pages: u64,
}

fn distinct(tenant: Option<&TenantStats>, field: Field) -> f64 {
    let n = tenant.map_or(1, |t| match field {
        Field::Region => t.distinct_regions,
        Field::Service => t.distinct_services,
        Field::ResourceType => t.distinct_resource_types,
        Field::AccountId | Field::AccountRegion | Field::UpdatedAt => 1,
    });
    n.max(1) as f64
}

fn selectivity(filter: &Filter, tenant: Option<&TenantStats>) -> f64 {
    let span = |t: &TenantStats| (t.max_updated_at - t.min_updated_at + 1) as f64;
    let s = match filter {
        f if f.field().is_partition_key() => 1.0,
        Filter::Eq { field, .. } => 1.0 / distinct(tenant, *field),
        Filter::In { field, values } => values.len() as f64 / distinct(tenant, *field),
        Filter::UpdatedAtLeast(t) => tenant.map_or(1.0, |ts| (ts.max_updated_at as f64 - *t as f64 + 1.0) / span(ts)),
        Filter::UpdatedBefore(t) => tenant.map_or(1.0, |ts| (*t as f64 - ts.min_updated_at as f64) / span(ts)),
    };
    s.clamp(0.0, 1.0)
}

fn conjunction_selectivity(filters: &[Filter], tenant: Option<&TenantStats>) -> f64 {
    filters.iter().map(|f| selectivity(f, tenant)).product()
}

/// Accounts of the query's tenant the plan will read, in physical order.
fn scoped_accounts(layout: &TableLayout, query: &Query, access: &AccessPath) -> Vec<AccountId> {
    let tenant_accounts = layout.tenant_accounts(&query.tenant);
    match access {
        AccessPath::PartitionScoped { values, .. } => {
            let wanted: BTreeSet<&AccountId> = values.iter().map(|v| &v.account).collect();
            tenant_accounts.iter().filter(|a| wanted.contains(a)).cloned().collect()
        }
        _ => tenant_accounts.to_vec(),
    }
}

/// Plans `query` with the default path: partition-scoped when it carries key
/// filters, a full tenant scan otherwise.
pub fn explain(layout: &TableLayout, snapshot: &Snapshot, cost: &CostModel, query: &Query) -> QueryPlan {
    let access = match partition_scope(query) {
        Some((key, values)) => AccessPath::PartitionScoped { key, values },
        None => AccessPath::Full,
    };
    explain_with_path(layout, snapshot, cost, query, access).expect("scan paths are always available")
}

pub fn explain_with_path(
    layout: &TableLayout,
    snapshot: &Snapshot,
    cost: &CostModel,
    query: &Query,
    access: AccessPath,
) -> Result<QueryPlan, QueryError> {
    let tenant = snapshot.tenant(&query.tenant);
    let base_rows: u64 = match &access {
        AccessPath::PartitionScoped { values, .. } => values
            .iter()
            .filter(|v| {
                snapshot
                    .account(&v.account)
                    .is_some_and(|a| a.tenant_id == query.tenant)
            })
            .map(|v| {
                let (a, d) = snapshot.value_counts(v);
                a + d
            })
            .sum(),
        _ => tenant.map_or(0, |t| t.accounts.iter().map(|a| snapshot.accounts[a].total()).sum()),
    };
    let non_key: Vec<Filter> = query
        .filters
        .iter()
        .filter(|f| !f.field().is_partition_key())
        .cloned()
        .collect();
    let left_sel = conjunction_selectivity(&non_key, tenant);

    let (estimated_rows, estimated_pages) = match &access {
        AccessPath::Index(field) => {
            if query.join.is_some() {
                return Err(QueryError::UnsupportedPath("index path does not support joins".into()));
            }
            let lookup = index_lookup(query)?;
            if lookup.0 != *field {
                return Err(QueryError::UnsupportedPath(format!(
                    "leading filter is on `{}`, not `{}`",
                    lookup.0.name(),
                    field.name()
                )));
            }
            let lead_sel = selectivity(&query.filters[0], tenant);
            let fetched = (base_rows as f64 * lead_sel).round() as u64;
            let probes = match &lookup.1 {
                IndexLookup::Keys(keys) => keys.len() as u64,
                _ => 1,
            };
            let per_page = u64::from(layout.page_size() / INDEX_ENTRY_BYTES).max(1);
            (fetched, probes * 2 + fetched.div_ceil(per_page) + fetched)
        }
        _ => {
            let accounts = scoped_accounts(layout, query, &access);
            let pages: u64 = accounts
                .iter()
                .filter_map(|a| layout.account_run(a))
                .map(|r| r.page_count())
                .sum();
            match &query.join {
                None => (base_rows, pages),
                Some(right) => {
                    let right_sel = conjunction_selectivity(right, tenant);
                    let n_accounts = accounts.len().max(1) as f64;
                    let left = base_rows as f64 * left_sel;
                    // nested loop within each account
                    let probes = left * (base_rows as f64 / n_accounts);
                    let _ = right_sel;
                    ((base_rows as f64 + probes).round() as u64, pages * 2)
                }
            }
        }
    };
    let estimated_rows = if query.join.is_none() && !matches!(access, AccessPath::Index(_)) {
        (estimated_rows as f64 * left_sel).round() as u64
    } else {
        estimated_rows
    };
    Ok(QueryPlan {
        access,
        estimated_rows,
        estimated_cost: estimated_pages * cost.miss_cost,
        estimated_pages,
    })
}

/// Index lookup answering the query's leading filter.
pub(crate) fn index_lookup(query: &Query) -> Result<(IndexedField, IndexLookup), QueryError> {
    let lead = query
        .filters
        .first()
        .ok_or_else(|| QueryError::UnsupportedPath("query has no leading filter".into()))?;
    let field = match lead.field() {
        Field::Region => IndexedField::Region,
        Field::Service => IndexedField::Service,
        Field::ResourceType => IndexedField::ResourceType,
        Field::UpdatedAt => IndexedField::UpdatedAt,
        other => return Err(QueryError::Storage(crate::storage::StorageError::NoIndex(other.name()))),
    };
    let lookup = match lead {
        Filter::Eq { value, .. } => IndexLookup::Keys(vec![IndexKey::Str(value.clone())]),
        Filter::In { values, .. } => IndexLookup::Keys(values.iter().cloned().map(IndexKey::Str).collect()),
        Filter::UpdatedAtLeast(t) => IndexLookup::AtLeast(*t),
        Filter::UpdatedBefore(t) => IndexLookup::Below(*t),
    };
    Ok((field, lookup))
}

/// Page trace and result rows of a plan, independent of cache state.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PreparedExecution {
    pub trace: Vec<PageId>,
    pub rows: Vec<Row>,
    pub rows_examined: u64,
}

fn live(filters: &[Filter], r: &ResourceRecord) -> bool {
    !r.is_deleted && matches_all(filters, r)
}

/// Walks the pages the plan reads and evaluates the query on their slots.
pub fn prepare(layout: &TableLayout, query: &Query, plan: &QueryPlan) -> Result<PreparedExecution, QueryError> {
    let mut out = PreparedExecution::default();
    if let AccessPath::Index(field) = &plan.access {
        let (lead_field, lookup) = index_lookup(query)?;
        if lead_field != *field || query.join.is_some() {
            return Err(QueryError::UnsupportedPath(format!(
                "index on `{}` cannot serve this query",
                field.name()
            )));
        }
        let (trace, positions) = index_trace(layout, *field, &query.tenant, &lookup)?;
        out.rows_examined = positions.len() as u64;
        out.rows = positions
            .into_iter()
            .map(|pos| layout.record(pos))
            .filter(|r| live(&query.filters, r))
            .map(|r| Row::Record(r.resource_id))
            .collect();
        out.trace = trace;
        return Ok(out);
    }

    for account in scoped_accounts(layout, query, &plan.access) {
        let run = layout.account_run(&account).expect("account comes from layout");
        let mut left: Vec<u64> = Vec::new();
        for page_id in run.pages.clone() {
            out.trace.push(page_id);
            for &pos in &layout.page(page_id).expect("run page exists").slots {
                let r = layout.record(pos);
                out.rows_examined += 1;
                if live(&query.filters, r) {
                    left.push(r.resource_id);
                }
            }
        }
        match &query.join {
            None => out.rows.extend(left.into_iter().map(Row::Record)),
            Some(right_filters) => {
                let run_len = u64::from(run.records.end - run.records.start);
                out.rows_examined += left.len() as u64 * run_len;
                let mut right: Vec<u64> = Vec::new();
                for page_id in run.pages.clone() {
                    out.trace.push(page_id);
                    for &pos in &layout.page(page_id).expect("run page exists").slots {
                        let r = layout.record(pos);
                        if live(right_filters, r) {
                            right.push(r.resource_id);
                        }
                    }
                }
                if !left.is_empty() && !right.is_empty() {
                    for &l in &left {
                        out.rows.extend(right.iter().map(|&r| Row::Pair(l, r)));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Executes `plan` against the pool and returns rows plus accounting.
pub fn execute(
    layout: &TableLayout,
    pool: &SharedBufferPool,
    cost: &CostModel,
    query: &Query,
    plan: &QueryPlan,
) -> Result<(Vec<Row>, ExecutionStats), QueryError> {
    let prepared = prepare(layout, query, plan)?;
    let mut stats = crate::storage::replay(pool, cost, &prepared.trace);
    stats.rows_examined = prepared.rows_examined;
    stats.rows_returned = prepared.rows.len() as u64;
    Ok((prepared.rows, stats))
}

/// Brute-force evaluation over a flat record list; used as a test oracle.
#[doc(hidden)]
pub fn brute_force(records: &[ResourceRecord], query: &Query) -> Vec<Row> {
    let tenant: Vec<&ResourceRecord> = records.iter().filter(|r| r.tenant_id == query.tenant).collect();
    match &query.join {
        None => tenant
            .iter()
            .filter(|r| live(&query.filters, r))
            .map(|r| Row::Record(r.resource_id))
            .collect(),
        Some(right) => {
            let mut by_account: HashMap<&AccountId, Vec<u64>> = HashMap::new();
            for r in tenant.iter().filter(|r| live(right, r)) {
                by_account.entry(&r.account_id).or_default().push(r.resource_id);
            }
            let mut rows = Vec::new();
            for l in tenant.iter().filter(|r| live(&query.filters, r)) {
                if let Some(rs) = by_account.get(&l.account_id) {
                    rows.extend(rs.iter().map(|&r| Row::Pair(l.resource_id, r)));
                }
            }
            rows
        }
    }
}
