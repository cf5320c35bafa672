//! Page-based storage with a bounded LRU buffer pool.
//!
//! Records are clustered by `(tenant, account)`: every account owns a
//! contiguous run of data pages, so scoping a scan to a set of accounts
//! scopes the pages it touches. Secondary indexes live in their own pages
//! after the data pages and go through the same pool.
//!
//! Latency is simulated: each page access is either a shared hit or a disk
//! read, and [`CostModel`] turns those counters into simulated time.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Range;

use parking_lot::Mutex;
use thiserror::Error;

use crate::corpus::{AccountId, ResourceRecord, TenantId, Tick};

pub type PageId = u32;

pub const DEFAULT_PAGE_SIZE: u32 = 8192;
/// Fixed per-record slot overhead in bytes.
pub const RECORD_OVERHEAD: u32 = 16;
/// Bytes per secondary-index entry.
pub const INDEX_ENTRY_BYTES: u32 = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StorageError {
    #[error("record {resource_id} needs {footprint} bytes but pages hold {page_size}")]
    RecordTooLarge {
        resource_id: u64,
        footprint: u32,
        page_size: u32,
    },
    #[error("buffer pool capacity must be at least one page")]
    ZeroCapacity,
    #[error("no secondary index on `{0}`")]
    NoIndex(&'static str),
    #[error("invalid cost model: {0}")]
    InvalidCostModel(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Page {
    pub id: PageId,
    /// Positions into [`TableLayout::records`].
    pub slots: Vec<u32>,
    pub bytes_used: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccountRun {
    pub tenant_id: TenantId,
    pub pages: Range<PageId>,
    pub records: Range<u32>,
}

impl AccountRun {
    pub fn page_count(&self) -> u64 {
        u64::from(self.pages.end - self.pages.start)
    }
}

/// Fields carrying a secondary index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IndexedField {
    Region,
    Service,
    ResourceType,
    UpdatedAt,
}

impl IndexedField {
    pub const ALL: [IndexedField; 4] = [
        IndexedField::Region,
        IndexedField::Service,
        IndexedField::ResourceType,
        IndexedField::UpdatedAt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IndexedField::Region => "region",
            IndexedField::Service => "service",
            IndexedField::ResourceType => "resource_type",
            IndexedField::UpdatedAt => "updated_at",
        }
    }

    fn key_of(self, r: &ResourceRecord) -> IndexKey {
        match self {
            IndexedField::Region => IndexKey::Str(r.region.clone()),
            IndexedField::Service => IndexKey::Str(r.service.as_str().to_owned()),
            IndexedField::ResourceType => IndexKey::Str(r.resource_type.clone()),
            IndexedField::UpdatedAt => IndexKey::Tick(r.updated_at),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IndexKey {
    Str(String),
    Tick(Tick),
}

/// Key condition an index can answer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IndexLookup {
    /// Point lookups, traversed in the given order.
    Keys(Vec<IndexKey>),
    /// `key >= from`
    AtLeast(Tick),
    /// `key < until`
    Below(Tick),
}

/// B-tree-like secondary index on `(tenant, key)`: one root page plus
/// densely packed leaf pages of entries in `(tenant, key, position)` order.
#[derive(Clone, Debug)]
pub struct SecondaryIndex {
    field: IndexedField,
    root: PageId,
    first_leaf: PageId,
    entries_per_page: usize,
    entries: Vec<(TenantId, IndexKey, u32)>,
}

impl SecondaryIndex {
    pub fn field(&self) -> IndexedField {
        self.field
    }

    pub fn page_count(&self) -> u32 {
        1 + self.leaf_count()
    }

    fn leaf_count(&self) -> u32 {
        self.entries.len().div_ceil(self.entries_per_page) as u32
    }

    fn range_of(
        &self,
        tenant: &TenantId,
        lo: Option<&IndexKey>,
        hi: Option<&IndexKey>,
        hi_inclusive: bool,
    ) -> Range<usize> {
        let start = self
            .entries
            .partition_point(|(t, k, _)| t < tenant || (t == tenant && lo.is_some_and(|lo| k < lo)));
        let end = self.entries.partition_point(|(t, k, _)| {
            t < tenant
                || (t == tenant
                    && match hi {
                        None => true,
                        Some(hi) if hi_inclusive => k <= hi,
                        Some(hi) => k < hi,
                    })
        });
        start..end.max(start)
    }

    /// Appends the index pages visited for `lookup` to `trace` and returns
    /// the matching record positions in index order.
    fn lookup(&self, tenant: &TenantId, lookup: &IndexLookup, trace: &mut Vec<PageId>) -> Vec<u32> {
        let ranges: Vec<Range<usize>> = match lookup {
            IndexLookup::Keys(keys) => keys
                .iter()
                .map(|k| self.range_of(tenant, Some(k), Some(k), true))
                .collect(),
            IndexLookup::AtLeast(t) => vec![self.range_of(tenant, Some(&IndexKey::Tick(*t)), None, false)],
            IndexLookup::Below(t) => vec![self.range_of(tenant, None, Some(&IndexKey::Tick(*t)), false)],
        };
        let mut positions = Vec::new();
        for range in ranges {
            trace.push(self.root);
            let epp = self.entries_per_page;
            if range.is_empty() {
                // descending to the (empty) key position still reads one leaf
                if self.leaf_count() > 0 {
                    let leaf = (range.start.min(self.entries.len() - 1) / epp) as u32;
                    trace.push(self.first_leaf + leaf);
                }
                continue;
            }
            let first = range.start / epp;
            let last = (range.end - 1) / epp;
            trace.extend((first..=last).map(|leaf| self.first_leaf + leaf as u32));
            positions.extend(self.entries[range].iter().map(|(_, _, pos)| *pos));
        }
        positions
    }
}

/// Physical placement of a loaded corpus.
#[derive(Clone, Debug)]
pub struct TableLayout {
    page_size: u32,
    records: Vec<ResourceRecord>,
    record_page: Vec<PageId>,
    pages: Vec<Page>,
    runs: BTreeMap<AccountId, AccountRun>,
    tenant_accounts: BTreeMap<TenantId, Vec<AccountId>>,
    indexes: BTreeMap<IndexedField, SecondaryIndex>,
}

pub fn record_footprint(r: &ResourceRecord) -> u32 {
    r.payload_bytes.saturating_add(RECORD_OVERHEAD)
}

impl TableLayout {
    pub fn page_size(&self) -> u32 {
        self.page_size
    }

    /// Records in physical (clustered) order.
    pub fn records(&self) -> &[ResourceRecord] {
        &self.records
    }

    pub fn record(&self, pos: u32) -> &ResourceRecord {
        &self.records[pos as usize]
    }

    pub fn page_of(&self, pos: u32) -> PageId {
        self.record_page[pos as usize]
    }

    pub fn data_pages(&self) -> &[Page] {
        &self.pages
    }

    pub fn page(&self, id: PageId) -> Option<&Page> {
        self.pages.get(id as usize)
    }

    pub fn data_page_count(&self) -> u32 {
        self.pages.len() as u32
    }

    pub fn total_pages(&self) -> u32 {
        self.data_page_count() + self.indexes.values().map(SecondaryIndex::page_count).sum::<u32>()
    }

    pub fn account_run(&self, account: &AccountId) -> Option<&AccountRun> {
        self.runs.get(account)
    }

    pub fn account_runs(&self) -> &BTreeMap<AccountId, AccountRun> {
        &self.runs
    }

    pub fn tenants(&self) -> impl Iterator<Item = &TenantId> {
        self.tenant_accounts.keys()
    }

    /// Accounts of `tenant` in physical order.
    pub fn tenant_accounts(&self, tenant: &TenantId) -> &[AccountId] {
        self.tenant_accounts.get(tenant).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn tenant_record_count(&self, tenant: &TenantId) -> u64 {
        self.tenant_accounts(tenant)
            .iter()
            .map(|a| {
                let r = &self.runs[a].records;
                u64::from(r.end - r.start)
            })
            .sum()
    }

    pub fn tenant_page_count(&self, tenant: &TenantId) -> u64 {
        self.tenant_accounts(tenant)
            .iter()
            .map(|a| self.runs[a].page_count())
            .sum()
    }

    pub fn index(&self, field: IndexedField) -> Option<&SecondaryIndex> {
        self.indexes.get(&field)
    }

    /// Data pages a scan restricted to `accounts` touches, in physical order.
    /// `None` means every data page of the table.
    pub fn scan_trace(&self, accounts: Option<&BTreeSet<AccountId>>) -> Vec<PageId> {
        match accounts {
            None => (0..self.data_page_count()).collect(),
            Some(set) => {
                let mut runs: Vec<&AccountRun> = set.iter().filter_map(|a| self.runs.get(a)).collect();
                runs.sort_by_key(|r| r.pages.start);
                runs.into_iter().flat_map(|r| r.pages.clone()).collect()
            }
        }
    }
}

/// Loads `records` into account-clustered pages and returns a cold pool.
pub fn load_corpus(
    records: &[ResourceRecord],
    page_size: u32,
    capacity_pages: usize,
) -> Result<(TableLayout, BufferPool), StorageError> {
    let pool = BufferPool::new(capacity_pages)?;
    Ok((build_layout(records, page_size)?, pool))
}

pub fn build_layout(records: &[ResourceRecord], page_size: u32) -> Result<TableLayout, StorageError> {
    if let Some(r) = records.iter().find(|r| record_footprint(r) > page_size) {
        return Err(StorageError::RecordTooLarge {
            resource_id: r.resource_id,
            footprint: record_footprint(r),
            page_size,
        });
    }
    let mut clustered: Vec<ResourceRecord> = records.to_vec();
    clustered.sort_by(|a, b| (&a.tenant_id, &a.account_id).cmp(&(&b.tenant_id, &b.account_id)));

    let mut pages: Vec<Page> = Vec::new();
    let mut record_page = Vec::with_capacity(clustered.len());
    let mut runs: BTreeMap<AccountId, AccountRun> = BTreeMap::new();
    let mut tenant_accounts: BTreeMap<TenantId, Vec<AccountId>> = BTreeMap::new();

    let mut pos = 0usize;
    while pos < clustered.len() {
        let account = clustered[pos].account_id.clone();
        let tenant = clustered[pos].tenant_id.clone();
        let first_page = pages.len() as PageId;
        let first_record = pos as u32;
        let mut current: Option<Page> = None;
        while pos < clustered.len() && clustered[pos].account_id == account {
            let footprint = record_footprint(&clustered[pos]);
            let fits = current.as_ref().is_some_and(|p| p.bytes_used + footprint <= page_size);
            if !fits {
                if let Some(full) = current.take() {
                    pages.push(full);
                }
                current = Some(Page {
                    id: pages.len() as PageId,
                    slots: Vec::new(),
                    bytes_used: 0,
                });
            }
            let page = current.as_mut().expect("page opened above");
            page.slots.push(pos as u32);
            page.bytes_used += footprint;
            record_page.push(page.id);
            pos += 1;
        }
        pages.extend(current);
        tenant_accounts.entry(tenant.clone()).or_default().push(account.clone());
        runs.insert(
            account,
            AccountRun {
                tenant_id: tenant,
                pages: first_page..pages.len() as PageId,
                records: first_record..pos as u32,
            },
        );
    }

    let entries_per_page = (page_size / INDEX_ENTRY_BYTES).max(1) as usize;
    let mut next_page = pages.len() as PageId;
    let mut indexes = BTreeMap::new();
    for field in IndexedField::ALL {
        let mut entries: Vec<(TenantId, IndexKey, u32)> = clustered
            .iter()
            .enumerate()
            .map(|(i, r)| (r.tenant_id.clone(), field.key_of(r), i as u32))
            .collect();
        entries.sort();
        let index = SecondaryIndex {
            field,
            root: next_page,
            first_leaf: next_page + 1,
            entries_per_page,
            entries,
        };
        next_page += index.page_count();
        indexes.insert(field, index);
    }

    Ok(TableLayout {
        page_size,
        records: clustered,
        record_page,
        pages,
        runs,
        tenant_accounts,
        indexes,
    })
}

/// Simulated time charged per page access.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostModel {
    pub hit_cost: u64,
    pub miss_cost: u64,
}

impl Default for CostModel {
    /// Microsecond units, 25:1 miss:hit.
    fn default() -> Self {
        Self {
            hit_cost: 40,
            miss_cost: 1_000,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<(), StorageError> {
        if self.hit_cost == 0 || self.miss_cost == 0 {
            return Err(StorageError::InvalidCostModel("costs must be positive".into()));
        }
        if self.miss_cost <= self.hit_cost {
            return Err(StorageError::InvalidCostModel("miss_cost must exceed hit_cost".into()));
        }
        Ok(())
    }

    pub fn time(&self, shared_hits: u64, disk_reads: u64) -> u64 {
        shared_hits * self.hit_cost + disk_reads * self.miss_cost
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Access {
    Hit,
    Miss { evicted: Option<PageId> },
}

impl Access {
    pub fn is_hit(self) -> bool {
        matches!(self, Access::Hit)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PoolCounters {
    pub shared_hits: u64,
    pub disk_reads: u64,
    pub evictions: u64,
}

/// Fixed-capacity page cache with least-recently-used eviction.
#[derive(Clone, Debug)]
pub struct BufferPool {
    capacity: usize,
    clock: u64,
    stamp_of: HashMap<PageId, u64>,
    by_stamp: BTreeMap<u64, PageId>,
    counters: PoolCounters,
}

impl BufferPool {
    pub fn new(capacity_pages: usize) -> Result<Self, StorageError> {
        if capacity_pages == 0 {
            return Err(StorageError::ZeroCapacity);
        }
        Ok(Self {
            capacity: capacity_pages,
            clock: 0,
            stamp_of: HashMap::new(),
            by_stamp: BTreeMap::new(),
            counters: PoolCounters::default(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn resident_count(&self) -> usize {
        self.stamp_of.len()
    }

    pub fn is_resident(&self, page: PageId) -> bool {
        self.stamp_of.contains_key(&page)
    }

    /// Cumulative counters since construction.
    pub fn counters(&self) -> PoolCounters {
        self.counters
    }

    pub fn access(&mut self, page: PageId) -> Access {
        self.clock += 1;
        let stamp = self.clock;
        if let Some(old) = self.stamp_of.insert(page, stamp) {
            self.by_stamp.remove(&old);
            self.by_stamp.insert(stamp, page);
            self.counters.shared_hits += 1;
            return Access::Hit;
        }
        self.by_stamp.insert(stamp, page);
        self.counters.disk_reads += 1;
        let evicted = if self.stamp_of.len() > self.capacity {
            let (_, victim) = self.by_stamp.pop_first().expect("over capacity implies nonempty");
            self.stamp_of.remove(&victim);
            self.counters.evictions += 1;
            Some(victim)
        } else {
            None
        };
        Access::Miss { evicted }
    }

    /// Drops every resident page; cumulative counters are kept.
    pub fn evict_all(&mut self) {
        self.stamp_of.clear();
        self.by_stamp.clear();
    }
}

/// The single synchronized access point to a [`BufferPool`].
#[derive(Debug)]
pub struct SharedBufferPool {
    inner: Mutex<BufferPool>,
}

impl SharedBufferPool {
    pub fn new(pool: BufferPool) -> Self {
        Self {
            inner: Mutex::new(pool),
        }
    }

    pub fn access(&self, page: PageId) -> Access {
        self.inner.lock().access(page)
    }

    pub fn evict_all(&self) {
        self.inner.lock().evict_all();
    }

    pub fn counters(&self) -> PoolCounters {
        self.inner.lock().counters()
    }

    pub fn resident_count(&self) -> usize {
        self.inner.lock().resident_count()
    }

    pub fn capacity(&self) -> usize {
        self.inner.lock().capacity()
    }

    pub fn with<R>(&self, f: impl FnOnce(&mut BufferPool) -> R) -> R {
        f(&mut self.inner.lock())
    }
}

impl From<BufferPool> for SharedBufferPool {
    fn from(pool: BufferPool) -> Self {
        Self::new(pool)
    }
}

/// Per-execution accounting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ExecutionStats {
    pub pages_touched: u64,
    pub shared_hits: u64,
    pub disk_reads: u64,
    pub simulated_time: u64,
    pub rows_returned: u64,
    pub rows_examined: u64,
}

impl ExecutionStats {
    pub fn record(&mut self, access: Access, cost: &CostModel) {
        self.pages_touched += 1;
        if access.is_hit() {
            self.shared_hits += 1;
            self.simulated_time += cost.hit_cost;
        } else {
            self.disk_reads += 1;
            self.simulated_time += cost.miss_cost;
        }
    }

    pub fn merge(&mut self, other: &ExecutionStats) {
        self.pages_touched += other.pages_touched;
        self.shared_hits += other.shared_hits;
        self.disk_reads += other.disk_reads;
        self.simulated_time += other.simulated_time;
        self.rows_returned += other.rows_returned;
        self.rows_examined += other.rows_examined;
    }
}

/// Replays a page trace against the pool.
pub fn replay(pool: &SharedBufferPool, cost: &CostModel, trace: &[PageId]) -> ExecutionStats {
    let mut stats = ExecutionStats::default();
    pool.with(|p| {
        for &page in trace {
            stats.record(p.access(page), cost);
        }
    });
    stats
}

/// Sequential scan over the runs of `account_filter` (or the whole table),
/// returning positions of live records accepted by `predicate`.
pub fn scan(
    layout: &TableLayout,
    pool: &SharedBufferPool,
    cost: &CostModel,
    account_filter: Option<&BTreeSet<AccountId>>,
    predicate: impl Fn(&ResourceRecord) -> bool,
) -> (Vec<u32>, ExecutionStats) {
    let trace = layout.scan_trace(account_filter);
    let mut stats = ExecutionStats::default();
    let mut out = Vec::new();
    pool.with(|p| {
        for &page_id in &trace {
            stats.record(p.access(page_id), cost);
            for &pos in &layout.pages[page_id as usize].slots {
                let r = layout.record(pos);
                stats.rows_examined += 1;
                if !r.is_deleted && predicate(r) {
                    out.push(pos);
                }
            }
        }
    });
    stats.rows_returned = out.len() as u64;
    (out, stats)
}

/// Page trace and candidate positions of an index-driven access: index pages
/// first, then one data-page access per index entry.
pub fn index_trace(
    layout: &TableLayout,
    field: IndexedField,
    tenant: &TenantId,
    lookup: &IndexLookup,
) -> Result<(Vec<PageId>, Vec<u32>), StorageError> {
    let index = layout.index(field).ok_or(StorageError::NoIndex(field.name()))?;
    let mut trace = Vec::new();
    let positions = index.lookup(tenant, lookup, &mut trace);
    trace.extend(positions.iter().map(|&pos| layout.page_of(pos)));
    Ok((trace, positions))
}

/// Index scan: resolves `lookup` through the index on `field`, then fetches
/// each entry's data page individually and re-checks `predicate`.
pub fn index_scan(
    layout: &TableLayout,
    pool: &SharedBufferPool,
    cost: &CostModel,
    field: IndexedField,
    tenant: &TenantId,
    lookup: &IndexLookup,
    predicate: impl Fn(&ResourceRecord) -> bool,
) -> Result<(Vec<u32>, ExecutionStats), StorageError> {
    let (trace, positions) = index_trace(layout, field, tenant, lookup)?;
    let mut stats = replay(pool, cost, &trace);
    stats.rows_examined = positions.len() as u64;
    let out: Vec<u32> = positions
        .into_iter()
        .filter(|&pos| {
            let r = layout.record(pos);
            !r.is_deleted && predicate(r)
        })
        .collect();
    stats.rows_returned = out.len() as u64;
    Ok((out, stats))
}

pub fn evict_all(pool: &SharedBufferPool) {
    pool.evict_all();
}
