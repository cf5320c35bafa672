//! Cached per-account statistics behind every heuristic.
//!
//! A [`Snapshot`] is immutable; [`MetadataCache`] swaps in a freshly built one
//! on refresh. Refreshes rebuild from the full corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;
use std::sync::Arc;

use crate::corpus::{AccountId, ResourceRecord, Service, TenantId, Tick};
use crate::query::{KeyField, PartitionValue};

/// Fifteen simulated minutes at one tick per second.
pub const DEFAULT_REFRESH_INTERVAL: Tick = 900;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccountStats {
    pub account_id: AccountId,
    pub tenant_id: TenantId,
    pub active_count: u64,
    pub deleted_count: u64,
    pub last_updated_at: Tick,
    /// Active resources per service.
    pub per_service_counts: BTreeMap<Service, u64>,
    /// (active, deleted) per region.
    pub per_region_counts: BTreeMap<String, (u64, u64)>,
    pub as_of: Tick,
}

impl AccountStats {
    pub fn total(&self) -> u64 {
        self.active_count + self.deleted_count
    }

    /// Active fraction; 1.0 for an empty account.
    pub fn active_ratio(&self) -> f64 {
        ratio(self.active_count, self.deleted_count)
    }
}

pub(crate) fn ratio(active: u64, deleted: u64) -> f64 {
    if active + deleted == 0 {
        1.0
    } else {
        active as f64 / (active + deleted) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TenantStats {
    pub accounts: Vec<AccountId>,
    pub distinct_regions: u64,
    pub distinct_services: u64,
    pub distinct_resource_types: u64,
    pub min_updated_at: Tick,
    pub max_updated_at: Tick,
    /// Snapshot time at which the tenant first appeared.
    pub first_seen: Tick,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Snapshot {
    pub as_of: Tick,
    pub accounts: BTreeMap<AccountId, AccountStats>,
    pub tenants: BTreeMap<TenantId, TenantStats>,
}

impl Snapshot {
    pub fn build(records: &[ResourceRecord], now: Tick, previous: Option<&Snapshot>) -> Self {
        let mut accounts: BTreeMap<AccountId, AccountStats> = BTreeMap::new();
        let mut regions: BTreeMap<&TenantId, BTreeSet<&str>> = BTreeMap::new();
        let mut services: BTreeMap<&TenantId, BTreeSet<Service>> = BTreeMap::new();
        let mut types: BTreeMap<&TenantId, BTreeSet<&str>> = BTreeMap::new();
        let mut ticks: BTreeMap<&TenantId, (Tick, Tick)> = BTreeMap::new();

        for r in records {
            let stats = accounts.entry(r.account_id.clone()).or_insert_with(|| AccountStats {
                account_id: r.account_id.clone(),
                tenant_id: r.tenant_id.clone(),
                active_count: 0,
                deleted_count: 0,
                last_updated_at: 0,
                per_service_counts: BTreeMap::new(),
                per_region_counts: BTreeMap::new(),
                as_of: now,
            });
            stats.last_updated_at = stats.last_updated_at.max(r.updated_at);
            let region = stats.per_region_counts.entry(r.region.clone()).or_default();
            if r.is_deleted {
                stats.deleted_count += 1;
                region.1 += 1;
            } else {
                stats.active_count += 1;
                region.0 += 1;
                *stats.per_service_counts.entry(r.service).or_default() += 1;
            }
            regions.entry(&r.tenant_id).or_default().insert(&r.region);
            services.entry(&r.tenant_id).or_default().insert(r.service);
            types.entry(&r.tenant_id).or_default().insert(&r.resource_type);
            let span = ticks.entry(&r.tenant_id).or_insert((r.updated_at, r.updated_at));
            span.0 = span.0.min(r.updated_at);
            span.1 = span.1.max(r.updated_at);
        }

        let mut tenants: BTreeMap<TenantId, TenantStats> = BTreeMap::new();
        for stats in accounts.values() {
            let t = &stats.tenant_id;
            let entry = tenants.entry(t.clone()).or_insert_with(|| TenantStats {
                accounts: Vec::new(),
                distinct_regions: regions[t].len() as u64,
                distinct_services: services[t].len() as u64,
                distinct_resource_types: types[t].len() as u64,
                min_updated_at: ticks[t].0,
                max_updated_at: ticks[t].1,
                first_seen: previous
                    .and_then(|p| p.tenants.get(t))
                    .map_or(now, |prev| prev.first_seen),
            });
            entry.accounts.push(stats.account_id.clone());
        }
        Self {
            as_of: now,
            accounts,
            tenants,
        }
    }

    pub fn tenant(&self, tenant: &TenantId) -> Option<&TenantStats> {
        self.tenants.get(tenant)
    }

    pub fn account(&self, account: &AccountId) -> Option<&AccountStats> {
        self.accounts.get(account)
    }

    /// Ticks of metadata history accumulated for `tenant`.
    pub fn history(&self, tenant: &TenantId) -> Tick {
        self.tenant(tenant)
            .map_or(0, |t| self.as_of.saturating_sub(t.first_seen))
    }

    /// Sorted partition-key universe of `tenant`.
    pub fn universe(&self, tenant: &TenantId, key: KeyField) -> Vec<PartitionValue> {
        let Some(t) = self.tenant(tenant) else {
            return Vec::new();
        };
        match key {
            KeyField::Account => t.accounts.iter().cloned().map(PartitionValue::account).collect(),
            KeyField::AccountRegion => t
                .accounts
                .iter()
                .flat_map(|a| {
                    self.accounts[a]
                        .per_region_counts
                        .keys()
                        .map(move |r| PartitionValue::account_region(a.clone(), r.clone()))
                })
                .collect(),
        }
    }

    /// (active, deleted) rows behind one partition value.
    pub fn value_counts(&self, value: &PartitionValue) -> (u64, u64) {
        let Some(a) = self.accounts.get(&value.account) else {
            return (0, 0);
        };
        match &value.region {
            None => (a.active_count, a.deleted_count),
            Some(r) => a.per_region_counts.get(r).copied().unwrap_or((0, 0)),
        }
    }

    /// Line-delimited dump for debugging, one account per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for a in self.accounts.values() {
            let services = a
                .per_service_counts
                .iter()
                .map(|(s, c)| format!("{s}={c}"))
                .collect::<Vec<_>>()
                .join(",");
            let _ = writeln!(
                out,
                "{}\t{}\tactive={}\tdeleted={}\tlast_updated={}\tservices={}\tas_of={}",
                a.tenant_id, a.account_id, a.active_count, a.deleted_count, a.last_updated_at, services, a.as_of
            );
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct MetadataCache {
    snapshot: Arc<Snapshot>,
    refresh_interval: Tick,
    last_refresh: Option<Tick>,
}

impl MetadataCache {
    /// An empty cache that has never been refreshed.
    pub fn new(refresh_interval: Tick) -> Self {
        Self {
            snapshot: Arc::new(Snapshot::default()),
            refresh_interval,
            last_refresh: None,
        }
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        Arc::clone(&self.snapshot)
    }

    pub fn refresh_interval(&self) -> Tick {
        self.refresh_interval
    }

    pub fn last_refresh(&self) -> Option<Tick> {
        self.last_refresh
    }

    /// Rebuilds the snapshot from `records` as of `now`.
    pub fn refresh(&self, records: &[ResourceRecord], now: Tick) -> Self {
        Self {
            snapshot: Arc::new(Snapshot::build(records, now, Some(&self.snapshot))),
            refresh_interval: self.refresh_interval,
            last_refresh: Some(now),
        }
    }

    /// Refreshes iff `now - last_refresh >= refresh_interval` (or never refreshed).
    pub fn maybe_refresh(&self, records: &[ResourceRecord], now: Tick) -> Self {
        match self.last_refresh {
            Some(last) if now.saturating_sub(last) < self.refresh_interval => self.clone(),
            _ => self.refresh(records, now),
        }
    }

    pub fn staleness(&self, now: Tick) -> Option<Tick> {
        self.last_refresh.map(|last| now.saturating_sub(last))
    }
}
