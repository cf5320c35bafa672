//! Query representation, predicate injection, planning and execution.

mod plan;
mod text;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{AccountId, ResourceRecord, TenantId, Tick};

pub(crate) use plan::index_lookup;
pub use plan::{brute_force, execute, explain, explain_with_path, prepare, AccessPath, PreparedExecution, QueryPlan};
pub use text::parse_query;

pub use crate::storage::ExecutionStats;

pub const DEFAULT_PAGE_SIZE_ROWS: u32 = 100;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QueryError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("partition value set is empty")]
    EmptyValueSet,
    #[error("query already constrains partition key `{0}`")]
    AlreadyConstrained(&'static str),
    #[error("unsupported access path: {0}")]
    UnsupportedPath(String),
    #[error(transparent)]
    Storage(#[from] crate::storage::StorageError),
}

/// Schema fields a filter may reference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Field {
    AccountId,
    /// Composite `account_id/region` key.
    AccountRegion,
    Region,
    Service,
    ResourceType,
    UpdatedAt,
}

impl Field {
    pub const ALL: [Field; 6] = [
        Field::AccountId,
        Field::AccountRegion,
        Field::Region,
        Field::Service,
        Field::ResourceType,
        Field::UpdatedAt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::AccountId => "account_id",
            Field::AccountRegion => "account_region",
            Field::Region => "region",
            Field::Service => "service",
            Field::ResourceType => "resource_type",
            Field::UpdatedAt => "updated_at",
        }
    }

    pub fn is_partition_key(self) -> bool {
        matches!(self, Field::AccountId | Field::AccountRegion)
    }

    fn string_value(self, r: &ResourceRecord) -> Option<&str> {
        match self {
            Field::AccountId => Some(r.account_id.as_str()),
            Field::Region => Some(&r.region),
            Field::Service => Some(r.service.as_str()),
            Field::ResourceType => Some(&r.resource_type),
            Field::AccountRegion | Field::UpdatedAt => None,
        }
    }

    fn matches_value(self, r: &ResourceRecord, value: &str) -> bool {
        match self {
            Field::AccountRegion => value
                .rsplit_once('/')
                .is_some_and(|(a, reg)| a == r.account_id.as_str() && reg == r.region),
            other => other.string_value(r) == Some(value),
        }
    }
}

impl FromStr for Field {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Field::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| QueryError::Parse(format!("unknown field {s:?}")))
    }
}

/// One conjunct of a predicate.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Filter {
    Eq { field: Field, value: String },
    In { field: Field, values: BTreeSet<String> },
    UpdatedAtLeast(Tick),
    UpdatedBefore(Tick),
}

impl Filter {
    pub fn field(&self) -> Field {
        match self {
            Filter::Eq { field, .. } | Filter::In { field, .. } => *field,
            Filter::UpdatedAtLeast(_) | Filter::UpdatedBefore(_) => Field::UpdatedAt,
        }
    }

    pub fn matches(&self, r: &ResourceRecord) -> bool {
        match self {
            Filter::Eq { field, value } => field.matches_value(r, value),
            Filter::In {
                field: Field::AccountRegion,
                values,
            } => values.contains(&format!("{}/{}", r.account_id, r.region)),
            Filter::In { field, values } => field.string_value(r).is_some_and(|v| values.contains(v)),
            Filter::UpdatedAtLeast(t) => r.updated_at >= *t,
            Filter::UpdatedBefore(t) => r.updated_at < *t,
        }
    }
}

/// Conjunction of filters; the empty conjunction matches everything.
pub fn matches_all(filters: &[Filter], r: &ResourceRecord) -> bool {
    filters.iter().all(|f| f.matches(r))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QueryClass {
    Search,
    Recency,
    Join,
    Service,
    Adhoc,
}

impl QueryClass {
    pub const ALL: [QueryClass; 5] = [
        QueryClass::Search,
        QueryClass::Recency,
        QueryClass::Join,
        QueryClass::Service,
        QueryClass::Adhoc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryClass::Search => "search",
            QueryClass::Recency => "recency",
            QueryClass::Join => "join",
            QueryClass::Service => "service",
            QueryClass::Adhoc => "adhoc",
        }
    }
}

impl fmt::Display for QueryClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryClass {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QueryClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| QueryError::Parse(format!("unknown query class {s:?}")))
    }
}

/// A tenant-scoped query: a conjunction of filters, optionally self-joined
/// on `account_id` against a second conjunction.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Query {
    pub tenant: TenantId,
    pub filters: Vec<Filter>,
    /// Right-hand filters of an account-local self join.
    pub join: Option<Vec<Filter>>,
    pub page_size_rows: u32,
    pub class: QueryClass,
}

impl Query {
    pub fn new(tenant: impl Into<TenantId>) -> Self {
        Self {
            tenant: tenant.into(),
            filters: Vec::new(),
            join: None,
            page_size_rows: DEFAULT_PAGE_SIZE_ROWS,
            class: QueryClass::Adhoc,
        }
    }

    pub fn with_filter(mut self, filter: Filter) -> Self {
        self.filters.push(filter);
        self
    }

    pub fn with_join(mut self, right: Vec<Filter>) -> Self {
        self.join = Some(right);
        self
    }

    pub fn with_class(mut self, class: QueryClass) -> Self {
        self.class = class;
        self
    }

    pub fn constrains(&self, field: Field) -> bool {
        self.filters.iter().any(|f| f.field() == field)
    }

    pub fn constrains_partition_key(&self) -> bool {
        self.filters.iter().any(|f| f.field().is_partition_key())
    }

    /// Services named by equality or membership filters on `service`.
    pub fn referenced_services(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        for f in &self.filters {
            match f {
                Filter::Eq {
                    field: Field::Service,
                    value,
                } => {
                    out.insert(value.as_str());
                }
                Filter::In {
                    field: Field::Service,
                    values,
                } => {
                    out.extend(values.iter().map(String::as_str));
                }
                _ => {}
            }
        }
        out
    }

    /// Stable 64-bit signature of the query with partition filters removed.
    pub fn signature(&self) -> u64 {
        let mut stripped = self.clone();
        stripped.filters.retain(|f| !f.field().is_partition_key());
        let digest = Sha256::digest(stripped.to_string().as_bytes());
        u64::from_be_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
    }
}

/// Which field serves as the dynamic partition key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum KeyField {
    #[default]
    Account,
    /// Composite of account and region.
    AccountRegion,
}

impl KeyField {
    pub fn field(self) -> Field {
        match self {
            KeyField::Account => Field::AccountId,
            KeyField::AccountRegion => Field::AccountRegion,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            KeyField::Account => 0,
            KeyField::AccountRegion => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(KeyField::Account),
            1 => Some(KeyField::AccountRegion),
            _ => None,
        }
    }
}

impl FromStr for KeyField {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "account" | "account_id" => Ok(KeyField::Account),
            "account+region" | "account_region" => Ok(KeyField::AccountRegion),
            other => Err(format!("unknown key field {other:?}")),
        }
    }
}

impl fmt::Display for KeyField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KeyField::Account => "account",
            KeyField::AccountRegion => "account+region",
        })
    }
}

/// One value of the partition key: an account, or an account/region pair.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PartitionValue {
    pub account: AccountId,
    pub region: Option<String>,
}

impl PartitionValue {
    pub fn account(account: AccountId) -> Self {
        Self { account, region: None }
    }

    pub fn account_region(account: AccountId, region: String) -> Self {
        Self {
            account,
            region: Some(region),
        }
    }
}

impl fmt::Display for PartitionValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.region {
            None => write!(f, "{}", self.account),
            Some(r) => write!(f, "{}/{}", self.account, r),
        }
    }
}

/// Returns `query ∧ key ∈ values`; the input query is left untouched.
pub fn augment(query: &Query, key: KeyField, values: &BTreeSet<PartitionValue>) -> Result<Query, QueryError> {
    if values.is_empty() {
        return Err(QueryError::EmptyValueSet);
    }
    if query.constrains_partition_key() {
        return Err(QueryError::AlreadyConstrained(key.field().name()));
    }
    let mut out = query.clone();
    out.filters.push(Filter::In {
        field: key.field(),
        values: values.iter().map(ToString::to_string).collect(),
    });
    Ok(out)
}

/// The partition scope a query's key filters restrict it to, if any.
pub(crate) fn partition_scope(query: &Query) -> Option<(KeyField, BTreeSet<PartitionValue>)> {
    let mut scope: Option<(KeyField, BTreeSet<PartitionValue>)> = None;
    for f in &query.filters {
        let (key, raw): (KeyField, Vec<&str>) = match f {
            Filter::Eq {
                field: Field::AccountId,
                value,
            } => (KeyField::Account, vec![value]),
            Filter::In {
                field: Field::AccountId,
                values,
            } => (KeyField::Account, values.iter().map(String::as_str).collect()),
            Filter::Eq {
                field: Field::AccountRegion,
                value,
            } => (KeyField::AccountRegion, vec![value]),
            Filter::In {
                field: Field::AccountRegion,
                values,
            } => (KeyField::AccountRegion, values.iter().map(String::as_str).collect()),
            _ => continue,
        };
        let values: BTreeSet<PartitionValue> = raw
            .into_iter()
            .filter_map(|v| match key {
                KeyField::Account => Some(PartitionValue::account(AccountId::new(v))),
                KeyField::AccountRegion => v
                    .rsplit_once('/')
                    .map(|(a, r)| PartitionValue::account_region(AccountId::new(a), r.to_owned())),
            })
            .collect();
        scope = Some(match scope {
            None => (key, values),
            // several key filters: keep the accounts common to all of them
            Some((k, prev)) => {
                let keep: BTreeSet<&AccountId> = values.iter().map(|v| &v.account).collect();
                (k, prev.into_iter().filter(|v| keep.contains(&v.account)).collect())
            }
        });
    }
    scope
}

/// One result row: a record, or a pair produced by the account self join.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Row {
    Record(u64),
    Pair(u64, u64),
}
