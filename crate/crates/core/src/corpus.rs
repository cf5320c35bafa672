//! Resource data model and deterministic synthetic multi-tenant corpora.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Zipf;
use thiserror::Error;

use crate::config::{invalid, ConfigError, KvConfig};

/// Simulation clock unit. One tick is one simulated second.
pub type Tick = u64;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(Arc<str>);

        impl $name {
            pub fn new(id: impl AsRef<str>) -> Self {
                Self(Arc::from(id.as_ref()))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({:?})", stringify!($name), &*self.0)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self::new(s)
            }
        }
    };
}

string_id!(
    /// Opaque tenant identifier.
    TenantId
);
string_id!(
    /// Opaque cloud account identifier; the primary dynamic partition key.
    AccountId
);

/// Cloud service / API tag a resource belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Service {
    Ec2,
    S3,
    Rds,
    Lambda,
    Iam,
    Vpc,
    Eks,
    Kms,
}

impl Service {
    pub const ALL: [Service; 8] = [
        Service::Ec2,
        Service::S3,
        Service::Rds,
        Service::Lambda,
        Service::Iam,
        Service::Vpc,
        Service::Eks,
        Service::Kms,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Service::Ec2 => "ec2",
            Service::S3 => "s3",
            Service::Rds => "rds",
            Service::Lambda => "lambda",
            Service::Iam => "iam",
            Service::Vpc => "vpc",
            Service::Eks => "eks",
            Service::Kms => "kms",
        }
    }

    /// Resource types a service produces.
    pub fn resource_types(self) -> &'static [&'static str] {
        match self {
            Service::Ec2 => &["instance", "volume", "security_group", "snapshot"],
            Service::S3 => &["bucket"],
            Service::Rds => &["db_instance", "db_snapshot"],
            Service::Lambda => &["function"],
            Service::Iam => &["role", "user", "policy"],
            Service::Vpc => &["vpc", "subnet", "route_table"],
            Service::Eks => &["cluster", "nodegroup"],
            Service::Kms => &["key"],
        }
    }
}

impl fmt::Display for Service {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Service {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Service::ALL
            .into_iter()
            .find(|svc| svc.as_str() == s)
            .ok_or_else(|| format!("unknown service {s:?}"))
    }
}

/// Regions the generator draws from, with their default weights.
pub const REGIONS: [(&str, f64); 4] = [
    ("us-east-1", 0.4),
    ("us-west-2", 0.3),
    ("eu-west-1", 0.2),
    ("ap-southeast-1", 0.1),
];

/// One cloud resource row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResourceRecord {
    pub resource_id: u64,
    pub tenant_id: TenantId,
    pub account_id: AccountId,
    pub region: String,
    pub service: Service,
    pub resource_type: String,
    pub is_deleted: bool,
    pub updated_at: Tick,
    pub payload_bytes: u32,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("invalid corpus spec: {field}: {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Distribution of a count (accounts per tenant, resources per account).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SizeDist {
    Fixed(u64),
    /// Zipf over `1..=max` with the given exponent.
    Zipf {
        max: u64,
        exponent: f64,
    },
}

impl SizeDist {
    fn validate(&self, field: &'static str) -> Result<(), CorpusError> {
        if let SizeDist::Zipf { max, exponent } = *self {
            if max == 0 {
                return Err(CorpusError::InvalidSpec {
                    field,
                    reason: "zipf max must be >= 1".into(),
                });
            }
            if !exponent.is_finite() || exponent < 0.0 {
                return Err(CorpusError::InvalidSpec {
                    field,
                    reason: format!("zipf exponent must be finite and >= 0, got {exponent}"),
                });
            }
        }
        Ok(())
    }

    fn sampler(&self) -> Sampler {
        match *self {
            SizeDist::Fixed(n) => Sampler::Fixed(n),
            SizeDist::Zipf { max, exponent } => {
                Sampler::Zipf(Zipf::new(max, exponent).expect("validated zipf parameters"))
            }
        }
    }
}

enum Sampler {
    Fixed(u64),
    Zipf(Zipf<f64>),
}

impl Sampler {
    fn sample(&self, rng: &mut impl Rng) -> u64 {
        match self {
            Sampler::Fixed(n) => *n,
            Sampler::Zipf(z) => z.sample(rng) as u64,
        }
    }
}

impl fmt::Display for SizeDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SizeDist::Fixed(n) => write!(f, "fixed:{n}"),
            SizeDist::Zipf { max, exponent } => write!(f, "zipf:{max}:{exponent}"),
        }
    }
}

impl FromStr for SizeDist {
    type Err = String;

    /// `fixed:N` or `zipf:MAX:EXPONENT`; a bare integer means fixed.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |p: &str| p.parse::<u64>().map_err(|e| format!("{p:?}: {e}"));
        match parts.as_slice() {
            [n] => Ok(SizeDist::Fixed(num(n)?)),
            ["fixed", n] => Ok(SizeDist::Fixed(num(n)?)),
            ["zipf", max, exp] => Ok(SizeDist::Zipf {
                max: num(max)?,
                exponent: exp.parse().map_err(|e| format!("{exp:?}: {e}"))?,
            }),
            _ => Err(format!("expected fixed:N or zipf:MAX:EXP, got {s:?}")),
        }
    }
}

/// Parameters of a synthetic corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSpec {
    pub seed: u64,
    pub tenants: u32,
    pub accounts_per_tenant: SizeDist,
    pub resources_per_account: SizeDist,
    /// Each account samples its deleted fraction uniformly from this interval.
    pub deleted_ratio_range: (f64, f64),
    /// Fraction of accounts whose resources were updated recently.
    pub recency_skew: f64,
    pub service_mix: Vec<(Service, f64)>,
    /// Probability that an account has no resources of a given service.
    pub service_dropout: f64,
    /// Last tick of the generation window.
    pub horizon: Tick,
    pub payload_sizes: Vec<u32>,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            tenants: 1,
            accounts_per_tenant: SizeDist::Fixed(100),
            resources_per_account: SizeDist::Fixed(1_000),
            deleted_ratio_range: (0.0, 0.5),
            recency_skew: 0.2,
            service_mix: default_service_mix(),
            service_dropout: 0.3,
            horizon: 7 * 86_400,
            payload_sizes: vec![64, 256, 1024],
        }
    }
}

pub fn default_service_mix() -> Vec<(Service, f64)> {
    vec![
        (Service::Ec2, 0.30),
        (Service::S3, 0.10),
        (Service::Rds, 0.08),
        (Service::Lambda, 0.12),
        (Service::Iam, 0.15),
        (Service::Vpc, 0.15),
        (Service::Eks, 0.04),
        (Service::Kms, 0.06),
    ]
}

const SPEC_KEYS: &[&str] = &[
    "seed",
    "tenants",
    "accounts_per_tenant",
    "resources_per_account",
    "deleted_ratio_min",
    "deleted_ratio_max",
    "recency_skew",
    "service_mix",
    "service_dropout",
    "horizon",
    "payload_sizes",
];

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        self.accounts_per_tenant.validate("accounts_per_tenant")?;
        self.resources_per_account.validate("resources_per_account")?;
        let (lo, hi) = self.deleted_ratio_range;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(CorpusError::InvalidSpec {
                field: "deleted_ratio_range",
                reason: format!("need 0 <= min <= max <= 1, got [{lo}, {hi}]"),
            });
        }
        for (field, p) in [
            ("recency_skew", self.recency_skew),
            ("service_dropout", self.service_dropout),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(CorpusError::InvalidSpec {
                    field,
                    reason: format!("probability out of range: {p}"),
                });
            }
        }
        if self.service_mix.is_empty()
            || self.service_mix.iter().any(|(_, w)| !w.is_finite() || *w < 0.0)
            || self.service_mix.iter().all(|(_, w)| *w == 0.0)
        {
            return Err(CorpusError::InvalidSpec {
                field: "service_mix",
                reason: "weights must be finite, nonnegative and not all zero".into(),
            });
        }
        if self.payload_sizes.is_empty() || self.payload_sizes.contains(&0) {
            return Err(CorpusError::InvalidSpec {
                field: "payload_sizes",
                reason: "need at least one positive size".into(),
            });
        }
        if self.horizon == 0 {
            return Err(CorpusError::InvalidSpec {
                field: "horizon",
                reason: "must be >= 1".into(),
            });
        }
        Ok(())
    }

    /// Reads keys under `prefix` (e.g. `"corpus."`) on top of the defaults.
    pub fn from_kv(cfg: &KvConfig, prefix: &str) -> Result<Self, CorpusError> {
        cfg.check_known(prefix, SPEC_KEYS)?;
        let mut spec = Self::default();
        let key = |k: &str| format!("{prefix}{k}");
        cfg.read(&key("seed"), &mut spec.seed)?;
        cfg.read(&key("tenants"), &mut spec.tenants)?;
        cfg.read(&key("accounts_per_tenant"), &mut spec.accounts_per_tenant)?;
        cfg.read(&key("resources_per_account"), &mut spec.resources_per_account)?;
        cfg.read(&key("deleted_ratio_min"), &mut spec.deleted_ratio_range.0)?;
        cfg.read(&key("deleted_ratio_max"), &mut spec.deleted_ratio_range.1)?;
        cfg.read(&key("recency_skew"), &mut spec.recency_skew)?;
        cfg.read(&key("service_dropout"), &mut spec.service_dropout)?;
        cfg.read(&key("horizon"), &mut spec.horizon)?;
        if let Some(raw) = cfg.get(&key("service_mix")) {
            spec.service_mix = parse_service_mix(raw).map_err(|r| invalid(&key("service_mix"), raw, &r))?;
        }
        if let Some(raw) = cfg.get(&key("payload_sizes")) {
            spec.payload_sizes = raw
                .split(',')
                .map(|p| p.trim().parse::<u32>())
                .collect::<Result<_, _>>()
                .map_err(|e| invalid(&key("payload_sizes"), raw, &e.to_string()))?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_kv(&self, prefix: &str) -> KvConfig {
        let mut cfg = KvConfig::new();
        let key = |k: &str| format!("{prefix}{k}");
        cfg.set(key("seed"), self.seed);
        cfg.set(key("tenants"), self.tenants);
        cfg.set(key("accounts_per_tenant"), self.accounts_per_tenant);
        cfg.set(key("resources_per_account"), self.resources_per_account);
        cfg.set(key("deleted_ratio_min"), self.deleted_ratio_range.0);
        cfg.set(key("deleted_ratio_max"), self.deleted_ratio_range.1);
        cfg.set(key("recency_skew"), self.recency_skew);
        cfg.set(
            key("service_mix"),
            self.service_mix
                .iter()
                .map(|(s, w)| format!("{s}:{w}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        cfg.set(key("service_dropout"), self.service_dropout);
        cfg.set(key("horizon"), self.horizon);
        cfg.set(
            key("payload_sizes"),
            self.payload_sizes
                .iter()
                .map(u32::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        cfg
    }
}

fn parse_service_mix(raw: &str) -> Result<Vec<(Service, f64)>, String> {
    raw.split(',')
        .map(|item| {
            let (svc, w) = item
                .trim()
                .split_once(':')
                .ok_or_else(|| format!("expected service:weight, got {item:?}"))?;
            Ok((svc.parse()?, w.parse::<f64>().map_err(|e| e.to_string())?))
        })
        .collect()
}

pub fn tenant_name(t: u32) -> TenantId {
    TenantId::new(format!("t{t:03}"))
}

pub fn account_name(t: u32, a: u64) -> AccountId {
    AccountId::new(format!("t{t:03}-a{a:04}"))
}

/// Generates the corpus described by `spec`. Output is a pure function of the spec.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Vec<ResourceRecord>, CorpusError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let accounts = spec.accounts_per_tenant.sampler();
    let sizes = spec.resources_per_account.sampler();
    let region_index = WeightedIndex::new(REGIONS.iter().map(|(_, w)| *w)).expect("static weights");
    let hot_floor = spec.horizon - spec.horizon / 10;
    let cold_ceiling = spec.horizon * 6 / 10;

    let mut records = Vec::new();
    let mut next_id = 0u64;
    for t in 0..spec.tenants {
        let tenant = tenant_name(t);
        let n_accounts = accounts.sample(&mut rng);
        for a in 0..n_accounts {
            let account = account_name(t, a);
            let count = sizes.sample(&mut rng) as usize;
            let (lo, hi) = spec.deleted_ratio_range;
            let deleted_target = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            let hot = rng.gen_bool(spec.recency_skew);
            let services = account_services(spec, &mut rng);
            let service_index = WeightedIndex::new(services.iter().map(|(_, w)| *w))
                .expect("account keeps at least one weighted service");

            let n_deleted = (deleted_target * count as f64).round() as usize;
            let mut deleted_flags: Vec<bool> = (0..count).map(|i| i < n_deleted).collect();
            deleted_flags.shuffle(&mut rng);

            for is_deleted in deleted_flags {
                let service = services[service_index.sample(&mut rng)].0;
                let types = service.resource_types();
                let updated_at = if hot {
                    rng.gen_range(hot_floor..=spec.horizon)
                } else {
                    rng.gen_range(0..=cold_ceiling)
                };
                records.push(ResourceRecord {
                    resource_id: next_id,
                    tenant_id: tenant.clone(),
                    account_id: account.clone(),
                    region: REGIONS[region_index.sample(&mut rng)].0.to_owned(),
                    service,
                    resource_type: types[rng.gen_range(0..types.len())].to_owned(),
                    is_deleted,
                    updated_at,
                    payload_bytes: *spec.payload_sizes.choose(&mut rng).expect("nonempty"),
                });
                next_id += 1;
            }
        }
    }
    Ok(records)
}

fn account_services(spec: &CorpusSpec, rng: &mut impl Rng) -> Vec<(Service, f64)> {
    let weighted: Vec<(Service, f64)> = spec.service_mix.iter().copied().filter(|(_, w)| *w > 0.0).collect();
    let kept: Vec<(Service, f64)> = weighted
        .iter()
        .copied()
        .filter(|_| !rng.gen_bool(spec.service_dropout))
        .collect();
    if kept.is_empty() {
        vec![weighted[rng.gen_range(0..weighted.len())]]
    } else {
        kept
    }
}

/// Ground-truth per-account summary computed by direct tally.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AccountSummary {
    pub tenant_id: Option<TenantId>,
    pub active: u64,
    pub deleted: u64,
    pub max_updated_at: Tick,
    /// Active resources per service.
    pub per_service: BTreeMap<Service, u64>,
    /// (active, deleted) per region.
    pub per_region: BTreeMap<String, (u64, u64)>,
}

pub fn corpus_stats(records: &[ResourceRecord]) -> BTreeMap<AccountId, AccountSummary> {
    let mut out: BTreeMap<AccountId, AccountSummary> = BTreeMap::new();
    for r in records {
        let s = out.entry(r.account_id.clone()).or_default();
        s.tenant_id.get_or_insert_with(|| r.tenant_id.clone());
        s.max_updated_at = s.max_updated_at.max(r.updated_at);
        let region = s.per_region.entry(r.region.clone()).or_default();
        if r.is_deleted {
            s.deleted += 1;
            region.1 += 1;
        } else {
            s.active += 1;
            region.0 += 1;
            *s.per_service.entry(r.service).or_default() += 1;
        }
    }
    out
}

/// Test helper: marks every record of `account` as updated at `now`.
pub fn touch_account(records: &mut [ResourceRecord], account: &AccountId, now: Tick) -> usize {
    let mut touched = 0;
    for r in records.iter_mut().filter(|r| &r.account_id == account) {
        r.updated_at = now;
        touched += 1;
    }
    touched
}

/// Serializes records one per line, tab separated, in a fixed field order:
/// `resource_id tenant account region service resource_type deleted updated_at payload_bytes`.
pub fn export_records(records: &[ResourceRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 64);
    for r in records {
        use fmt::Write;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.resource_id,
            r.tenant_id,
            r.account_id,
            r.region,
            r.service,
            r.resource_type,
            u8::from(r.is_deleted),
            r.updated_at,
            r.payload_bytes
        );
    }
    out
}

pub fn import_records(text: &str) -> Result<Vec<ResourceRecord>, CorpusError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(idx, line)| parse_record_line(line).map_err(|reason| CorpusError::Parse { line: idx + 1, reason }))
        .collect()
}

fn parse_record_line(line: &str) -> Result<ResourceRecord, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    let [id, tenant, account, region, service, rtype, deleted, updated, payload] = fields[..] else {
        return Err(format!("expected 9 tab-separated fields, got {}", fields.len()));
    };
    let num = |s: &str| s.parse::<u64>().map_err(|e| format!("{s:?}: {e}"));
    let payload_bytes = payload.parse::<u32>().map_err(|e| format!("{payload:?}: {e}"))?;
    if payload_bytes == 0 {
        return Err("payload_bytes must be >= 1".into());
    }
    Ok(ResourceRecord {
        resource_id: num(id)?,
        tenant_id: TenantId::new(tenant),
        account_id: AccountId::new(account),
        region: region.to_owned(),
        service: service.parse()?,
        resource_type: rtype.to_owned(),
        is_deleted: match deleted {
            "0" => false,
            "1" => true,
            other => return Err(format!("deleted flag must be 0 or 1, got {other:?}")),
        },
        updated_at: num(updated)?,
        payload_bytes,
    })
}
