//! The thirteen query templates and the workload description.

use std::fmt;
use std::str::FromStr;

use crate::config::{invalid, ConfigError, KvConfig};
use crate::corpus::{TenantId, Tick};
use crate::query::{parse_query, Query, QueryClass};

/// How requests are executed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Condition {
    /// Full tenant scan, one request per query.
    Unpaginated,
    /// Secondary index on the leading filter; full scan when none applies.
    Index,
    /// Partitioned pages driven by tokens.
    Hssps,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Unpaginated, Condition::Index, Condition::Hssps];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Unpaginated => "unpaginated",
            Condition::Index => "index",
            Condition::Hssps => "hssps",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unpaginated" => Ok(Condition::Unpaginated),
            "index" => Ok(Condition::Index),
            "hssps" | "hsspc" => Ok(Condition::Hssps),
            other => Err(format!("unknown condition `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Template {
    pub name: &'static str,
    pub class: QueryClass,
    /// Expected to match at least half of the tenant's live rows.
    pub high_cardinality: bool,
    body: String,
}

impl Template {
    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn instantiate(&self, tenant: &TenantId) -> Query {
        parse_query(&format!("tenant={tenant}; class={}; {}", self.class, self.body))
            .expect("templates are well formed")
    }
}

/// The fixed template set; recency cut-offs scale with `horizon`.
pub fn templates(horizon: Tick) -> Vec<Template> {
    let t = |name, class, high_cardinality, body: String| Template {
        name,
        class,
        high_cardinality,
        body,
    };
    use QueryClass::*;
    vec![
        t("search_region_multi", Search, true, "region in (us-east-1,us-west-2,eu-west-1)".into()),
        t("search_region_eu", Search, false, "region=eu-west-1".into()),
        t(
            "search_type_broad",
            Search,
            true,
            "resource_type in (instance,volume,security_group,snapshot,role,user,policy,vpc,subnet,route_table,function)"
                .into(),
        ),
        t("search_type_medium", Search, false, "resource_type=function".into()),
        t("search_type_rare", Search, false, "resource_type=cluster".into()),
        t("recency_broad", Recency, true, format!("updated_at>={}", horizon / 20)),
        t("recency_mid", Recency, false, format!("updated_at>={}", horizon / 2)),
        t("recency_narrow", Recency, false, format!("updated_at>={}", horizon - horizon / 20)),
        t("join_instance_volume", Join, false, "resource_type=instance; join.resource_type=volume".into()),
        t("join_function_role", Join, false, "resource_type=function; join.resource_type=role".into()),
        t("join_bucket_key", Join, false, "service=s3; join.service=kms".into()),
        t("service_ec2", Service, false, "service=ec2".into()),
        t("service_eks", Service, false, "service=eks; region in (us-east-1,us-west-2)".into()),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadSpec {
    pub seed: u64,
    pub concurrency: usize,
    /// Issue window in ticks; requests are issued only before it closes.
    pub duration: Tick,
    /// Gap between successive request issues on one stream, in microseconds.
    pub request_interval_us: u64,
    /// Template weights by name; empty means uniform.
    pub mix: Vec<(String, f64)>,
    pub condition: Condition,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            seed: 11,
            concurrency: 8,
            duration: 600,
            request_interval_us: 1_000_000,
            mix: Vec::new(),
            condition: Condition::Hssps,
        }
    }
}

const WORKLOAD_KEYS: &[&str] = &[
    "seed",
    "concurrency",
    "duration",
    "request_interval_ms",
    "mix",
    "condition",
];

impl WorkloadSpec {
    pub fn validate(&self, templates: &[Template]) -> Result<(), String> {
        if self.concurrency == 0 {
            return Err("concurrency must be at least 1".into());
        }
        if self.duration == 0 || self.request_interval_us == 0 {
            return Err("duration and request interval must be positive".into());
        }
        if !self.mix.is_empty() {
            for (name, w) in &self.mix {
                if !templates.iter().any(|t| t.name == name) {
                    return Err(format!("unknown template `{name}`"));
                }
                if !w.is_finite() || *w < 0.0 {
                    return Err(format!("bad weight for `{name}`"));
                }
            }
            let sum: f64 = self.mix.iter().map(|(_, w)| w).sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(format!("mix weights sum to {sum}, not 1"));
            }
        }
        Ok(())
    }

    /// Weight per template, aligned with `templates`.
    pub fn weights(&self, templates: &[Template]) -> Vec<f64> {
        if self.mix.is_empty() {
            return vec![1.0 / templates.len() as f64; templates.len()];
        }
        templates
            .iter()
            .map(|t| self.mix.iter().find(|(n, _)| n == t.name).map_or(0.0, |(_, w)| *w))
            .collect()
    }

    pub fn overlay(&self, cfg: &KvConfig, prefix: &str) -> Result<Self, ConfigError> {
        cfg.check_known(prefix, WORKLOAD_KEYS)?;
        let mut out = self.clone();
        let key = |k: &str| format!("{prefix}{k}");
        cfg.read(&key("seed"), &mut out.seed)?;
        cfg.read(&key("concurrency"), &mut out.concurrency)?;
        cfg.read(&key("duration"), &mut out.duration)?;
        let mut interval_ms = out.request_interval_us as f64 / 1000.0;
        cfg.read(&key("request_interval_ms"), &mut interval_ms)?;
        if !(interval_ms.is_finite() && interval_ms > 0.0) {
            return Err(invalid(&key("request_interval_ms"), interval_ms, "must be positive"));
        }
        out.request_interval_us = (interval_ms * 1000.0).round() as u64;
        if let Some(raw) = cfg.get(&key("condition")) {
            out.condition = raw
                .trim()
                .parse()
                .map_err(|e: String| invalid(&key("condition"), raw, &e))?;
        }
        if let Some(raw) = cfg.get(&key("mix")) {
            out.mix = raw
                .split(',')
                .filter(|p| !p.trim().is_empty())
                .map(|p| {
                    let (n, w) = p.split_once(':').ok_or("expected name:weight")?;
                    let w: f64 = w.trim().parse().map_err(|_| "bad weight")?;
                    Ok((n.trim().to_owned(), w))
                })
                .collect::<Result<_, &str>>()
                .map_err(|r| invalid(&key("mix"), raw, r))?;
        }
        out.validate(&templates(1))
            .map_err(|r| invalid(&format!("{prefix}*"), "", &r))?;
        Ok(out)
    }

    pub fn to_kv(&self, prefix: &str, cfg: &mut KvConfig) {
        let key = |k: &str| format!("{prefix}{k}");
        cfg.set(key("seed"), self.seed);
        cfg.set(key("concurrency"), self.concurrency);
        cfg.set(key("duration"), self.duration);
        cfg.set(key("request_interval_ms"), self.request_interval_us as f64 / 1000.0);
        cfg.set(key("condition"), self.condition);
        if !self.mix.is_empty() {
            let mix: Vec<String> = self.mix.iter().map(|(n, w)| format!("{n}:{w}")).collect();
            cfg.set(key("mix"), mix.join(","));
        }
    }
}
