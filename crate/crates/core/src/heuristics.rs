//! Two-phase heuristics: order partition values, then score candidate
//! augmented queries built from slices of that order.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use parking_lot::Mutex;
use thiserror::Error;

use crate::config::{invalid, ConfigError, KvConfig};
use crate::corpus::{Service, TenantId};
use crate::metadata::{ratio, Snapshot};
use crate::query::{augment, explain, KeyField, PartitionValue, Query, QueryError, QueryPlan};
use crate::storage::{CostModel, TableLayout};

#[derive(Debug, Error)]
pub enum HeuristicError {
    #[error("invalid heuristic config: {0}")]
    InvalidConfig(String),
    #[error("no candidates to select from")]
    NoCandidates,
    #[error(transparent)]
    Query(#[from] QueryError),
}

/// Weights of the three partitioning heuristics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeuristicMix {
    pub recency: f64,
    pub resource_count: f64,
    pub relevance: f64,
}

impl HeuristicMix {
    pub const WITH_SERVICE: Self = Self {
        recency: 0.25,
        resource_count: 0.25,
        relevance: 0.5,
    };
    pub const WITHOUT_SERVICE: Self = Self {
        recency: 0.5,
        resource_count: 0.5,
        relevance: 0.0,
    };

    /// Default mix for `query`.
    pub fn for_query(query: &Query) -> Self {
        if query.referenced_services().is_empty() {
            Self::WITHOUT_SERVICE
        } else {
            Self::WITH_SERVICE
        }
    }

    fn parse(raw: &str) -> Result<Self, String> {
        let parts: Vec<f64> = raw
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [recency, resource_count, relevance] => Ok(Self {
                recency,
                resource_count,
                relevance,
            }),
            _ => Err("expected recency,resource_count,relevance".into()),
        }
    }

    fn validate(&self) -> Result<(), String> {
        let w = [self.recency, self.resource_count, self.relevance];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err("mix weights must be finite and non-negative".into());
        }
        if w.iter().all(|x| *x == 0.0) {
            return Err("at least one mix weight must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeuristicConfig {
    /// N: candidates per partitioning event.
    pub candidates_per_event: usize,
    /// n: partition values per candidate.
    pub values_per_candidate: usize,
    pub weight_relevance: f64,
    pub weight_cost: f64,
    /// `None` picks [`HeuristicMix::for_query`].
    pub mix: Option<HeuristicMix>,
    /// Ticks of snapshot history required before the heuristics engage.
    pub cold_start_threshold: u64,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self {
            candidates_per_event: 5,
            values_per_candidate: 10,
            weight_relevance: 1.0,
            weight_cost: 1.0,
            mix: None,
            cold_start_threshold: 0,
        }
    }
}

const HEURISTIC_KEYS: &[&str] = &[
    "candidates_per_event",
    "values_per_candidate",
    "weight_relevance",
    "weight_cost",
    "mix",
    "cold_start_threshold",
];

impl HeuristicConfig {
    pub fn validate(&self) -> Result<(), HeuristicError> {
        if self.candidates_per_event == 0 || self.values_per_candidate == 0 {
            return Err(HeuristicError::InvalidConfig("N and n must be at least 1".into()));
        }
        if !self.weight_relevance.is_finite() || !self.weight_cost.is_finite() {
            return Err(HeuristicError::InvalidConfig("scoring weights must be finite".into()));
        }
        if let Some(mix) = &self.mix {
            mix.validate().map_err(HeuristicError::InvalidConfig)?;
        }
        Ok(())
    }

    /// Applies keys under `prefix` on top of `self`.
    pub fn overlay(&self, cfg: &KvConfig, prefix: &str) -> Result<Self, ConfigError> {
        cfg.check_known(prefix, HEURISTIC_KEYS)?;
        let mut out = self.clone();
        let key = |k: &str| format!("{prefix}{k}");
        cfg.read(&key("candidates_per_event"), &mut out.candidates_per_event)?;
        cfg.read(&key("values_per_candidate"), &mut out.values_per_candidate)?;
        cfg.read(&key("weight_relevance"), &mut out.weight_relevance)?;
        cfg.read(&key("weight_cost"), &mut out.weight_cost)?;
        cfg.read(&key("cold_start_threshold"), &mut out.cold_start_threshold)?;
        if let Some(raw) = cfg.get(&key("mix")) {
            out.mix = match raw.trim() {
                "auto" => None,
                other => Some(HeuristicMix::parse(other).map_err(|r| invalid(&key("mix"), raw, &r))?),
            };
        }
        out.validate()
            .map_err(|e| invalid(&format!("{prefix}*"), "", &e.to_string()))?;
        Ok(out)
    }

    pub fn to_kv(&self, prefix: &str, cfg: &mut KvConfig) {
        let key = |k: &str| format!("{prefix}{k}");
        cfg.set(key("candidates_per_event"), self.candidates_per_event);
        cfg.set(key("values_per_candidate"), self.values_per_candidate);
        cfg.set(key("weight_relevance"), self.weight_relevance);
        cfg.set(key("weight_cost"), self.weight_cost);
        cfg.set(key("cold_start_threshold"), self.cold_start_threshold);
        cfg.set(
            key("mix"),
            match &self.mix {
                None => "auto".to_owned(),
                Some(m) => format!("{},{},{}", m.recency, m.resource_count, m.relevance),
            },
        );
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedValue {
    pub value: PartitionValue,
    pub score: f64,
}

/// Partition values in descending score order.
pub type ValueRanking = Vec<RankedValue>;

fn by_score_then_value(a: &RankedValue, b: &RankedValue) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.value.cmp(&b.value))
}

/// Scores every non-excluded partition value of the tenant.
pub fn rank_values(
    snapshot: &Snapshot,
    query: &Query,
    key: KeyField,
    excluded: &BTreeSet<PartitionValue>,
    config: &HeuristicConfig,
) -> ValueRanking {
    let universe = snapshot.universe(&query.tenant, key);
    let cold = snapshot.history(&query.tenant) < config.cold_start_threshold;
    let mix = config.mix.unwrap_or_else(|| HeuristicMix::for_query(query));

    let ticks: Vec<u64> = universe
        .iter()
        .map(|v| snapshot.account(&v.account).map_or(0, |a| a.last_updated_at))
        .collect();
    let mut sorted_ticks = ticks.clone();
    sorted_ticks.sort_unstable();

    let services: Vec<Service> = query
        .referenced_services()
        .into_iter()
        .filter_map(|s| s.parse().ok())
        .collect();
    let names_service = !query.referenced_services().is_empty();
    let matching: Vec<u64> = universe
        .iter()
        .map(|v| {
            snapshot.account(&v.account).map_or(0, |a| {
                services
                    .iter()
                    .map(|s| a.per_service_counts.get(s).copied().unwrap_or(0))
                    .sum()
            })
        })
        .collect();
    let max_matching = matching.iter().copied().max().unwrap_or(0);

    let k = universe.len();
    let mut ranking: ValueRanking = universe
        .iter()
        .enumerate()
        .filter(|(_, v)| !excluded.contains(v))
        .map(|(i, v)| {
            let score = if cold {
                0.0
            } else {
                let older = sorted_ticks.partition_point(|&t| t < ticks[i]);
                let recency = if k > 1 { older as f64 / (k - 1) as f64 } else { 1.0 };
                let (active, deleted) = snapshot.value_counts(v);
                let service_match = if !names_service {
                    1.0
                } else if max_matching == 0 {
                    0.0
                } else {
                    matching[i] as f64 / max_matching as f64
                };
                mix.recency * recency + mix.resource_count * ratio(active, deleted) + mix.relevance * service_match
            };
            RankedValue {
                value: v.clone(),
                score,
            }
        })
        .collect();
    ranking.sort_by(by_score_then_value);
    ranking
}

/// Rotates each band of equal scores left by `cursor`.
pub fn rotate(mut ranking: ValueRanking, cursor: u64) -> ValueRanking {
    let mut start = 0;
    while start < ranking.len() {
        let score = ranking[start].score;
        let end = start + ranking[start..].iter().take_while(|r| r.score == score).count();
        let band = &mut ranking[start..end];
        let shift = (cursor % band.len() as u64) as usize;
        band.rotate_left(shift);
        start = end;
    }
    ranking
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartitionCandidate {
    pub query: Query,
    pub values: BTreeSet<PartitionValue>,
    pub plan: QueryPlan,
    pub relevance_score: f64,
    pub cost_penalty: f64,
    pub composite_score: f64,
}

/// Value slices `[start, end)` of a ranking of length `len`.
pub fn candidate_slices(len: usize, config: &HeuristicConfig) -> Vec<(usize, usize)> {
    let n = config.values_per_candidate;
    let count = config.candidates_per_event.min(len.div_ceil(n));
    (0..count)
        .map(|i| {
            let start = i * n;
            if start + n <= len {
                (start, start + n)
            } else {
                // tail overlaps its predecessor so every candidate has n values
                (len.saturating_sub(n), len)
            }
        })
        .collect()
}

pub fn composite(config: &HeuristicConfig, relevance: f64, cost_penalty: f64) -> f64 {
    config.weight_relevance * relevance - config.weight_cost * cost_penalty
}

/// Builds up to N candidates, each scoped to one slice of the ranking.
pub fn generate_candidates(
    ranking: &ValueRanking,
    query: &Query,
    key: KeyField,
    config: &HeuristicConfig,
    layout: &TableLayout,
    snapshot: &Snapshot,
    cost: &CostModel,
) -> Result<Vec<PartitionCandidate>, HeuristicError> {
    let mut out = Vec::new();
    for (start, end) in candidate_slices(ranking.len(), config) {
        let values: BTreeSet<PartitionValue> = ranking[start..end].iter().map(|r| r.value.clone()).collect();
        let augmented = augment(query, key, &values)?;
        let plan = explain(layout, snapshot, cost, &augmented);
        let relevance = values
            .iter()
            .map(|v| {
                let (a, d) = snapshot.value_counts(v);
                ratio(a, d)
            })
            .sum::<f64>()
            / values.len() as f64;
        out.push(PartitionCandidate {
            query: augmented,
            values,
            plan,
            relevance_score: relevance,
            cost_penalty: 0.0,
            composite_score: 0.0,
        });
    }
    let max_rows = out.iter().map(|c| c.plan.estimated_rows).max().unwrap_or(0);
    for c in &mut out {
        c.cost_penalty = if max_rows == 0 {
            0.0
        } else {
            c.plan.estimated_rows as f64 / max_rows as f64
        };
        c.composite_score = composite(config, c.relevance_score, c.cost_penalty);
    }
    Ok(out)
}

/// Index of the argmax by composite score; ties go to the smallest value set.
pub fn best_index(scores: &[(f64, &BTreeSet<PartitionValue>)]) -> Option<usize> {
    (0..scores.len()).min_by(|&i, &j| {
        scores[j]
            .0
            .total_cmp(&scores[i].0)
            .then_with(|| scores[i].1.iter().cmp(scores[j].1.iter()))
    })
}

pub fn select_best(candidates: Vec<PartitionCandidate>) -> Result<PartitionCandidate, HeuristicError> {
    let scores: Vec<_> = candidates.iter().map(|c| (c.composite_score, &c.values)).collect();
    let best = best_index(&scores).ok_or(HeuristicError::NoCandidates)?;
    Ok(candidates.into_iter().nth(best).expect("index in range"))
}

/// Round-robin offsets keyed by (tenant, query signature).
#[derive(Debug, Default)]
pub struct CursorStore {
    cursors: Mutex<HashMap<(TenantId, u64), u64>>,
}

impl CursorStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the current cursor and advances it by one.
    pub fn next(&self, tenant: &TenantId, signature: u64) -> u64 {
        let mut map = self.cursors.lock();
        let slot = map.entry((tenant.clone(), signature)).or_insert(0);
        let current = *slot;
        *slot = slot.wrapping_add(1);
        current
    }

    pub fn peek(&self, tenant: &TenantId, signature: u64) -> u64 {
        self.cursors
            .lock()
            .get(&(tenant.clone(), signature))
            .copied()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AccountId, ResourceRecord};
    use crate::query::parse_query;
    use crate::storage::build_layout;
    use proptest::prelude::*;

    fn record(id: u64, account: &str, service: Service, deleted: bool, updated_at: u64) -> ResourceRecord {
        ResourceRecord {
            resource_id: id,
            tenant_id: "t".into(),
            account_id: account.into(),
            region: "us-east-1".into(),
            service,
            resource_type: service.resource_types()[0].into(),
            is_deleted: deleted,
            updated_at,
            payload_bytes: 64,
        }
    }

    fn only(mix: HeuristicMix) -> HeuristicConfig {
        HeuristicConfig {
            mix: Some(mix),
            ..HeuristicConfig::default()
        }
    }

    fn names(r: &ValueRanking) -> Vec<String> {
        r.iter().map(|v| v.value.to_string()).collect()
    }

    /// `accounts` equal accounts of 4 active ec2 records each.
    fn uniform(accounts: usize) -> Vec<ResourceRecord> {
        (0..accounts * 4)
            .map(|i| record(i as u64, &format!("a{:02}", i / 4), Service::Ec2, false, 10))
            .collect()
    }

    #[test]
    fn single_account_singleton_ranking() {
        let snap = Snapshot::build(&uniform(1), 0, None);
        let q = Query::new("t");
        let r = rank_values(
            &snap,
            &q,
            KeyField::Account,
            &BTreeSet::new(),
            &HeuristicConfig::default(),
        );
        assert_eq!(names(&r), ["a00"]);
    }

    #[test]
    fn fully_active_outranks_half_deleted() {
        let mut recs = vec![
            record(0, "b", Service::Ec2, false, 5),
            record(1, "b", Service::Ec2, true, 5),
        ];
        recs.extend([
            record(2, "a", Service::Ec2, false, 5),
            record(3, "a", Service::Ec2, false, 5),
        ]);
        let snap = Snapshot::build(&recs, 0, None);
        let cfg = only(HeuristicMix {
            recency: 0.0,
            resource_count: 1.0,
            relevance: 0.0,
        });
        let r = rank_values(&snap, &Query::new("t"), KeyField::Account, &BTreeSet::new(), &cfg);
        assert_eq!(names(&r), ["a", "b"]);
        assert_eq!(r[0].score, 1.0);
        assert_eq!(r[1].score, 0.5);
    }

    #[test]
    fn zero_service_match_ranks_strictly_below() {
        let recs = vec![
            record(0, "a", Service::S3, false, 1),
            record(1, "b", Service::Ec2, false, 1),
            record(2, "c", Service::Ec2, false, 1),
            record(3, "c", Service::Ec2, false, 1),
        ];
        let snap = Snapshot::build(&recs, 0, None);
        let cfg = only(HeuristicMix {
            recency: 0.0,
            resource_count: 0.0,
            relevance: 1.0,
        });
        let q = parse_query("tenant=t; service=ec2").unwrap();
        let r = rank_values(&snap, &q, KeyField::Account, &BTreeSet::new(), &cfg);
        assert_eq!(names(&r), ["c", "b", "a"]);
        assert_eq!(r[2].score, 0.0);
        assert!(r[1].score > 0.0);
    }

    #[test]
    fn recency_rank_normalized() {
        let recs = vec![
            record(0, "a", Service::Ec2, false, 100),
            record(1, "b", Service::Ec2, false, 300),
            record(2, "c", Service::Ec2, false, 200),
        ];
        let snap = Snapshot::build(&recs, 0, None);
        let cfg = only(HeuristicMix {
            recency: 1.0,
            resource_count: 0.0,
            relevance: 0.0,
        });
        let r = rank_values(&snap, &Query::new("t"), KeyField::Account, &BTreeSet::new(), &cfg);
        let scores: Vec<(String, f64)> = r.iter().map(|v| (v.value.to_string(), v.score)).collect();
        assert_eq!(scores, [("b".into(), 1.0), ("c".into(), 0.5), ("a".into(), 0.0)]);
    }

    #[test]
    fn exclusion_removes_values() {
        let snap = Snapshot::build(&uniform(6), 0, None);
        let excluded: BTreeSet<_> = ["a01", "a04"]
            .iter()
            .map(|a| PartitionValue::account(AccountId::new(a)))
            .collect();
        let r = rank_values(
            &snap,
            &Query::new("t"),
            KeyField::Account,
            &excluded,
            &HeuristicConfig::default(),
        );
        assert_eq!(names(&r), ["a00", "a02", "a03", "a05"]);
    }

    #[test]
    fn rotation_round_robin_top1() {
        let snap = Snapshot::build(&uniform(4), 0, None);
        let r = rank_values(
            &snap,
            &Query::new("t"),
            KeyField::Account,
            &BTreeSet::new(),
            &HeuristicConfig::default(),
        );
        let picked: BTreeSet<String> = (0..4).map(|c| rotate(r.clone(), c)[0].value.to_string()).collect();
        assert_eq!(picked.len(), 4);
    }

    #[test]
    fn rotation_identity_on_distinct_scores() {
        let r: ValueRanking = (0..5)
            .map(|i| RankedValue {
                value: PartitionValue::account(AccountId::new(format!("a{i}"))),
                score: 5.0 - i as f64,
            })
            .collect();
        for c in 0..7 {
            assert_eq!(rotate(r.clone(), c), r);
        }
    }

    #[test]
    fn rotation_stays_within_bands() {
        let scores = [3.0, 2.0, 2.0, 2.0, 1.0, 1.0];
        let r: ValueRanking = scores
            .iter()
            .enumerate()
            .map(|(i, &score)| RankedValue {
                value: PartitionValue::account(AccountId::new(format!("a{i}"))),
                score,
            })
            .collect();
        let rotated = rotate(r, 1);
        assert_eq!(names(&rotated), ["a0", "a2", "a3", "a1", "a5", "a4"]);
    }

    #[test]
    fn cold_start_is_uniform() {
        let mut recs = uniform(3);
        recs[0].is_deleted = true;
        recs[5].updated_at = 999;
        let snap = Snapshot::build(&recs, 50, None);
        let cfg = HeuristicConfig {
            cold_start_threshold: 100,
            ..HeuristicConfig::default()
        };
        let r = rank_values(&snap, &Query::new("t"), KeyField::Account, &BTreeSet::new(), &cfg);
        assert!(r.iter().all(|v| v.score == 0.0));
        assert_eq!(names(&r), ["a00", "a01", "a02"]);
        let later = Snapshot::build(&recs, 200, Some(&snap));
        let warm = rank_values(&later, &Query::new("t"), KeyField::Account, &BTreeSet::new(), &cfg);
        assert!(warm.iter().any(|v| v.score != warm[0].score));
    }

    #[test]
    fn slicing_arithmetic() {
        let cfg = HeuristicConfig::default();
        assert_eq!(candidate_slices(3, &cfg), [(0, 3)]);
        assert_eq!(
            candidate_slices(50, &cfg),
            [(0, 10), (10, 20), (20, 30), (30, 40), (40, 50)]
        );
        assert_eq!(candidate_slices(23, &cfg), [(0, 10), (10, 20), (13, 23)]);
        assert_eq!(candidate_slices(80, &cfg).len(), 5);
        assert!(candidate_slices(0, &cfg).is_empty());
    }

    #[test]
    fn fifty_values_give_five_disjoint_candidates() {
        let snap_recs = uniform(50);
        let layout = build_layout(&snap_recs, 8192).unwrap();
        let snap = Snapshot::build(&snap_recs, 0, None);
        let q = Query::new("t");
        let cfg = HeuristicConfig::default();
        let r = rank_values(&snap, &q, KeyField::Account, &BTreeSet::new(), &cfg);
        let cands =
            generate_candidates(&r, &q, KeyField::Account, &cfg, &layout, &snap, &CostModel::default()).unwrap();
        assert_eq!(cands.len(), 5);
        let mut all = BTreeSet::new();
        for c in &cands {
            assert_eq!(c.values.len(), 10);
            all.extend(c.values.iter().cloned());
        }
        assert_eq!(all.len(), 50);
    }

    #[test]
    fn active_candidate_beats_half_deleted() {
        let mut recs = Vec::new();
        for (acct, deleted) in [("a0", false), ("a1", false), ("b0", true), ("b1", true)] {
            for i in 0..10u64 {
                recs.push(record(recs.len() as u64, acct, Service::Ec2, deleted && i % 2 == 0, 1));
            }
            // deleted accounts carry extra dead rows
            if deleted {
                for _ in 0..10 {
                    recs.push(record(recs.len() as u64, acct, Service::Ec2, true, 1));
                }
            }
        }
        let layout = build_layout(&recs, 8192).unwrap();
        let snap = Snapshot::build(&recs, 0, None);
        let q = Query::new("t");
        let cfg = HeuristicConfig {
            values_per_candidate: 2,
            ..only(HeuristicMix {
                recency: 0.0,
                resource_count: 1.0,
                relevance: 0.0,
            })
        };
        let r = rank_values(&snap, &q, KeyField::Account, &BTreeSet::new(), &cfg);
        let cands =
            generate_candidates(&r, &q, KeyField::Account, &cfg, &layout, &snap, &CostModel::default()).unwrap();
        assert_eq!(cands.len(), 2);
        let (good, bad) = (&cands[0], &cands[1]);
        assert!(good.values.iter().all(|v| v.account.as_str().starts_with('a')));
        assert!(good.relevance_score > bad.relevance_score);
        assert!(good.cost_penalty < bad.cost_penalty);
        assert!(good.composite_score > bad.composite_score);
        let good_values = good.values.clone();
        assert_eq!(select_best(cands).unwrap().values, good_values);
    }

    fn fake(score: f64, accounts: &[&str]) -> PartitionCandidate {
        let values: BTreeSet<_> = accounts
            .iter()
            .map(|a| PartitionValue::account(AccountId::new(a)))
            .collect();
        PartitionCandidate {
            query: Query::new("t"),
            values,
            plan: QueryPlan {
                access: crate::query::AccessPath::Full,
                estimated_rows: 0,
                estimated_cost: 0,
                estimated_pages: 0,
            },
            relevance_score: 0.0,
            cost_penalty: 0.0,
            composite_score: score,
        }
    }

    #[test]
    fn select_best_examples() {
        assert_eq!(select_best(vec![fake(1.0, &["x"])]).unwrap().values.len(), 1);
        let best = select_best(vec![fake(2.0, &["a"]), fake(5.0, &["b"]), fake(3.1, &["c"])]).unwrap();
        assert_eq!(best.composite_score, 5.0);
        let tie = select_best(vec![fake(1.0, &["c", "d"]), fake(1.0, &["a", "z"]), fake(1.0, &["b"])]).unwrap();
        assert_eq!(tie.values.iter().next().unwrap().account.as_str(), "a");
        assert!(matches!(select_best(vec![]), Err(HeuristicError::NoCandidates)));
    }

    #[test]
    fn config_overlay_and_validation() {
        let cfg = KvConfig::parse("h.values_per_candidate = 4\nh.mix = 1,0,0\n").unwrap();
        let c = HeuristicConfig::default().overlay(&cfg, "h.").unwrap();
        assert_eq!(c.values_per_candidate, 4);
        assert_eq!(
            c.mix,
            Some(HeuristicMix {
                recency: 1.0,
                resource_count: 0.0,
                relevance: 0.0
            })
        );
        let mut round = KvConfig::new();
        c.to_kv("h.", &mut round);
        assert_eq!(HeuristicConfig::default().overlay(&round, "h.").unwrap(), c);
        for bad in [
            "h.mix = 0,0,0",
            "h.candidates_per_event = 0",
            "h.weight_cost = NaN",
            "h.bogus = 1",
        ] {
            let cfg = KvConfig::parse(bad).unwrap();
            assert!(HeuristicConfig::default().overlay(&cfg, "h.").is_err(), "{bad}");
        }
    }

    #[test]
    fn cursor_store_advances_per_key() {
        let store = CursorStore::new();
        let t = TenantId::new("t");
        assert_eq!(store.next(&t, 1), 0);
        assert_eq!(store.next(&t, 1), 1);
        assert_eq!(store.next(&t, 2), 0);
        assert_eq!(store.peek(&t, 1), 2);
    }

    proptest! {
        #[test]
        fn argmax_invariant_under_positive_scaling(
            scores in proptest::collection::vec(-10.0f64..10.0, 1..8),
            scale in 0.001f64..1000.0,
        ) {
            let sets: Vec<BTreeSet<PartitionValue>> = (0..scores.len())
                .map(|i| [PartitionValue::account(AccountId::new(format!("a{i}")))].into())
                .collect();
            let plain: Vec<_> = scores.iter().zip(&sets).map(|(s, v)| (*s, v)).collect();
            let scaled: Vec<_> = scores.iter().zip(&sets).map(|(s, v)| (s * scale, v)).collect();
            prop_assert_eq!(best_index(&plain), best_index(&scaled));
        }

        #[test]
        fn score_monotone_in_active_ratio(
            deleted_before in 1usize..8,
            revive in 1usize..8,
            mix in (0.0f64..1.0, 0.01f64..1.0, 0.0f64..1.0),
        ) {
            let revive = revive.min(deleted_before);
            let mut recs = uniform(3);
            for i in 0..deleted_before {
                recs.push(record(100 + i as u64, "a01", Service::Ec2, true, 10));
            }
            let cfg = only(HeuristicMix { recency: mix.0, resource_count: mix.1, relevance: mix.2 });
            let q = Query::new("t");
            let score = |recs: &[ResourceRecord]| {
                let snap = Snapshot::build(recs, 0, None);
                rank_values(&snap, &q, KeyField::Account, &BTreeSet::new(), &cfg)
                    .into_iter()
                    .find(|v| v.value.account.as_str() == "a01")
                    .unwrap()
                    .score
            };
            let before = score(&recs);
            for r in recs.iter_mut().filter(|r| r.is_deleted).take(revive) {
                r.is_deleted = false;
            }
            prop_assert!(score(&recs) >= before);
        }

        #[test]
        fn composite_monotone_in_estimated_rows(
            rows in proptest::collection::vec(1u64..10_000, 2..6),
            which in 0usize..6,
            bump in 1u64..5000,
            wr in 0.0f64..3.0,
            wc in 0.0f64..3.0,
        ) {
            let cfg = HeuristicConfig { weight_relevance: wr, weight_cost: wc, ..HeuristicConfig::default() };
            let which = which % rows.len();
            let scores = |rows: &[u64]| {
                let max = *rows.iter().max().unwrap() as f64;
                rows.iter().map(|&r| composite(&cfg, 0.7, r as f64 / max)).collect::<Vec<_>>()
            };
            let before = scores(&rows)[which];
            let mut bumped = rows.clone();
            bumped[which] += bump;
            prop_assert!(scores(&bumped)[which] <= before + 1e-12);
        }

        #[test]
        fn exclusion_soundness(mask in proptest::collection::vec(any::<bool>(), 24), cursor in 0u64..50) {
            let recs = uniform(24);
            let layout = build_layout(&recs, 8192).unwrap();
            let snap = Snapshot::build(&recs, 0, None);
            let q = Query::new("t");
            let excluded: BTreeSet<_> = snap
                .universe(&q.tenant, KeyField::Account)
                .into_iter()
                .zip(&mask)
                .filter(|(_, m)| **m)
                .map(|(v, _)| v)
                .collect();
            let cfg = HeuristicConfig { values_per_candidate: 4, ..HeuristicConfig::default() };
            let r = rotate(rank_values(&snap, &q, KeyField::Account, &excluded, &cfg), cursor);
            let cands = generate_candidates(&r, &q, KeyField::Account, &cfg, &layout, &snap, &CostModel::default()).unwrap();
            for c in &cands {
                prop_assert!(c.values.is_disjoint(&excluded));
            }
        }
    }
}
