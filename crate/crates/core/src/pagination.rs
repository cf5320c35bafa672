//! Signed, expiring page tokens and the termination rules.
//!
//! Wire form: `v1.<b64url(payload)>.<b64url(tag)>`, unpadded, where `tag` is
//! HMAC-SHA256 over the raw payload bytes. Payload layout (big-endian):
//!
//! ```text
//! u8   version (1)
//! u16  tenant length, then tenant bytes
//! u8   key field code
//! u32  universe length
//! [16] universe digest
//! u8   searched-set encoding: 0 = bitmap, 1 = runs
//! u32  encoded length, then bytes
//! u32  consecutive empty executions
//! u64  round-robin cursor
//! u64  query signature
//! u64  issued_at
//! u64  expires_at
//! ```
//!
//! Searched values are indices into the tenant's sorted partition universe.
//! The bitmap is LSB-first per byte; runs are `(start u32, len u32)` pairs,
//! ascending and non-adjacent. The shorter encoding wins, ties to the bitmap.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine as _;
use hmac::{Hmac, Mac};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{invalid, ConfigError, KvConfig};
use crate::corpus::{TenantId, Tick};
use crate::query::{KeyField, PartitionValue, QueryClass};

pub const TOKEN_VERSION: u8 = 1;
pub const DEFAULT_TOKEN_TTL: Tick = 3600;
pub const DEFAULT_EMPTY_THRESHOLD: u32 = 3;

type HmacSha256 = Hmac<Sha256>;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TokenError {
    #[error("malformed token: {0}")]
    Format(String),
    #[error("token signature does not verify")]
    Forgery,
    #[error("token issued for tenant {found}, not {expected}")]
    TenantMismatch { expected: String, found: String },
    #[error("token expired at tick {expires_at} (now {now})")]
    Expired { expires_at: Tick, now: Tick },
    #[error("tenant partition universe changed since the token was issued")]
    UniverseDrift,
    #[error("token was issued for a different query")]
    QueryMismatch,
}

impl TokenError {
    /// Stable machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            TokenError::Format(_) => "format",
            TokenError::Forgery => "forgery",
            TokenError::TenantMismatch { .. } => "tenant_mismatch",
            TokenError::Expired { .. } => "expired",
            TokenError::UniverseDrift => "universe_drift",
            TokenError::QueryMismatch => "query_mismatch",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("pagination invariant violated: {0}")]
pub struct InvariantViolation(pub String);

/// 256-bit server key.
#[derive(Clone, PartialEq, Eq)]
pub struct TokenKey([u8; 32]);

impl TokenKey {
    pub fn new(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    /// Deterministic key for simulation runs.
    pub fn from_seed(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"hssps-token-key");
        h.update(seed.to_be_bytes());
        Self(h.finalize().into())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    fn mac(&self) -> HmacSha256 {
        HmacSha256::new_from_slice(&self.0).expect("hmac accepts any key length")
    }
}

impl fmt::Debug for TokenKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("TokenKey(..)")
    }
}

/// First 16 bytes of SHA-256 over the newline-joined sorted universe.
pub fn universe_digest(universe: &[PartitionValue]) -> [u8; 16] {
    let mut h = Sha256::new();
    for v in universe {
        h.update(v.to_string().as_bytes());
        h.update(b"\n");
    }
    h.finalize()[..16].try_into().expect("digest is 32 bytes")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenPayload {
    pub tenant_id: TenantId,
    pub key_field: KeyField,
    pub universe_len: u32,
    pub universe_digest: [u8; 16],
    /// Universe indices searched by all previous pages.
    pub searched: BTreeSet<u32>,
    pub consecutive_empty: u32,
    pub cursor: u64,
    pub query_signature: u64,
    pub issued_at: Tick,
    pub expires_at: Tick,
}

impl TokenPayload {
    /// Fresh state for a tenant universe before any page has run.
    pub fn start(
        tenant: TenantId,
        key_field: KeyField,
        universe: &[PartitionValue],
        query_signature: u64,
        cursor: u64,
    ) -> Self {
        Self {
            tenant_id: tenant,
            key_field,
            universe_len: universe.len() as u32,
            universe_digest: universe_digest(universe),
            searched: BTreeSet::new(),
            consecutive_empty: 0,
            cursor,
            query_signature,
            issued_at: 0,
            expires_at: 1,
        }
    }

    pub fn stamped(mut self, now: Tick, ttl: Tick) -> Self {
        self.issued_at = now;
        self.expires_at = now.saturating_add(ttl.max(1));
        self
    }

    pub fn validate(&self) -> Result<(), InvariantViolation> {
        if self.expires_at <= self.issued_at {
            return Err(InvariantViolation("expires_at must follow issued_at".into()));
        }
        if self
            .searched
            .iter()
            .next_back()
            .is_some_and(|&i| i >= self.universe_len)
        {
            return Err(InvariantViolation("searched index outside the universe".into()));
        }
        if self.tenant_id.as_str().len() > usize::from(u16::MAX) {
            return Err(InvariantViolation("tenant id too long".into()));
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(96);
        out.push(TOKEN_VERSION);
        let tenant = self.tenant_id.as_str().as_bytes();
        out.extend_from_slice(&(tenant.len() as u16).to_be_bytes());
        out.extend_from_slice(tenant);
        out.push(self.key_field.code());
        out.extend_from_slice(&self.universe_len.to_be_bytes());
        out.extend_from_slice(&self.universe_digest);
        let (tag, bytes) = encode_searched(&self.searched, self.universe_len);
        out.push(tag);
        out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
        out.extend_from_slice(&bytes);
        out.extend_from_slice(&self.consecutive_empty.to_be_bytes());
        for v in [self.cursor, self.query_signature, self.issued_at, self.expires_at] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TokenError> {
        let mut r = Reader { bytes, pos: 0 };
        let version = r.u8()?;
        if version != TOKEN_VERSION {
            return Err(fmt_err(format!("unsupported payload version {version}")));
        }
        let tenant_len = usize::from(r.u16()?);
        let tenant = std::str::from_utf8(r.take(tenant_len)?).map_err(|_| fmt_err("tenant is not utf-8"))?;
        let key_field = KeyField::from_code(r.u8()?).ok_or_else(|| fmt_err("unknown key field"))?;
        let universe_len = r.u32()?;
        let universe_digest: [u8; 16] = r.take(16)?.try_into().expect("took 16 bytes");
        let tag = r.u8()?;
        let len = r.u32()? as usize;
        let searched = decode_searched(tag, r.take(len)?, universe_len)?;
        let consecutive_empty = r.u32()?;
        let cursor = r.u64()?;
        let query_signature = r.u64()?;
        let issued_at = r.u64()?;
        let expires_at = r.u64()?;
        if r.pos != bytes.len() {
            return Err(fmt_err("trailing bytes"));
        }
        let payload = Self {
            tenant_id: TenantId::new(tenant),
            key_field,
            universe_len,
            universe_digest,
            searched,
            consecutive_empty,
            cursor,
            query_signature,
            issued_at,
            expires_at,
        };
        payload.validate().map_err(|e| fmt_err(e.0))?;
        Ok(payload)
    }
}

fn fmt_err(msg: impl Into<String>) -> TokenError {
    TokenError::Format(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TokenError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| fmt_err("truncated payload"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, TokenError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, TokenError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, TokenError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, TokenError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn runs(set: &BTreeSet<u32>) -> Vec<(u32, u32)> {
    let mut out: Vec<(u32, u32)> = Vec::new();
    for &i in set {
        match out.last_mut() {
            Some((start, len)) if *start + *len == i => *len += 1,
            _ => out.push((i, 1)),
        }
    }
    out
}

fn encode_searched(set: &BTreeSet<u32>, universe_len: u32) -> (u8, Vec<u8>) {
    let mut bitmap = vec![0u8; (universe_len as usize).div_ceil(8)];
    for &i in set {
        bitmap[(i / 8) as usize] |= 1 << (i % 8);
    }
    let runs = runs(set);
    if runs.len() * 8 < bitmap.len() {
        let mut bytes = Vec::with_capacity(runs.len() * 8);
        for (start, len) in runs {
            bytes.extend_from_slice(&start.to_be_bytes());
            bytes.extend_from_slice(&len.to_be_bytes());
        }
        (1, bytes)
    } else {
        (0, bitmap)
    }
}

fn decode_searched(tag: u8, bytes: &[u8], universe_len: u32) -> Result<BTreeSet<u32>, TokenError> {
    let mut set = BTreeSet::new();
    match tag {
        0 => {
            if bytes.len() != (universe_len as usize).div_ceil(8) {
                return Err(fmt_err("bitmap length does not match universe"));
            }
            for (byte_idx, &b) in bytes.iter().enumerate() {
                for bit in 0..8 {
                    if b & (1 << bit) != 0 {
                        let i = byte_idx as u32 * 8 + bit;
                        if i >= universe_len {
                            return Err(fmt_err("bitmap bit outside universe"));
                        }
                        set.insert(i);
                    }
                }
            }
        }
        1 => {
            if !bytes.len().is_multiple_of(8) {
                return Err(fmt_err("run list is not a whole number of pairs"));
            }
            let mut prev_end: Option<u64> = None;
            for pair in bytes.chunks_exact(8) {
                let start = u32::from_be_bytes(pair[..4].try_into().expect("4 bytes"));
                let len = u32::from_be_bytes(pair[4..].try_into().expect("4 bytes"));
                let end = u64::from(start) + u64::from(len);
                if len == 0 || end > u64::from(universe_len) || prev_end.is_some_and(|p| u64::from(start) <= p) {
                    return Err(fmt_err("runs are not canonical"));
                }
                set.extend(start..start + len);
                prev_end = Some(end);
            }
        }
        other => return Err(fmt_err(format!("unknown searched-set encoding {other}"))),
    }
    if encode_searched(&set, universe_len) != (tag, bytes.to_vec()) {
        return Err(fmt_err("searched set is not canonically encoded"));
    }
    Ok(set)
}

/// Signed wire token.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PageToken(String);

impl PageToken {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn from_wire(s: impl Into<String>) -> Self {
        Self(s.into())
    }
}

impl fmt::Display for PageToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn mint(payload: &TokenPayload, key: &TokenKey) -> PageToken {
    let bytes = payload.encode();
    let mut mac = key.mac();
    mac.update(&bytes);
    let tag = mac.finalize().into_bytes();
    PageToken(format!(
        "v1.{}.{}",
        URL_SAFE_NO_PAD.encode(&bytes),
        URL_SAFE_NO_PAD.encode(tag)
    ))
}

/// Checks signature, tenant and expiry, in that order.
pub fn verify(
    token: &PageToken,
    key: &TokenKey,
    expected_tenant: &TenantId,
    now: Tick,
) -> Result<TokenPayload, TokenError> {
    let rest = token
        .0
        .strip_prefix("v1.")
        .ok_or_else(|| fmt_err("missing v1 prefix"))?;
    let (p, t) = rest.split_once('.').ok_or_else(|| fmt_err("missing tag separator"))?;
    let bytes = URL_SAFE_NO_PAD
        .decode(p)
        .map_err(|e| fmt_err(format!("payload: {e}")))?;
    let tag = URL_SAFE_NO_PAD.decode(t).map_err(|e| fmt_err(format!("tag: {e}")))?;
    if tag.len() != 32 {
        return Err(fmt_err("tag must be 32 bytes"));
    }
    let mut mac = key.mac();
    mac.update(&bytes);
    mac.verify_slice(&tag).map_err(|_| TokenError::Forgery)?;
    let payload = TokenPayload::decode(&bytes)?;
    if payload.tenant_id != *expected_tenant {
        return Err(TokenError::TenantMismatch {
            expected: expected_tenant.to_string(),
            found: payload.tenant_id.to_string(),
        });
    }
    if now >= payload.expires_at {
        return Err(TokenError::Expired {
            expires_at: payload.expires_at,
            now,
        });
    }
    Ok(payload)
}

/// Checks that a verified payload still fits the tenant's universe and query.
pub fn check_context(
    payload: &TokenPayload,
    key_field: KeyField,
    universe: &[PartitionValue],
    query_signature: u64,
) -> Result<(), TokenError> {
    if payload.key_field != key_field
        || payload.universe_len as usize != universe.len()
        || payload.universe_digest != universe_digest(universe)
    {
        return Err(TokenError::UniverseDrift);
    }
    if payload.query_signature != query_signature {
        return Err(TokenError::QueryMismatch);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TerminationConfig {
    pub empty_threshold: u32,
    pub per_class: BTreeMap<QueryClass, u32>,
}

impl Default for TerminationConfig {
    fn default() -> Self {
        Self {
            empty_threshold: DEFAULT_EMPTY_THRESHOLD,
            per_class: BTreeMap::new(),
        }
    }
}

impl TerminationConfig {
    /// Only universe coverage ends pagination.
    pub fn unbounded() -> Self {
        Self {
            empty_threshold: u32::MAX,
            per_class: BTreeMap::new(),
        }
    }

    pub fn threshold(&self, class: QueryClass) -> u32 {
        self.per_class.get(&class).copied().unwrap_or(self.empty_threshold)
    }

    /// Reads `empty_threshold` and `empty_threshold.<class>` under `prefix`.
    pub fn overlay(&self, cfg: &KvConfig, prefix: &str) -> Result<Self, ConfigError> {
        let mut known = vec!["empty_threshold".to_owned()];
        known.extend(QueryClass::ALL.iter().map(|c| format!("empty_threshold.{c}")));
        let known: Vec<&str> = known.iter().map(String::as_str).collect();
        cfg.check_known(prefix, &known)?;
        let mut out = self.clone();
        let key = |k: &str| format!("{prefix}{k}");
        cfg.read(&key("empty_threshold"), &mut out.empty_threshold)?;
        for class in QueryClass::ALL {
            let k = key(&format!("empty_threshold.{class}"));
            if let Some(raw) = cfg.get(&k) {
                let v: u32 = raw
                    .trim()
                    .parse()
                    .map_err(|e: std::num::ParseIntError| invalid(&k, raw, &e.to_string()))?;
                out.per_class.insert(class, v);
            }
        }
        if out.empty_threshold == 0 || out.per_class.values().any(|&v| v == 0) {
            return Err(invalid(&key("empty_threshold"), 0, "must be at least 1"));
        }
        Ok(out)
    }

    pub fn to_kv(&self, prefix: &str, cfg: &mut KvConfig) {
        cfg.set(format!("{prefix}empty_threshold"), self.empty_threshold);
        for (class, v) in &self.per_class {
            cfg.set(format!("{prefix}empty_threshold.{class}"), v);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExhaustReason {
    UniverseCovered,
    EmptyThreshold,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Advance {
    Continue(TokenPayload),
    Exhausted {
        reason: ExhaustReason,
        payload: TokenPayload,
    },
}

/// Folds one executed page into the traversal state.
pub fn advance(
    mut payload: TokenPayload,
    executed: &BTreeSet<u32>,
    rows_returned: u64,
    next_cursor: u64,
    empty_threshold: u32,
) -> Result<Advance, InvariantViolation> {
    if let Some(dup) = executed.intersection(&payload.searched).next() {
        return Err(InvariantViolation(format!("universe index {dup} executed twice")));
    }
    if executed.iter().next_back().is_some_and(|&i| i >= payload.universe_len) {
        return Err(InvariantViolation("executed index outside the universe".into()));
    }
    payload.searched.extend(executed.iter().copied());
    payload.consecutive_empty = if rows_returned > 0 {
        0
    } else {
        payload.consecutive_empty.saturating_add(1)
    };
    payload.cursor = next_cursor;
    if payload.searched.len() as u64 >= u64::from(payload.universe_len) {
        return Ok(Advance::Exhausted {
            reason: ExhaustReason::UniverseCovered,
            payload,
        });
    }
    if payload.consecutive_empty >= empty_threshold {
        return Ok(Advance::Exhausted {
            reason: ExhaustReason::EmptyThreshold,
            payload,
        });
    }
    Ok(Advance::Continue(payload))
}
