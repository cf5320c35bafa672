//! Minimal textual query form.
//!
//! ```text
//! query  := clause (';' clause)*
//! clause := 'tenant=' VALUE | 'class=' CLASS | 'rows=' INT | 'join=all'
//!         | filter | 'join.' filter
//! filter := FIELD '=' VALUE
//!         | FIELD ' in (' VALUE (',' VALUE)* ')'
//!         | 'updated_at>=' INT | 'updated_at<' INT
//! VALUE  := [A-Za-z0-9_./:+-]+
//! ```
//!
//! Printing emits `tenant`, `class` and `rows` first, then the filters in
//! order, then the join filters; `parse(print(q)) == q`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use super::{Field, Filter, Query, QueryClass, QueryError, DEFAULT_PAGE_SIZE_ROWS};
use crate::corpus::TenantId;

fn is_value_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '/' | ':' | '+' | '-')
}

fn value(raw: &str) -> Result<String, QueryError> {
    let v = raw.trim();
    if v.is_empty() || !v.chars().all(is_value_char) {
        return Err(QueryError::Parse(format!("invalid value {raw:?}")));
    }
    Ok(v.to_owned())
}

fn tick(raw: &str) -> Result<u64, QueryError> {
    raw.trim()
        .parse()
        .map_err(|e| QueryError::Parse(format!("invalid tick {raw:?}: {e}")))
}

fn parse_filter(clause: &str) -> Result<Filter, QueryError> {
    if let Some(rest) = clause.strip_prefix("updated_at>=") {
        return Ok(Filter::UpdatedAtLeast(tick(rest)?));
    }
    if let Some(rest) = clause.strip_prefix("updated_at<") {
        return Ok(Filter::UpdatedBefore(tick(rest)?));
    }
    if let Some((name, rest)) = clause.split_once(" in ") {
        let field: Field = name.trim().parse()?;
        let inner = rest
            .trim()
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| QueryError::Parse(format!("expected `(v1,v2,..)` in {clause:?}")))?;
        let values = inner.split(',').map(value).collect::<Result<BTreeSet<_>, _>>()?;
        if field == Field::UpdatedAt {
            return Err(QueryError::Parse("updated_at supports only >= and <".into()));
        }
        return Ok(Filter::In { field, values });
    }
    if let Some((name, v)) = clause.split_once('=') {
        let field: Field = name.trim().parse()?;
        if field == Field::UpdatedAt {
            return Err(QueryError::Parse("updated_at supports only >= and <".into()));
        }
        return Ok(Filter::Eq {
            field,
            value: value(v)?,
        });
    }
    Err(QueryError::Parse(format!("unrecognized clause {clause:?}")))
}

pub fn parse_query(text: &str) -> Result<Query, QueryError> {
    let mut tenant: Option<TenantId> = None;
    let mut class = QueryClass::Adhoc;
    let mut rows = DEFAULT_PAGE_SIZE_ROWS;
    let mut filters = Vec::new();
    let mut join: Option<Vec<Filter>> = None;

    for clause in text.split(';').map(str::trim).filter(|c| !c.is_empty()) {
        if let Some(v) = clause.strip_prefix("tenant=") {
            tenant = Some(TenantId::new(value(v)?));
        } else if let Some(v) = clause.strip_prefix("class=") {
            class = v.trim().parse()?;
        } else if let Some(v) = clause.strip_prefix("rows=") {
            rows = v
                .trim()
                .parse()
                .ok()
                .filter(|&n: &u32| n > 0)
                .ok_or_else(|| QueryError::Parse(format!("rows must be a positive integer, got {v:?}")))?;
        } else if clause == "join=all" {
            join.get_or_insert_with(Vec::new);
        } else if let Some(rest) = clause.strip_prefix("join.") {
            join.get_or_insert_with(Vec::new).push(parse_filter(rest)?);
        } else {
            filters.push(parse_filter(clause)?);
        }
    }
    Ok(Query {
        tenant: tenant.ok_or_else(|| QueryError::Parse("missing tenant=".into()))?,
        filters,
        join,
        page_size_rows: rows,
        class,
    })
}

impl FromStr for Query {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_query(s)
    }
}

impl fmt::Display for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Filter::Eq { field, value } => write!(f, "{}={}", field.name(), value),
            Filter::In { field, values } => {
                write!(f, "{} in (", field.name())?;
                for (i, v) in values.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    f.write_str(v)?;
                }
                f.write_str(")")
            }
            Filter::UpdatedAtLeast(t) => write!(f, "updated_at>={t}"),
            Filter::UpdatedBefore(t) => write!(f, "updated_at<{t}"),
        }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "tenant={}; class={}; rows={}",
            self.tenant, self.class, self.page_size_rows
        )?;
        for filter in &self.filters {
            write!(f, "; {filter}")?;
        }
        match &self.join {
            Some(right) if right.is_empty() => f.write_str("; join=all")?,
            Some(right) => {
                for filter in right {
                    write!(f, "; join.{filter}")?;
                }
            }
            None => {}
        }
        Ok(())
    }
}
