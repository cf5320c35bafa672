//! Plain-text `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are dotted
//! (`corpus.seed`, `engine.values_per_candidate`) so a single file can carry
//! every section; each settings type reads the keys under its own prefix.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("invalid value for `{key}`: {value:?} ({reason})")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
}

/// Ordered key/value map parsed from a config file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            cfg.set_assignment(line).map_err(|_| ConfigError::Syntax {
                line: idx + 1,
                text: raw.to_owned(),
            })?;
        }
        Ok(cfg)
    }

    /// Applies one `key=value` assignment (also used for CLI overrides).
    pub fn set_assignment(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: assignment.to_owned(),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line: 0,
                text: assignment.to_owned(),
            });
        }
        self.entries.insert(key.to_owned(), value.trim().to_owned());
        Ok(())
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses `key` if present, leaving `target` untouched otherwise.
    pub fn read<T>(&self, key: &str, target: &mut T) -> Result<(), ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(raw) = self.get(key) {
            *target = raw.parse::<T>().map_err(|e| ConfigError::InvalidValue {
                key: key.to_owned(),
                value: raw.to_owned(),
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Rejects keys under `prefix` that are not in `known`.
    pub fn check_known(&self, prefix: &str, known: &[&str]) -> Result<(), ConfigError> {
        for key in self.keys() {
            if let Some(rest) = key.strip_prefix(prefix) {
                if !known.contains(&rest) {
                    return Err(ConfigError::UnknownKey(key.to_owned()));
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

pub(crate) fn invalid(key: &str, value: impl ToString, reason: &str) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_owned(),
        value: value.to_string(),
        reason: reason.to_owned(),
    }
}
