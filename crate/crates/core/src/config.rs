//! Flat `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Keys outside the caller's
//! allowed set and repeated keys are errors.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, (String, usize)>,
    file: String,
}

impl KeyValues {
    pub fn parse(text: &str, file: &str, allowed: &[&str]) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                file: file.to_string(),
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err("expected `key = value`".into()))?;
            let key = key.trim();
            if !allowed.contains(&key) {
                return Err(parse_err(format!("unknown key {key:?}")));
            }
            if entries
                .insert(key.to_string(), (value.trim().to_string(), i + 1))
                .is_some()
            {
                return Err(parse_err(format!("duplicate key {key:?}")));
            }
        }
        Ok(KeyValues {
            entries,
            file: file.to_string(),
        })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((value, line)) => value.parse().map(Some).map_err(|_| Error::Parse {
                file: self.file.clone(),
                line: *line,
                message: format!("invalid value {value:?} for {key}"),
            }),
        }
    }

    /// Overwrites `slot` when `key` is present.
    pub fn apply<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }
}
