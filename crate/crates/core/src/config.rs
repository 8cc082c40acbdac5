//! Flat `key = value` configuration files.
//!
//! Keys mirror command-line flag names; `-` and `_` are interchangeable.
//! Blank lines and lines starting with `#` are ignored, as is anything
//! after a `#` that follows whitespace.

use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    entries: IndexMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim()
        .trim_start_matches("--")
        .replace('-', "_")
        .to_ascii_lowercase()
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = IndexMap::new();
        let mut offset = 0u64;
        for (lineno, raw) in text.lines().enumerate() {
            let line_offset = offset;
            offset += raw.len() as u64 + 1;
            let line = match raw.find(" #").or_else(|| raw.find("\t#")) {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                offset: line_offset,
                reason: format!("line {}: expected `key = value`", lineno + 1),
            })?;
            let key = normalize(k);
            if key.is_empty() {
                return Err(Error::Parse {
                    offset: line_offset,
                    reason: format!("line {}: empty key", lineno + 1),
                });
            }
            let value = v.trim().trim_matches('"').to_string();
            if entries.insert(key.clone(), value).is_some() {
                return Err(Error::Parse {
                    offset: line_offset,
                    reason: format!("line {}: duplicate key `{key}`", lineno + 1),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Raw value for the first of `keys` that is present.
    pub fn get(&self, keys: &[&str]) -> Option<&str> {
        keys.iter()
            .find_map(|k| self.entries.get(&normalize(k)))
            .map(String::as_str)
    }

    /// Parsed value for the first of `keys` that is present.
    pub fn get_parsed<T: std::str::FromStr>(&self, keys: &[&str]) -> Result<Option<T>> {
        let Some(raw) = self.get(keys) else {
            return Ok(None);
        };
        raw.parse().map(Some).map_err(|_| Error::Parse {
            offset: 0,
            reason: format!("config key `{}`: cannot parse `{raw}`", keys[0]),
        })
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
