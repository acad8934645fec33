use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Flat `key = value` configuration. `#` starts a comment line; values are
/// trimmed and may contain spaces. Keys outside the allowed set and repeated
/// keys are errors.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlatConfig {
    entries: Vec<(String, String)>,
}

fn valid_key(k: &str) -> bool {
    !k.is_empty() && k.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

impl FlatConfig {
    pub fn parse(text: &str, allowed: &[&str]) -> Result<Self> {
        let mut entries: Vec<(String, String)> = Vec::new();
        let mut offset = 0u64;
        for line in text.split_inclusive('\n') {
            let body = line.trim_end_matches(['\n', '\r']).trim();
            let err = |msg: String| Error::Parse { offset, msg };
            if !body.is_empty() && !body.starts_with('#') {
                let (k, v) = body
                    .split_once('=')
                    .ok_or_else(|| err(format!("expected `key = value`, got {body:?}")))?;
                let (k, v) = (k.trim(), v.trim());
                if !valid_key(k) {
                    return Err(err(format!("bad key {k:?}")));
                }
                if !allowed.contains(&k) {
                    return Err(err(format!("unknown key {k:?}; allowed: {}", allowed.join(", "))));
                }
                if entries.iter().any(|(e, _)| e == k) {
                    return Err(err(format!("key {k:?} given twice")));
                }
                if v.contains('\n') {
                    return Err(err("multi-line value".into()));
                }
                entries.push((k.to_string(), v.to_string()));
            }
            offset += line.len() as u64;
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>, allowed: &[&str]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text, allowed)
    }

    pub fn set(&mut self, key: &str, value: impl fmt::Display) {
        let v = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = v,
            None => self.entries.push((key.to_string(), v)),
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("cannot parse {key} = {v:?}"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| Error::Config(format!("missing required key {key:?}")))
    }

    /// Comma-separated list value.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("cannot parse list item {p:?} of {key}")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }
}

impl fmt::Display for FlatConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}
