//! `key=value` text used by config files, manifests, provenance sidecars and
//! the checkpoint header. Blank lines and lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

/// Parsed pairs in file order. Errors name the 1-based line.
pub fn parse(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(format!("line {}: expected key=value, got {line:?}", i + 1));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(format!("line {}: empty key", i + 1));
        }
        if let Some(first) = seen.insert(k.to_owned(), i + 1) {
            return Err(format!(
                "line {}: key {k:?} already set on line {first}",
                i + 1
            ));
        }
        out.push((k.to_owned(), v.to_owned()));
    }
    Ok(out)
}

pub fn render(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

/// Takes typed fields out of a parsed block and reports leftovers.
pub struct Fields {
    map: BTreeMap<String, String>,
}

impl Fields {
    pub fn new(pairs: Vec<(String, String)>) -> Self {
        Self {
            map: pairs.into_iter().collect(),
        }
    }

    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<T, String>
    where
        T::Err: Display,
    {
        let v = self
            .map
            .remove(key)
            .ok_or_else(|| format!("missing key {key}"))?;
        v.parse()
            .map_err(|e| format!("key {key}: cannot parse {v:?}: {e}"))
    }

    pub fn finish(self) -> Result<(), String> {
        match self.map.keys().next() {
            Some(k) => Err(format!("unknown key {k}")),
            None => Ok(()),
        }
    }
}
