//! Resolution of settings from flags, a `key=value` config file and built-in
//! defaults, in that order of precedence. Keys are the long flag names.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv;
use crate::manifest::RESERVED_PREFIX;

/// Environment variable naming a config file used when `--config` is absent.
pub const CONFIG_ENV: &str = "WXVAE_CONFIG";

/// A value that can live in a config file.
pub trait Setting: Sized {
    fn parse_setting(s: &str) -> std::result::Result<Self, String>;
    fn render_setting(&self) -> String;
}

macro_rules! display_setting {
    ($($t:ty),*) => {$(
        impl Setting for $t {
            fn parse_setting(s: &str) -> std::result::Result<Self, String> {
                <$t as FromStr>::from_str(s).map_err(|e| e.to_string())
            }

            fn render_setting(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

display_setting!(usize, u64, f64, bool, String);

impl Setting for PathBuf {
    fn parse_setting(s: &str) -> std::result::Result<Self, String> {
        if s.is_empty() {
            return Err("empty path".to_owned());
        }
        Ok(PathBuf::from(s))
    }

    fn render_setting(&self) -> String {
        self.display().to_string()
    }
}

#[derive(Debug, Default)]
pub struct Settings {
    file: BTreeMap<String, String>,
    source: Option<PathBuf>,
    consulted: BTreeSet<String>,
    resolved: Vec<(String, String)>,
}

impl Settings {
    /// Reads `explicit`, else the file named by [`CONFIG_ENV`], else nothing.
    pub fn load(explicit: Option<&Path>) -> Result<Self> {
        let path = match explicit {
            Some(p) => Some(p.to_owned()),
            None => std::env::var_os(CONFIG_ENV)
                .filter(|v| !v.is_empty())
                .map(PathBuf::from),
        };
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let pairs = kv::parse(&text)
            .map_err(|m| Error::Usage(format!("config {}: {m}", path.display())))?;
        let file = pairs
            .into_iter()
            .filter(|(k, _)| !k.starts_with(RESERVED_PREFIX))
            .collect();
        Ok(Self {
            file,
            source: Some(path),
            ..Self::default()
        })
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        Self {
            file: pairs.into_iter().collect(),
            ..Self::default()
        }
    }

    fn lookup<T: Setting>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        self.consulted.insert(key.to_owned());
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(raw) => {
                let from = self
                    .source
                    .as_ref()
                    .map_or_else(|| "config".to_owned(), |p| p.display().to_string());
                T::parse_setting(raw)
                    .map(Some)
                    .map_err(|e| Error::Usage(format!("{from}: key {key}: {raw:?}: {e}")))
            }
        }
    }

    fn record<T: Setting>(&mut self, key: &str, v: &T) {
        self.resolved.push((key.to_owned(), v.render_setting()));
    }

    pub fn value<T: Setting>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        let v = self.lookup(key, flag)?.unwrap_or(default);
        self.record(key, &v);
        Ok(v)
    }

    pub fn required<T: Setting>(&mut self, key: &str, flag: Option<T>) -> Result<T> {
        let v = self
            .lookup(key, flag)?
            .ok_or_else(|| Error::Usage(format!("missing required setting --{key}")))?;
        self.record(key, &v);
        Ok(v)
    }

    pub fn optional<T: Setting>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        let v = self.lookup(key, flag)?;
        if let Some(v) = &v {
            self.record(key, v);
        }
        Ok(v)
    }

    /// Whether `key` is set by the config file.
    pub fn in_file(&self, key: &str) -> bool {
        self.file.contains_key(key)
    }

    /// Marks a key as handled without reading it.
    pub fn skip(&mut self, key: &str) {
        self.consulted.insert(key.to_owned());
    }

    /// Every setting in the order it was resolved.
    pub fn resolved(&self) -> &[(String, String)] {
        &self.resolved
    }

    /// Config-file keys the current subcommand never looked at.
    pub fn unused(&self) -> Vec<&str> {
        self.file
            .keys()
            .filter(|k| !self.consulted.contains(*k))
            .map(String::as_str)
            .collect()
    }
}
