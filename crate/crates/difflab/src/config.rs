//! Flat `section.key = value` configuration files.
//!
//! ```text
//! # comment
//! [model]
//! sigma = 1.0
//! [target]
//! kind = two_deltas
//! ```
//!
//! Every key must be consumed by the experiment that reads the file;
//! leftovers are reported as unknown keys.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    File { path: String, line: usize },
    Override,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line } => write!(f, "{path}:{line}"),
            Origin::Override => f.write_str("--set"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// `file:line`, `--set`, or just the file for missing keys.
    pub location: String,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.is_empty() {
            write!(f, "{}: {}", self.location, self.message)
        } else {
            write!(f, "{}: field `{}`: {}", self.location, self.field, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    origin: Origin,
}

#[derive(Debug)]
pub struct Config {
    source: String,
    base_dir: PathBuf,
    entries: BTreeMap<String, Entry>,
    used: Mutex<BTreeSet<String>>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            location: path.display().to_string(),
            field: String::new(),
            message: format!("cannot read config: {e}"),
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &path.display().to_string(), base)
    }

    /// `source` names the text in diagnostics; relative paths inside the
    /// config resolve against `base_dir`.
    pub fn parse(text: &str, source: &str, base_dir: PathBuf) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |field: &str, message: String| ConfigError {
                location: format!("{source}:{line}"),
                field: field.to_string(),
                message,
            };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err("", "unterminated section header".into()))?
                    .trim();
                if !valid_name(name) {
                    return Err(err("", format!("invalid section name '{name}'")));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err("", format!("expected `key = value`, got '{content}'")))?;
            let key = key.trim();
            if !valid_name(key) {
                return Err(err("", format!("invalid key '{key}'")));
            }
            if section.is_empty() {
                return Err(err(key, "key appears before any [section]".into()));
            }
            let full = format!("{section}.{key}");
            let entry = Entry {
                value: value.trim().to_string(),
                origin: Origin::File {
                    path: source.to_string(),
                    line,
                },
            };
            if entries.insert(full.clone(), entry).is_some() {
                return Err(err(&full, "duplicate key".into()));
            }
        }
        Ok(Self {
            source: source.to_string(),
            base_dir,
            entries,
            used: Mutex::new(BTreeSet::new()),
        })
    }

    /// Applies a `section.key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let err = |field: &str, message: &str| ConfigError {
            location: "--set".into(),
            field: field.to_string(),
            message: message.to_string(),
        };
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| err("", "expected section.key=value"))?;
        let key = key.trim();
        match key.split_once('.') {
            Some((s, k)) if valid_name(s) && valid_name(k) => {}
            _ => return Err(err(key, "expected a section.key name")),
        }
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.trim().to_string(),
                origin: Origin::Override,
            },
        );
        Ok(())
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn resolve_path(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// All entries as `key → value`, for the manifest.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        self.entries.iter().map(|(k, e)| (k.clone(), e.value.clone())).collect()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn raw(&self, key: &str) -> Option<&Entry> {
        let e = self.entries.get(key)?;
        self.used.lock().expect("config lock").insert(key.to_string());
        Some(e)
    }

    fn bad(&self, key: &str, entry: &Entry, message: String) -> ConfigError {
        ConfigError {
            location: entry.origin.to_string(),
            field: key.to_string(),
            message,
        }
    }

    pub fn missing(&self, key: &str) -> ConfigError {
        ConfigError {
            location: self.source.clone(),
            field: key.to_string(),
            message: "missing required field".into(),
        }
    }

    /// Error pinned to the location of `key` (or the file if absent).
    pub fn invalid(&self, key: &str, message: impl Into<String>) -> ConfigError {
        match self.entries.get(key) {
            Some(e) => self.bad(key, e, message.into()),
            None => ConfigError {
                location: self.source.clone(),
                field: key.to_string(),
                message: message.into(),
            },
        }
    }

    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        let Some(e) = self.raw(key) else { return Ok(None) };
        e.value
            .parse()
            .map(Some)
            .map_err(|_| self.bad(key, e, format!("cannot parse '{}' as {}", e.value, type_label::<T>())))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        self.opt(key)?.ok_or_else(|| self.missing(key))
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    pub fn opt_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError> {
        let Some(e) = self.raw(key) else { return Ok(None) };
        e.value
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| self.bad(key, e, format!("cannot parse '{}' as {}", s.trim(), type_label::<T>())))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    pub fn list_or<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>, ConfigError> {
        Ok(self.opt_list(key)?.unwrap_or(default))
    }

    /// Rows separated by `;`, entries by `,`.
    pub fn opt_rows(&self, key: &str) -> Result<Option<Vec<Vec<f64>>>, ConfigError> {
        let Some(e) = self.raw(key) else { return Ok(None) };
        let mut rows = Vec::new();
        for row in e.value.split(';').map(str::trim).filter(|r| !r.is_empty()) {
            let parsed = row
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| self.bad(key, e, format!("cannot parse row '{row}' as numbers")))?;
            rows.push(parsed);
        }
        Ok(Some(rows))
    }

    /// Fails on the first key no reader asked for.
    pub fn finish(&self) -> Result<(), ConfigError> {
        let used = self.used.lock().expect("config lock");
        match self.entries.iter().find(|(k, _)| !used.contains(*k)) {
            Some((k, e)) => Err(self.bad(k, e, "unknown key".into())),
            None => Ok(()),
        }
    }
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn type_label<T>() -> &'static str {
    let name = std::any::type_name::<T>();
    match name {
        "f64" => "a number",
        "usize" | "u64" | "u32" => "a non-negative integer",
        "bool" => "true or false",
        _ => "text",
    }
}
