//! Flat `key = value` configuration files. Every key is also a command-line
//! flag of the same name, and flags win.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

/// Keys accepted in a config file.
pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "output-dir",
    "threads",
    "deterministic",
    "checkins",
    "social",
    "meta",
    "popularity",
    "original",
    "obfuscated",
    "walks",
    "embedding",
    "scores",
    "min-checkins",
    "min-distinct-locations",
    "percentile-low",
    "percentile-high",
    "grid-deg",
    "n-users",
    "n-locations",
    "n-communities",
    "checkins-per-user",
    "intra-friend-prob",
    "noise-prob",
    "walk-times",
    "walk-length",
    "dim",
    "window",
    "negatives",
    "learning-rate",
    "epochs",
    "unigram-power",
    "measure",
    "model",
    "mechanism",
    "rho",
    "walk-steps",
    "levels",
    "common-locations",
    "seeds",
    "grid-list",
    "min-checkins-list",
    "rho-list",
    "levels-list",
    "baselines",
    "name",
];

#[derive(Debug, Default)]
pub struct ConfigFile {
    path: Option<PathBuf>,
    entries: BTreeMap<String, (String, usize)>,
}

impl ConfigFile {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("--config: cannot read {}", path.display()))?;
        Self::parse(&text, Some(path))
    }

    pub fn parse(text: &str, path: Option<&Path>) -> Result<Self> {
        let shown = path.map_or("<config>".to_string(), |p| p.display().to_string());
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{shown} line {}: expected `key = value`", i + 1))?;
            let key = k.trim().replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!("{shown} line {}: unknown key `{}`", i + 1, k.trim());
            }
            if entries.insert(key.clone(), (v.trim().to_string(), i + 1)).is_some() {
                bail!("{shown} line {}: duplicate key `{key}`", i + 1);
            }
        }
        Ok(ConfigFile {
            path: path.map(Path::to_path_buf),
            entries,
        })
    }

    fn shown(&self) -> String {
        self.path
            .as_ref()
            .map_or("<config>".to_string(), |p| p.display().to_string())
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        debug_assert!(KNOWN_KEYS.contains(&key), "{key}");
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("{} line {line}: key `{key}`: invalid value `{v}`: {e}", self.shown())),
        }
    }

    pub fn get_list<T>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse()
                        .map_err(|e| anyhow!("{} line {line}: key `{key}`: invalid item `{x}`: {e}", self.shown()))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// The flag value if given, else the config value.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    /// Like [`pick`](Self::pick) with a default.
    pub fn value<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    pub fn list<T>(&self, flag: Option<Vec<T>>, key: &str) -> Result<Option<Vec<T>>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get_list(key),
        }
    }

    /// A required path, naming the flag when missing.
    pub fn path(&self, flag: Option<PathBuf>, key: &str) -> Result<PathBuf> {
        self.pick(flag, key)?
            .ok_or_else(|| anyhow!("missing --{key} (or `{key}` in the config file)"))
    }
}
