//! Flat `key = value` configuration files. Command-line flags win over file
//! entries, which win over built-in defaults.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use anyhow::Result;

use crate::io::{open, usage};

#[derive(Debug, Default)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

fn normalize_key(key: &str) -> String {
    key.trim().replace('_', "-")
}

impl ConfigFile {
    pub fn load(path: &Path, known: &[&str]) -> Result<Self> {
        let reader = open(path)?;
        let mut entries = BTreeMap::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(usage(format!("{}:{}: expected key = value", path.display(), n + 1)));
            };
            let key = normalize_key(key);
            if !known.contains(&key.as_str()) {
                return Err(usage(format!("{}:{}: unknown key {key:?}", path.display(), n + 1)));
            }
            entries.insert(key, value.trim().to_string());
        }
        Ok(ConfigFile { entries })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// `flag`, else the parsed file entry, else `None`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.raw(key) {
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| usage(format!("config key {key}: invalid value {v:?}: {e}"))),
            None => Ok(None),
        }
    }

    /// Comma-separated list variant of [`ConfigFile::pick`].
    pub fn pick_list<T: FromStr>(&self, flag: Option<Vec<T>>, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.raw(key) {
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|e| usage(format!("config key {key}: invalid value {s:?}: {e}")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
            None => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn flags_override_file_entries() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# defaults\nlambda = 10\nbatch_size=64\n\nlambda-grid = 1, 10,100").unwrap();
        let cfg = ConfigFile::load(f.path(), &["lambda", "batch-size", "lambda-grid"]).unwrap();
        assert_eq!(cfg.pick::<f64>(None, "lambda").unwrap(), Some(10.0));
        assert_eq!(cfg.pick(Some(3.0), "lambda").unwrap(), Some(3.0));
        assert_eq!(cfg.pick::<usize>(None, "batch-size").unwrap(), Some(64));
        assert_eq!(cfg.pick::<u64>(None, "seed").unwrap(), None);
        assert_eq!(cfg.pick_list::<f64>(None, "lambda-grid").unwrap(), Some(vec![1.0, 10.0, 100.0]));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "lamda = 10").unwrap();
        assert!(ConfigFile::load(f.path(), &["lambda"]).is_err());
    }
}
