//! Flat `key=value` config files. Command-line flags override file values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('-', "_").to_ascii_lowercase()
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!("config line {}: expected key=value", idx + 1)));
            };
            values.insert(normalize(key), value.trim().to_owned());
        }
        Ok(ConfigFile { values })
    }

    /// Rejects keys the current subcommand does not understand.
    pub fn check_keys(&self, known: &[&str]) -> Result<(), CliError> {
        match self.values.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(CliError::Usage(format!("unknown config key {k:?}"))),
            None => Ok(()),
        }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// `flag`, else the file value, else nothing.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Usage(format!("config key {key}: {e}")))
            })
            .transpose()
    }

    pub fn pick_or<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    pub fn path(&self, flag: Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.or_else(|| self.raw(key).map(PathBuf::from))
    }

    pub fn require_path(&self, flag: Option<PathBuf>, key: &str) -> Result<PathBuf, CliError> {
        self.path(flag, key)
            .ok_or_else(|| CliError::Usage(format!("missing required --{}", key.replace('_', "-"))))
    }
}
