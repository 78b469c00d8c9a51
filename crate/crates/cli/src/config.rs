//! Flat `key = value` run configuration. Blank lines and `#` comments are
//! ignored; unknown keys are rejected so typos do not silently fall back to
//! defaults. Command-line flags take precedence over file values.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CliError, Result};

pub const KNOWN_KEYS: &[&str] = &[
    // synth
    "mode",
    "count",
    "seed",
    "size",
    "density",
    "intensity",
    "beta",
    "airlight",
    "hq_dir",
    "depth_dir",
    "split",
    // train
    "model",
    "epochs",
    "batch_size",
    "patch",
    "crops_per_image",
    "lr",
    "lr_decay",
    "weight_decay",
    "alpha",
    "depth",
    "width",
    "blocks",
    "growth",
    "layers_per_block",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(CliError::Config(format!("line {}: unknown key {key:?}", n + 1)));
            }
            if values.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key {key:?}", n + 1)));
            }
        }
        Ok(RunConfig { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// `flag` if given, else the parsed file value, else `None`.
    pub fn resolve<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.get_str(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Config(format!("{key} = {v:?}: {e}")))
            })
            .transpose()
    }

    pub fn resolve_or<T: FromStr>(&self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.resolve(key, flag)?.unwrap_or(default))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_overrides() {
        let cfg = RunConfig::parse("# comment\nepochs = 5\n\nlr=0.01\n").unwrap();
        assert_eq!(cfg.resolve_or::<usize>("epochs", None, 30).unwrap(), 5);
        assert_eq!(cfg.resolve_or::<usize>("epochs", Some(2), 30).unwrap(), 2);
        assert_eq!(cfg.resolve_or::<f32>("lr", None, 1e-3).unwrap(), 0.01);
        assert_eq!(cfg.resolve_or::<f32>("alpha", None, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(RunConfig::parse("epochz = 3").is_err());
        assert!(RunConfig::parse("epochs 3").is_err());
        assert!(RunConfig::parse("epochs = 3\nepochs = 4").is_err());
        let cfg = RunConfig::parse("epochs = many").unwrap();
        assert!(cfg.resolve::<usize>("epochs", None).is_err());
    }
}
