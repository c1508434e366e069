//! `key = value` run configuration files.
//!
//! Precedence: command-line flag, then config file, then built-in default.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

/// Keys a config file may set. Names follow the long flags with `-`
/// replaced by `_`.
pub const KNOWN_KEYS: &[&str] = &[
    "alpha",
    "beta_d",
    "beta_min",
    "data_range",
    "eta",
    "grid",
    "k",
    "method",
    "min_support",
    "n",
    "objective",
    "schedule",
    "seed",
    "sigma_max",
    "sigma_min",
    "steps",
    "t_min",
    "threads",
    "time_grid",
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FileOverlay {
    values: BTreeMap<String, String>,
}

impl FileOverlay {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        let mut unknown = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!("config line {}: expected `key = value`, got {raw:?}", i + 1)));
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(CliError::Usage(format!("config line {}: empty key or value", i + 1)));
            }
            if !KNOWN_KEYS.contains(&key) {
                unknown.push(key.to_string());
            }
            values.insert(key.to_string(), value.to_string());
        }
        if !unknown.is_empty() {
            return Err(CliError::Usage(format!("unknown config keys: {}", unknown.join(", "))));
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Flag value if given, else the file's value, else `default`.
    pub fn resolve<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.get(key) {
            Some(raw) => {
                raw.parse().map_err(|e| CliError::Usage(format!("config key `{key}`: cannot parse {raw:?}: {e}")))
            }
            None => Ok(default),
        }
    }

    /// Like [`resolve`](Self::resolve) for settings with no default.
    pub fn resolve_opt<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.get(key) {
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key `{key}`: cannot parse {raw:?}: {e}"))),
            None => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let o = FileOverlay::parse("").unwrap();
        assert_eq!(o.resolve(None, "eta", 0.5).unwrap(), 0.5);
        let o = FileOverlay::parse("# only a comment\n\n").unwrap();
        assert_eq!(o, FileOverlay::default());
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let o = FileOverlay::parse("eta = 0.01\nalpha=0.8 # trailing comment\n").unwrap();
        assert_eq!(o.resolve(Some(0.02), "eta", 0.1).unwrap(), 0.02);
        assert_eq!(o.resolve(None, "eta", 0.1).unwrap(), 0.01);
        assert_eq!(o.resolve(None, "alpha", 0.9).unwrap(), 0.8);
        assert_eq!(o.resolve(None, "seed", 7u64).unwrap(), 7);
    }

    #[test]
    fn errors_name_line_and_keys() {
        let e = FileOverlay::parse("eta = 0.1\nnonsense\n").unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
        let e = FileOverlay::parse("etaa = 1\nbogus = 2\n").unwrap_err().to_string();
        assert!(e.contains("etaa") && e.contains("bogus"), "{e}");
        let o = FileOverlay::parse("seed = abc").unwrap();
        assert!(o.resolve::<u64>(None, "seed", 0).is_err());
    }
}
