//! Key-value config files.
//!
//! Format: one `key = value` per line, `#` comments. Keys mirror the long
//! flag names of the subcommand. Precedence is flags > config file >
//! defaults, and unknown keys are rejected up front.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use vgslab_core::{Error, Result};

#[derive(Debug, Default)]
pub struct ConfigFile {
    map: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<ConfigFile> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::contract(format!("config {}: {e}", path.display())))?;
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::contract(format!(
                    "config {} line {}: expected key = value",
                    path.display(),
                    lineno + 1
                ))
            })?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(ConfigFile { map })
    }

    /// Reject keys outside the subcommand's vocabulary.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for key in self.map.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::contract(format!(
                    "config: unknown key '{key}' (allowed: {})",
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }

    /// flag > config > default.
    pub fn resolve<T: FromStr + Copy>(&self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.map.get(key) {
            None => Ok(default),
            Some(raw) => raw.parse::<T>().map_err(|_| {
                Error::contract(format!("config: key '{key}' has unparsable value '{raw}'"))
            }),
        }
    }

    pub fn resolve_string(&self, key: &str, flag: Option<String>, default: &str) -> String {
        flag.or_else(|| self.map.get(key).cloned())
            .unwrap_or_else(|| default.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_is_flag_config_default() {
        let dir = std::env::temp_dir().join("vgslab_cfg_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.conf");
        std::fs::write(&path, "# comment\nepochs = 12\nmargin=0.3\n").unwrap();
        let cfg = ConfigFile::load(Some(&path)).unwrap();
        cfg.check_keys(&["epochs", "margin", "lr"]).unwrap();
        assert_eq!(cfg.resolve::<usize>("epochs", None, 32).unwrap(), 12);
        assert_eq!(cfg.resolve::<usize>("epochs", Some(5), 32).unwrap(), 5);
        assert_eq!(cfg.resolve::<f64>("lr", None, 1e-3).unwrap(), 1e-3);
        assert_eq!(cfg.resolve::<f64>("margin", None, 0.2).unwrap(), 0.3);
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = std::env::temp_dir().join("vgslab_cfg_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.conf");
        std::fs::write(&path, "no_such_knob = 1\n").unwrap();
        let cfg = ConfigFile::load(Some(&path)).unwrap();
        assert!(cfg.check_keys(&["epochs"]).is_err());
    }
}
