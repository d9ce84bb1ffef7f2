//! Flat `key = value` configuration files.
//!
//! One entry per line; blank lines and lines starting with `#` are ignored.
//! Keys must be unique, and every key must be consumed by the command that
//! reads the file: a leftover key is reported as unknown.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("config line {}: expected key = value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(CliError::usage(format!("config line {}: empty key or value", n + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(CliError::usage(format!("config key {k:?} given twice")));
            }
        }
        Ok(Self { entries })
    }

    /// Removes and parses `key` if present.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::usage(format!("config key {key}: cannot parse {v:?}: {e}"))),
        }
    }

    /// Overwrites `slot` when `key` is present.
    pub fn take_into<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<(), CliError>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    /// Removes and parses a comma-separated list.
    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| {
                    let s = s.trim();
                    s.parse()
                        .map_err(|e| CliError::usage(format!("config key {key}: cannot parse {s:?}: {e}")))
                })
                .collect::<Result<Vec<T>, _>>()
                .map(Some),
        }
    }

    /// Fails if any key was not consumed.
    pub fn finish(self) -> Result<(), CliError> {
        match self.entries.keys().next() {
            None => Ok(()),
            Some(_) => {
                let keys: Vec<&str> = self.entries.keys().map(String::as_str).collect();
                Err(CliError::usage(format!("unknown config keys: {}", keys.join(", "))))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_consumes() {
        let mut kv = KeyValues::parse("# comment\nepochs = 3\n\nkinds = linear, attention\n").unwrap();
        assert_eq!(kv.take::<usize>("epochs").unwrap(), Some(3));
        assert_eq!(
            kv.take_list::<String>("kinds").unwrap().unwrap(),
            vec!["linear".to_string(), "attention".to_string()]
        );
        assert_eq!(kv.take::<usize>("missing").unwrap(), None);
        kv.finish().unwrap();
    }

    #[test]
    fn rejects_bad_input() {
        assert!(KeyValues::parse("a = 1\na = 2\n").is_err());
        assert!(KeyValues::parse("novalue\n").is_err());
        assert!(KeyValues::parse("a =\n").is_err());
        let mut kv = KeyValues::parse("epochs = x\n").unwrap();
        assert!(kv.take::<usize>("epochs").is_err());
        let kv = KeyValues::parse("epohcs = 3\n").unwrap();
        assert!(kv.finish().is_err());
    }
}
