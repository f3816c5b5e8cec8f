//! `key = value` configuration files.
//!
//! One setting per line; `#` starts a comment; blank lines are ignored.
//! Keys are the long flag names of the command, with `-` or `_`
//! interchangeable. Flags given on the command line override the file, and
//! a key the command does not know is an error.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::io::read_text;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    path: PathBuf,
    /// key -> (value, line number)
    entries: BTreeMap<String, (String, usize)>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl ConfigFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = i + 1;
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("{}:{lineno}: expected `key = value`, found `{line}`", path.display()))
            })?;
            let key = normalize(k);
            if key.is_empty() {
                return Err(Error::config(format!("{}:{lineno}: empty key", path.display())));
            }
            if let Some((_, first)) = entries.insert(key.clone(), (v.trim().to_string(), lineno)) {
                return Err(Error::config(format!(
                    "{}:{lineno}: `{key}` already set on line {first}",
                    path.display()
                )));
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, path)
    }
}

/// Resolves each setting from its flag, else the config file, and tracks
/// which file keys were used.
#[derive(Debug, Default)]
pub struct Settings {
    file: Option<ConfigFile>,
}

impl Settings {
    pub fn new(config: Option<&Path>) -> Result<Self> {
        Ok(Self {
            file: config.map(ConfigFile::load).transpose()?,
        })
    }

    pub fn from_file(file: ConfigFile) -> Self {
        Self { file: Some(file) }
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let from_file = self.file.as_mut().and_then(|f| {
            let path = f.path.clone();
            f.entries.remove(&normalize(key)).map(|e| (path, e))
        });
        if flag.is_some() {
            return Ok(flag);
        }
        match from_file {
            None => Ok(None),
            Some((path, (value, line))) => value.parse().map(Some).map_err(|e| {
                Error::config(format!("{}:{line}: bad value `{value}` for `{key}`: {e}", path.display()))
            }),
        }
    }

    pub fn get_or<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.get(key, flag)?.unwrap_or(default))
    }

    /// Errors on any file key that no [`Self::get`] call asked for.
    pub fn finish(self) -> Result<()> {
        match self.file {
            Some(f) if !f.entries.is_empty() => {
                let keys: Vec<String> = f
                    .entries
                    .iter()
                    .map(|(k, (_, line))| format!("`{k}` (line {line})"))
                    .collect();
                Err(Error::config(format!("{}: unknown key {}", f.path.display(), keys.join(", "))))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(text: &str) -> Settings {
        Settings::from_file(ConfigFile::parse(text, Path::new("c.conf")).unwrap())
    }

    #[test]
    fn flags_override_file_and_defaults_fill_in() {
        let mut s = settings("# comment\nsteps = 10\nlr=0.5  # trailing\n\nembed-dim = 4\n");
        assert_eq!(s.get_or("steps", Some(3usize), 1).unwrap(), 3);
        assert_eq!(s.get_or("lr", None, 0.1).unwrap(), 0.5);
        assert_eq!(s.get_or::<usize>("embed_dim", None, 16).unwrap(), 4);
        assert_eq!(s.get_or("seed", None, 9u64).unwrap(), 9);
        s.finish().unwrap();
    }

    #[test]
    fn unknown_and_duplicate_keys_are_rejected() {
        let s = settings("stepz = 10\n");
        assert!(s.finish().unwrap_err().to_string().contains("stepz"));
        assert!(ConfigFile::parse("a = 1\na = 2\n", Path::new("c")).is_err());
        assert!(ConfigFile::parse("just words\n", Path::new("c")).is_err());
    }

    #[test]
    fn bad_value_names_the_key() {
        let mut s = settings("steps = many\n");
        let e = s.get::<usize>("steps", None).unwrap_err();
        assert!(e.to_string().contains("steps"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }
}
