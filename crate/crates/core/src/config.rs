//! Plain-text configuration files.
//!
//! ```text
//! # comment
//! [section]
//! key = value
//! ```
//!
//! Blank lines and lines starting with `#` or `;` are ignored. Keys before the
//! first header belong to the unnamed section `""`. Section names and keys
//! may repeat nowhere.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }

    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn entry(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ini {
    pub sections: Vec<Section>,
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut sections: Vec<Section> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') || s.starts_with(';') {
                continue;
            }
            if let Some(rest) = s.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at(line, "unterminated section header"))?
                    .trim();
                if name.is_empty() {
                    return Err(ConfigError::at(line, "empty section name"));
                }
                if sections.iter().any(|x| x.name == name) {
                    return Err(ConfigError::at(line, format!("section [{name}] repeated")));
                }
                sections.push(Section {
                    name: name.to_string(),
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| ConfigError::at(line, format!("expected key = value, got {s:?}")))?;
            let key = k.trim();
            if key.is_empty() {
                return Err(ConfigError::at(line, "empty key"));
            }
            if sections.is_empty() {
                sections.push(Section {
                    name: String::new(),
                    line,
                    entries: Vec::new(),
                });
            }
            let sec = sections.last_mut().expect("section");
            if sec.entry(key).is_some() {
                return Err(ConfigError::at(
                    line,
                    format!("key {key:?} repeated in [{}]", sec.name),
                ));
            }
            sec.entries.push(Entry {
                key: key.to_string(),
                value: v.trim().to_string(),
                line,
            });
        }
        Ok(Self { sections })
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn has(&self, name: &str) -> bool {
        self.section(name).is_some()
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<&Entry> {
        self.section(section)?.entry(key)
    }

    /// Parses `key` of `section` when present.
    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.raw(section, key) {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|err| {
                ConfigError::at(e.line, format!("[{section}] {key} = {:?}: {err}", e.value))
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(
        &self,
        section: &str,
        key: &str,
    ) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let Some(e) = self.raw(section, key) else {
            return Ok(None);
        };
        e.value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|err| {
                    ConfigError::at(e.line, format!("[{section}] {key}: {s:?}: {err}"))
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    /// Rejects keys of `section` outside `known`.
    pub fn check_keys(&self, section: &str, known: &[&str]) -> Result<(), ConfigError> {
        let Some(sec) = self.section(section) else {
            return Ok(());
        };
        match sec
            .entries
            .iter()
            .find(|e| !known.contains(&e.key.as_str()))
        {
            Some(e) => Err(ConfigError::at(
                e.line,
                format!("unknown key {:?} in [{section}]", e.key),
            )),
            None => Ok(()),
        }
    }

    /// Rejects sections outside `known`.
    pub fn check_sections(&self, known: &BTreeSet<String>) -> Result<(), ConfigError> {
        match self.sections.iter().find(|s| !known.contains(&s.name)) {
            Some(s) => Err(ConfigError::at(
                s.line,
                format!("unknown section [{}]", s.name),
            )),
            None => Ok(()),
        }
    }
}

impl fmt::Display for Ini {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.sections.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            if !s.name.is_empty() {
                writeln!(f, "[{}]", s.name)?;
            }
            for e in &s.entries {
                writeln!(f, "{} = {}", e.key, e.value)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_values() {
        let ini =
            Ini::parse("top = 1\n# note\n[a]\nx = 2.5\nlist = 1, 2,3\n\n[b]\nname = hello world\n")
                .unwrap();
        assert_eq!(ini.get::<u32>("", "top").unwrap(), Some(1));
        assert_eq!(ini.get::<f64>("a", "x").unwrap(), Some(2.5));
        assert_eq!(
            ini.get_list::<u32>("a", "list").unwrap(),
            Some(vec![1, 2, 3])
        );
        assert_eq!(
            ini.get::<String>("b", "name").unwrap().as_deref(),
            Some("hello world")
        );
        assert_eq!(ini.get::<u32>("b", "missing").unwrap(), None);
        let again = Ini::parse(&ini.to_string()).unwrap();
        assert_eq!(again.get::<f64>("a", "x").unwrap(), Some(2.5));
        assert_eq!(again.get::<u32>("", "top").unwrap(), Some(1));
    }

    #[test]
    fn errors_carry_lines() {
        assert_eq!(Ini::parse("[a]\nnonsense\n").unwrap_err().line, Some(2));
        assert_eq!(Ini::parse("[a]\nx=1\nx=2\n").unwrap_err().line, Some(3));
        assert_eq!(Ini::parse("[a]\n[a]\n").unwrap_err().line, Some(2));
        let ini = Ini::parse("[a]\nx = nope\ny = 1\n").unwrap();
        assert_eq!(ini.get::<u32>("a", "x").unwrap_err().line, Some(2));
        assert_eq!(ini.check_keys("a", &["x"]).unwrap_err().line, Some(3));
    }
}
