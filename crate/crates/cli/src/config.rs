//! Layered run configuration: schema defaults, then an optional config
//! file, then command-line flags.
//!
//! The file format is flat `key = value` lines grouped under `[section]`
//! headers. Blank lines and lines starting with `#` are ignored. A key
//! before any header is looked up by name across the command's sections.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeySpec {
    pub section: &'static str,
    pub key: &'static str,
    /// `None` means the key is optional (or required, checked by the command).
    pub default: Option<&'static str>,
}

pub const fn key(section: &'static str, key: &'static str, default: Option<&'static str>) -> KeySpec {
    KeySpec { section, key, default }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: String,
    schema: Vec<KeySpec>,
    values: Vec<Option<String>>,
}

/// One `key = value` entry read from a config file.
#[derive(Clone, Debug, PartialEq)]
pub struct FileEntry {
    pub line: usize,
    pub section: Option<String>,
    pub key: String,
    pub value: String,
}

pub fn parse_config_text(text: &str) -> CliResult<Vec<FileEntry>> {
    let mut section = None;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| CliError::usage(format!("config line {}: malformed section header", idx + 1)))?;
            section = Some(name.to_string());
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected `key = value`", idx + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(CliError::usage(format!("config line {}: empty key", idx + 1)));
        }
        let v = v.trim();
        let v = v
            .strip_prefix('"')
            .and_then(|s| s.strip_suffix('"'))
            .unwrap_or(v);
        out.push(FileEntry {
            line: idx + 1,
            section: section.clone(),
            key: k.to_string(),
            value: v.to_string(),
        });
    }
    Ok(out)
}

impl RunConfig {
    pub fn new(command: &str, schema: &[KeySpec]) -> Self {
        Self {
            command: command.to_string(),
            schema: schema.to_vec(),
            values: schema.iter().map(|k| k.default.map(str::to_string)).collect(),
        }
    }

    fn slot(&self, section: &str, key: &str) -> Option<usize> {
        self.schema.iter().position(|k| k.section == section && k.key == key)
    }

    /// Applies file entries; every key must belong to this command.
    pub fn apply_file_entries(&mut self, entries: &[FileEntry]) -> CliResult<()> {
        for e in entries {
            let idx = match &e.section {
                Some(s) => self.slot(s, &e.key),
                None => {
                    let hits: Vec<usize> = self
                        .schema
                        .iter()
                        .enumerate()
                        .filter(|(_, k)| k.key == e.key)
                        .map(|(i, _)| i)
                        .collect();
                    if hits.len() > 1 {
                        return Err(CliError::usage(format!(
                            "config line {}: key `{}` is ambiguous without a section",
                            e.line, e.key
                        )));
                    }
                    hits.first().copied()
                }
            };
            let idx = idx.ok_or_else(|| {
                let name = match &e.section {
                    Some(s) => format!("{s}.{}", e.key),
                    None => e.key.clone(),
                };
                CliError::usage(format!("config line {}: unknown key `{name}` for `{}`", e.line, self.command))
            })?;
            self.values[idx] = Some(e.value.clone());
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let entries = parse_config_text(&text)?;
        self.apply_file_entries(&entries)
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        let idx = self
            .slot(section, key)
            .unwrap_or_else(|| panic!("`{section}.{key}` is not in the `{}` schema", self.command));
        self.values[idx] = Some(value.into());
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.slot(section, key).and_then(|i| self.values[i].as_deref())
    }

    pub fn require(&self, section: &str, key: &str) -> CliResult<&str> {
        self.get(section, key)
            .ok_or_else(|| CliError::usage(format!("`{}` needs `{section}.{key}` (flag --{})", self.command, key.replace('_', "-"))))
    }

    pub fn parse<T: FromStr>(&self, section: &str, key: &str) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.require(section, key)?;
        raw.parse()
            .map_err(|e| CliError::usage(format!("bad value `{raw}` for `{section}.{key}`: {e}")))
    }

    pub fn parse_opt<T: FromStr>(&self, section: &str, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(section, key) {
            None => Ok(None),
            Some(_) => self.parse(section, key).map(Some),
        }
    }

    pub fn flag(&self, section: &str, key: &str) -> CliResult<bool> {
        match self.get(section, key) {
            None => Ok(false),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(CliError::usage(format!("`{section}.{key}` must be true or false, got `{v}`"))),
        }
    }

    /// Text form accepted back by `--config`.
    pub fn render(&self) -> String {
        let mut out = format!("# lowfr {}\n", self.command);
        let mut current = "";
        for (spec, value) in self.schema.iter().zip(&self.values) {
            let Some(v) = value else { continue };
            if spec.section != current {
                out.push_str(&format!("\n[{}]\n", spec.section));
                current = spec.section;
            }
            out.push_str(&format!("{} = {v}\n", spec.key));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: &[KeySpec] = &[
        key("fit", "data", None),
        key("fit", "model", Some("lowfr")),
        key("sampler", "seed", Some("1")),
        key("simulate", "seed", Some("1")),
    ];

    #[test]
    fn layering_and_render_round_trip() {
        let mut c = RunConfig::new("fit", SCHEMA);
        let entries = parse_config_text("# c\nmodel = cqr\n[sampler]\nseed = 9\n").unwrap();
        c.apply_file_entries(&entries).unwrap();
        c.set("fit", "data", "d.csv");
        assert_eq!(c.get("fit", "model"), Some("cqr"));
        assert_eq!(c.parse::<u64>("sampler", "seed").unwrap(), 9);
        let mut again = RunConfig::new("fit", SCHEMA);
        again.apply_file_entries(&parse_config_text(&c.render()).unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn unknown_and_ambiguous_keys_are_rejected() {
        let mut c = RunConfig::new("fit", SCHEMA);
        let e = parse_config_text("[fit]\nbogus = 1\n").unwrap();
        assert!(matches!(c.apply_file_entries(&e), Err(CliError::Usage(m)) if m.contains("line 2")));
        let e = parse_config_text("seed = 3\n").unwrap();
        assert!(c.apply_file_entries(&e).is_err());
        assert!(parse_config_text("[fit\n").is_err());
        assert!(parse_config_text("novalue\n").is_err());
    }
}
