//! Flat `key=value` configuration files: `#` starts a comment, blank lines
//! are ignored, duplicate keys are errors, and any key left unconsumed
//! after a command has taken what it knows is a hard error (typo guard).
//! Every consumed value is echoed into the run manifest.

use std::collections::BTreeMap;

use anyhow::{bail, Context, Result};

/// A parsed configuration: keys taken out as commands consume them, with
/// line numbers retained for error messages.
#[derive(Clone, Debug)]
pub struct ConfigMap {
    source: String,
    entries: BTreeMap<String, (String, usize)>,
    /// Every key=value this map has handed out, with defaults filled in by
    /// the taking command; becomes the manifest's resolved configuration.
    resolved: BTreeMap<String, String>,
}

/// Parses configuration text. `source` names the file in error messages.
pub fn parse_config(text: &str, source: &str) -> Result<ConfigMap> {
    let mut entries = BTreeMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{source}:{line_no}: expected `key=value`, found `{line}`");
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            bail!("{source}:{line_no}: empty key");
        }
        if let Some((_, first)) = entries.get(&key) {
            bail!("{source}:{line_no}: duplicate key `{key}` (first set on line {first})");
        }
        entries.insert(key, (value, line_no));
    }
    Ok(ConfigMap {
        source: source.to_string(),
        entries,
        resolved: BTreeMap::new(),
    })
}

impl ConfigMap {
    fn note(&mut self, key: &str, shown: String) {
        self.resolved.insert(key.to_string(), shown);
    }

    /// Raw string lookup; records the value (or the default) as resolved.
    pub fn take_raw(&mut self, key: &str) -> Option<String> {
        let value = self.entries.remove(key).map(|(v, _)| v);
        if let Some(v) = &value {
            self.note(key, v.clone());
        }
        value
    }

    /// Raw string lookup with a default, recorded either way.
    pub fn take_raw_or(&mut self, key: &str, default: &str) -> String {
        match self.take_raw(key) {
            Some(v) => v,
            None => {
                self.note(key, default.to_string());
                default.to_string()
            }
        }
    }

    fn take_parsed<T: std::str::FromStr>(&mut self, key: &str, kind: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((v, line)) => match v.parse::<T>() {
                Ok(parsed) => {
                    self.note(key, v);
                    Ok(Some(parsed))
                }
                Err(_) => bail!(
                    "{}:{line}: key `{key}`: cannot parse `{v}` as {kind}",
                    self.source
                ),
            },
        }
    }

    /// A required key; the error names the key.
    pub fn require<T: std::str::FromStr>(&mut self, key: &str, kind: &str) -> Result<T> {
        match self.take_parsed(key, kind)? {
            Some(v) => Ok(v),
            None => bail!("{}: missing required key `{key}`", self.source),
        }
    }

    /// An optional key with a default.
    pub fn take_or<T: std::str::FromStr + ToString>(&mut self, key: &str, default: T) -> Result<T> {
        let kind = std::any::type_name::<T>();
        match self.take_parsed(key, kind)? {
            Some(v) => Ok(v),
            None => {
                self.note(key, default.to_string());
                Ok(default)
            }
        }
    }

    /// An optional key with no default (absence is meaningful).
    pub fn take_opt<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        let kind = std::any::type_name::<T>();
        self.take_parsed(key, kind)
    }

    /// A boolean key accepting `true/false/1/0/yes/no`.
    pub fn take_bool_or(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.entries.remove(key) {
            None => {
                self.note(key, default.to_string());
                Ok(default)
            }
            Some((v, line)) => {
                let parsed = match v.to_ascii_lowercase().as_str() {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    _ => bail!(
                        "{}:{line}: key `{key}`: cannot parse `{v}` as a boolean",
                        self.source
                    ),
                };
                self.note(key, v);
                Ok(parsed)
            }
        }
    }

    /// A comma-separated list; the default is recorded verbatim when the
    /// key is absent. An explicitly empty value yields an empty list.
    pub fn take_list_or<T: std::str::FromStr>(
        &mut self,
        key: &str,
        default: &[T],
    ) -> Result<Vec<T>>
    where
        T: ToString + Clone,
    {
        match self.entries.remove(key) {
            None => {
                let shown: Vec<String> = default.iter().map(|v| v.to_string()).collect();
                self.note(key, shown.join(","));
                Ok(default.to_vec())
            }
            Some((v, line)) => {
                let mut out = Vec::new();
                for part in v.split(',') {
                    let part = part.trim();
                    if part.is_empty() {
                        continue;
                    }
                    match part.parse::<T>() {
                        Ok(item) => out.push(item),
                        Err(_) => bail!(
                            "{}:{line}: key `{key}`: cannot parse list item `{part}`",
                            self.source
                        ),
                    }
                }
                self.note(key, v);
                Ok(out)
            }
        }
    }

    /// Fails when unconsumed (unknown) keys remain, naming each with its
    /// line number.
    pub fn ensure_empty(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Ok(());
        }
        let mut leftovers: Vec<String> = self
            .entries
            .iter()
            .map(|(k, (_, line))| format!("`{k}` (line {line})"))
            .collect();
        leftovers.sort();
        bail!(
            "{}: unknown configuration key(s): {}",
            self.source,
            leftovers.join(", ")
        );
    }

    /// Every key=value consumed so far, defaults included.
    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }
}

/// Reads and parses a configuration file.
pub fn load_config(path: &std::path::Path) -> Result<ConfigMap> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    parse_config(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_defaults_and_types() {
        let text = "\
# full-line comment
n = 100   # trailing comment
alpha=2.5
graph = grid
flag = yes
list = 1, 2,3
";
        let mut cfg = parse_config(text, "test.cfg").unwrap();
        assert_eq!(cfg.require::<usize>("n", "integer").unwrap(), 100);
        assert_eq!(cfg.require::<f64>("alpha", "number").unwrap(), 2.5);
        assert_eq!(cfg.take_raw("graph"), Some("grid".to_string()));
        assert!(cfg.take_bool_or("flag", false).unwrap());
        assert_eq!(
            cfg.take_list_or::<usize>("list", &[]).unwrap(),
            vec![1, 2, 3]
        );
        assert_eq!(cfg.take_or("absent", 7usize).unwrap(), 7);
        cfg.ensure_empty().unwrap();
        assert_eq!(cfg.resolved().get("n").unwrap(), "100");
        assert_eq!(cfg.resolved().get("absent").unwrap(), "7");
    }

    #[test]
    fn errors_carry_line_numbers_and_key_names() {
        let err = parse_config("a=1\nbogus line\n", "f.cfg").unwrap_err();
        assert!(err.to_string().contains("f.cfg:2"), "{err}");

        let err = parse_config("a=1\na=2\n", "f.cfg").unwrap_err();
        assert!(err.to_string().contains("duplicate key `a`"), "{err}");
        assert!(err.to_string().contains("line 1"), "{err}");

        let mut cfg = parse_config("x=abc\n", "f.cfg").unwrap();
        let err = cfg.require::<f64>("x", "number").unwrap_err();
        assert!(err.to_string().contains("f.cfg:1"), "{err}");

        let mut cfg = parse_config("\n", "f.cfg").unwrap();
        let err = cfg.require::<usize>("n", "integer").unwrap_err();
        assert!(err.to_string().contains("missing required key `n`"), "{err}");

        let cfg = parse_config("mystery=1\n", "f.cfg").unwrap();
        let err = cfg.ensure_empty().unwrap_err();
        assert!(
            err.to_string().contains("unknown configuration key(s): `mystery` (line 1)"),
            "{err}"
        );
    }
}
