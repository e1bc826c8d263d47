//! Line-oriented sectioned `key = value` configuration.
//!
//! Keys before the first `[section]` header belong to the top level. `#` starts a comment line.
//! Every key a command reads is recorded with its resolved value (defaults included), so the
//! manifest can echo a config that re-parses to the same run. Keys nobody reads are errors.

use std::cell::RefCell;
use std::collections::HashSet;
use std::fmt;

/// Sections that are echoed by manifests but never read back.
const PASSIVE_SECTIONS: &[&str] = &["artifacts"];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        Self { line: None, message: message.into() }
    }

    fn at(line: usize, message: impl Into<String>) -> Self {
        Self { line: Some(line), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config line {l}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    section: String,
    key: String,
    value: String,
    line: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: Vec<Entry>,
    /// Section headers with their line, including empty sections.
    sections: Vec<(String, usize)>,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

pub fn parse(text: &str) -> Result<RawConfig, ConfigError> {
    let mut raw = RawConfig::default();
    let mut section = String::new();
    for (idx, line) in text.lines().enumerate() {
        let no = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::at(no, "unterminated section header"))?
                .trim();
            if !valid_name(name) {
                return Err(ConfigError::at(no, format!("bad section name `{name}`")));
            }
            if raw.sections.iter().any(|(s, _)| s == name) {
                return Err(ConfigError::at(no, format!("section [{name}] appears twice")));
            }
            raw.sections.push((name.to_string(), no));
            section = name.to_string();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::at(no, format!("expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if !valid_name(key) {
            return Err(ConfigError::at(no, format!("bad key `{key}`")));
        }
        if raw.entries.iter().any(|e| e.section == section && e.key == key) {
            return Err(ConfigError::at(no, format!("key `{key}` repeated in {}", describe(&section))));
        }
        raw.entries.push(Entry { section: section.clone(), key: key.to_string(), value: value.to_string(), line: no });
    }
    Ok(raw)
}

fn describe(section: &str) -> String {
    if section.is_empty() {
        "the top level".into()
    } else {
        format!("[{section}]")
    }
}

/// Reads typed values out of a [`RawConfig`], recording each reply.
pub struct Resolver<'a> {
    raw: &'a RawConfig,
    used: RefCell<HashSet<(String, String)>>,
    /// Resolved values grouped by section, in first-use order.
    resolved: RefCell<Vec<(String, Vec<(String, String)>)>>,
}

impl<'a> Resolver<'a> {
    pub fn new(raw: &'a RawConfig) -> Self {
        Self { raw, used: RefCell::new(HashSet::new()), resolved: RefCell::new(Vec::new()) }
    }

    fn lookup(&self, section: &str, key: &str) -> Option<&'a Entry> {
        self.used.borrow_mut().insert((section.to_string(), key.to_string()));
        self.raw.entries.iter().find(|e| e.section == section && e.key == key)
    }

    fn record(&self, section: &str, key: &str, value: String) {
        let mut resolved = self.resolved.borrow_mut();
        let slot = match resolved.iter().position(|(s, _)| s == section) {
            Some(i) => i,
            None => {
                resolved.push((section.to_string(), Vec::new()));
                resolved.len() - 1
            }
        };
        let keys = &mut resolved[slot].1;
        match keys.iter_mut().find(|(k, _)| k == key) {
            Some(kv) => kv.1 = value,
            None => keys.push((key.to_string(), value)),
        }
    }

    /// Overrides a value as if it had been written in the file (command-line flags).
    pub fn set(&self, section: &str, key: &str, value: String) {
        self.used.borrow_mut().insert((section.to_string(), key.to_string()));
        self.record(section, key, value);
    }

    fn typed<T>(
        &self,
        section: &str,
        key: &str,
        default: Option<T>,
        parse: impl Fn(&str) -> Option<T>,
        show: impl Fn(&T) -> String,
        what: &str,
    ) -> Result<T, ConfigError> {
        let value = match self.lookup(section, key) {
            Some(e) => parse(&e.value)
                .ok_or_else(|| ConfigError::at(e.line, format!("`{key}` expects {what}, got `{}`", e.value)))?,
            None => default.ok_or_else(|| ConfigError::new(format!("missing `{key}` in {}", describe(section))))?,
        };
        self.record(section, key, show(&value));
        Ok(value)
    }

    pub fn f64(&self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        self.typed(section, key, Some(default), parse_number, |v| show_number(*v), "a finite number")
    }

    pub fn opt_f64(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        self.typed(
            section,
            key,
            Some(None),
            |s| if s == "auto" { Some(None) } else { parse_number(s).map(Some) },
            |v| v.map_or_else(|| "auto".to_string(), show_number),
            "a finite number or `auto`",
        )
    }

    pub fn usize(&self, section: &str, key: &str, default: usize) -> Result<usize, ConfigError> {
        self.typed(section, key, Some(default), parse_count, |v| v.to_string(), "a nonnegative integer")
    }

    pub fn u64(&self, section: &str, key: &str, default: u64) -> Result<u64, ConfigError> {
        self.typed(section, key, Some(default), |s| s.parse().ok(), |v| v.to_string(), "an unsigned integer")
    }

    pub fn bool(&self, section: &str, key: &str, default: bool) -> Result<bool, ConfigError> {
        self.typed(section, key, Some(default), |s| s.parse().ok(), |v| v.to_string(), "`true` or `false`")
    }

    pub fn string(&self, section: &str, key: &str, default: Option<&str>) -> Result<String, ConfigError> {
        self.typed(
            section,
            key,
            default.map(str::to_string),
            |s| (!s.is_empty()).then(|| s.to_string()),
            |v| v.clone(),
            "a nonempty string",
        )
    }

    pub fn choice(&self, section: &str, key: &str, default: Option<&str>, allowed: &[&str]) -> Result<String, ConfigError> {
        let what = format!("one of {}", allowed.join(", "));
        self.typed(
            section,
            key,
            default.map(str::to_string),
            |s| allowed.contains(&s).then(|| s.to_string()),
            |v| v.clone(),
            &what,
        )
    }

    pub fn f64_list(&self, section: &str, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        self.typed(
            section,
            key,
            Some(default.to_vec()),
            |s| s.split(',').map(|p| parse_number(p.trim())).collect::<Option<Vec<f64>>>().filter(|v| !v.is_empty()),
            |v| v.iter().map(|x| show_number(*x)).collect::<Vec<_>>().join(","),
            "a comma-separated list of numbers",
        )
    }

    /// Fails on keys that were never read and on sections that hold none of them.
    pub fn finish(&self, command: &str) -> Result<(), ConfigError> {
        let used = self.used.borrow();
        for e in &self.raw.entries {
            if PASSIVE_SECTIONS.contains(&e.section.as_str()) {
                continue;
            }
            if !used.contains(&(e.section.clone(), e.key.clone())) {
                return Err(ConfigError::at(
                    e.line,
                    format!("unknown key `{}` in {} for command `{command}`", e.key, describe(&e.section)),
                ));
            }
        }
        for (s, line) in &self.raw.sections {
            if PASSIVE_SECTIONS.contains(&s.as_str()) {
                continue;
            }
            if !used.iter().any(|(sec, _)| sec == s) {
                return Err(ConfigError::at(*line, format!("unknown section [{s}] for command `{command}`")));
            }
        }
        Ok(())
    }

    /// The resolved configuration in the input format, top level first.
    pub fn render(&self) -> String {
        let resolved = self.resolved.borrow();
        let mut out = String::new();
        let mut sections: Vec<&(String, Vec<(String, String)>)> = resolved.iter().collect();
        sections.sort_by_key(|(s, _)| !s.is_empty());
        for (s, keys) in sections {
            if !s.is_empty() {
                out.push_str(&format!("\n[{s}]\n"));
            }
            for (k, v) in keys {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}

/// Decimal, scientific or `p/q` fractions; finite values only.
pub fn parse_number(s: &str) -> Option<f64> {
    let v = match s.split_once('/') {
        Some((p, q)) => p.trim().parse::<f64>().ok()? / q.trim().parse::<f64>().ok()?,
        None => s.parse::<f64>().ok()?,
    };
    v.is_finite().then_some(v)
}

fn parse_count(s: &str) -> Option<usize> {
    s.parse().ok().or_else(|| {
        // 1e6 style for iteration caps
        let v = s.parse::<f64>().ok()?;
        (v >= 0.0 && v.fract() == 0.0 && v <= 1e15).then_some(v as usize)
    })
}

/// Shortest representation that parses back to the same `f64`.
pub fn show_number(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_top_level() {
        let raw = parse("command = audit\n# note\nseed = 7\n\n[operator]\nname = pucci_plus\nlambda = 1/2\n").unwrap();
        let r = Resolver::new(&raw);
        assert_eq!(r.string("", "command", None).unwrap(), "audit");
        assert_eq!(r.u64("", "seed", 0).unwrap(), 7);
        assert_eq!(r.string("operator", "name", None).unwrap(), "pucci_plus");
        assert_eq!(r.f64("operator", "lambda", 1.0).unwrap(), 0.5);
        assert_eq!(r.f64("operator", "big_lambda", 2.0).unwrap(), 2.0);
        r.finish("audit").unwrap();
        assert_eq!(
            r.render(),
            "command = audit\nseed = 7\n\n[operator]\nname = pucci_plus\nlambda = 0.5\nbig_lambda = 2.0\n"
        );
    }

    #[test]
    fn strictness() {
        let raw = parse("[grid]\nn = 31\ncolour = red\n").unwrap();
        let r = Resolver::new(&raw);
        r.usize("grid", "n", 63).unwrap();
        let e = r.finish("solve").unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.message.contains("colour"));

        let raw = parse("[bogus]\n").unwrap();
        assert!(Resolver::new(&raw).finish("audit").unwrap_err().message.contains("[bogus]"));

        assert!(parse("[grid]\nn = 1\nn = 2\n").is_err());
        assert!(parse("[grid]\n[grid]\n").is_err());
        assert!(parse("just words\n").is_err());
        assert!(parse("[open\n").is_err());

        let raw = parse("[grid]\nn = many\n").unwrap();
        let e = Resolver::new(&raw).usize("grid", "n", 1).unwrap_err();
        assert_eq!(e.line, Some(2));
    }

    #[test]
    fn artifacts_section_is_passive() {
        let raw = parse("command = audit\n\n[artifacts]\naudit.json = 00ff\n").unwrap();
        let r = Resolver::new(&raw);
        r.string("", "command", None).unwrap();
        r.finish("audit").unwrap();
    }

    #[test]
    fn value_forms() {
        let raw = parse("a = 1e6\nb = auto\nc = 1/16, 0.5 ,2\nd = inf\ne = maybe\n").unwrap();
        let r = Resolver::new(&raw);
        assert_eq!(r.usize("", "a", 0).unwrap(), 1_000_000);
        assert_eq!(r.opt_f64("", "b").unwrap(), None);
        assert_eq!(r.f64_list("", "c", &[]).unwrap(), vec![0.0625, 0.5, 2.0]);
        assert!(r.f64("", "d", 0.0).is_err());
        assert!(r.choice("", "e", None, &["yes", "no"]).is_err());
        assert!(r.string("", "missing", None).is_err());
        for v in [0.1, 1.0 / 3.0, 1e-300, 2.0] {
            assert_eq!(parse_number(&show_number(v)), Some(v));
        }
    }
}
