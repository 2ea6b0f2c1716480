//! Minimal `key = value` text files used for schemas, sampler configs and
//! simulation designs. `#` starts a comment; blank lines are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvFile {
    entries: BTreeMap<String, (usize, String)>,
    origin: String,
}

impl KvFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.into(),
                line: idx + 1,
                msg: format!("expected `key = value`, found `{line}`"),
            })?;
            let key = key.trim().to_ascii_lowercase();
            if entries
                .insert(key.clone(), (idx + 1, value.trim().to_string()))
                .is_some()
            {
                return Err(Error::Parse {
                    path: origin.into(),
                    line: idx + 1,
                    msg: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(KvFile {
            entries,
            origin: origin.to_string(),
        })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(Some).map_err(|_| Error::Parse {
                path: self.origin.clone().into(),
                line: *line,
                msg: format!("cannot parse value `{v}` for `{key}`"),
            }),
        }
    }

    pub fn parsed_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    /// Comma-separated list of numbers.
    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => parse_list(v).map(Some).map_err(|msg| Error::Parse {
                path: self.origin.clone().into(),
                line: *line,
                msg: format!("`{key}`: {msg}"),
            }),
        }
    }

    /// Fails on keys outside `allowed`, so typos do not silently fall back
    /// to defaults.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        for (key, (line, _)) in &self.entries {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Parse {
                    path: self.origin.clone().into(),
                    line: *line,
                    msg: format!("unknown key `{key}`"),
                });
            }
        }
        Ok(())
    }
}

/// Parses `a,b,c` or a `start:stop:step` range (inclusive of `stop` up to
/// rounding).
pub fn parse_list(text: &str) -> std::result::Result<Vec<f64>, String> {
    let text = text.trim();
    if text.is_empty() {
        return Err("empty list".into());
    }
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("range `{text}` must be start:stop:step"));
        }
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("bad number `{p}`"))
            })
            .collect::<std::result::Result<_, _>>()?;
        let (start, stop, step) = (nums[0], nums[1], nums[2]);
        if !(step != 0.0 && step.is_finite()) || (stop - start) / step < 0.0 {
            return Err(format!("range `{text}` is empty or has an invalid step"));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| start + step * i as f64).collect());
    }
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.contains(&"...") {
        return parse_progression(&parts);
    }
    parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad number `{}`", p.trim()))
        })
        .collect()
}

/// `a,b,...,c`: arithmetic progression from `a` with step `b - a` through `c`.
fn parse_progression(parts: &[&str]) -> std::result::Result<Vec<f64>, String> {
    if parts.len() != 4 || parts[2] != "..." {
        return Err("progressions are written `first,second,...,last`".into());
    }
    let num = |p: &str| p.parse::<f64>().map_err(|_| format!("bad number `{p}`"));
    let (a, b, c) = (num(parts[0])?, num(parts[1])?, num(parts[3])?);
    let step = b - a;
    if step == 0.0 || (c - a) / step < 0.0 {
        return Err(format!(
            "progression {a},{b},...,{c} does not reach its end"
        ));
    }
    let n = ((c - a) / step + 1e-9).floor() as usize;
    // Round to suppress accumulated binary error in decimal grids.
    Ok((0..=n).map(|i| round12(a + step * i as f64)).collect())
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

pub fn format_list(values: &[f64]) -> String {
    let mut out = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_values() {
        let kv = KvFile::parse("# header\nk = 4\n lag=previous # trailing\n", "t").unwrap();
        assert_eq!(kv.parsed::<usize>("k").unwrap(), Some(4));
        assert_eq!(kv.get("lag"), Some("previous"));
        assert_eq!(kv.get("missing"), None);
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        assert!(KvFile::parse("a = 1\na = 2\n", "t").is_err());
        let err = KvFile::parse("a = 1\nnonsense\n", "t").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn list_and_range() {
        assert_eq!(parse_list("0,-0.1, -0.2").unwrap(), vec![0.0, -0.1, -0.2]);
        let r = parse_list("0:1460:30").unwrap();
        assert_eq!(r.len(), 49);
        assert_eq!(*r.last().unwrap(), 1440.0);
        assert_eq!(parse_list("0:-0.5:-0.1").unwrap().len(), 6);
        assert!(parse_list("1:0:1").is_err());
    }

    #[test]
    fn progressions() {
        let t1 = parse_list("0,-0.1,...,-0.5").unwrap();
        assert_eq!(t1, vec![0.0, -0.1, -0.2, -0.3, -0.4, -0.5]);
        assert_eq!(parse_list("0.4,0.5,...,0.9").unwrap().len(), 6);
        assert!(parse_list("0,...,1").is_err());
        assert!(parse_list("0,1,...,-1").is_err());
    }
}
