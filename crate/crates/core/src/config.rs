//! Plain-text `key=value` configuration files. `#` starts a comment, blank
//! lines are ignored and `[name]` lines open a section.

use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub section: Option<String>,
    /// Counts section headers seen so far, so repeated sections stay apart.
    pub block: usize,
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut section = None;
    let mut block = 0;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = Some(name.trim().to_string());
            block += 1;
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected key=value, got {line:?}", i + 1)));
        };
        out.push(Entry {
            section: section.clone(),
            block,
            key: k.trim().to_string(),
            value: v.trim().to_string(),
            line: i + 1,
        });
    }
    Ok(out)
}

impl Entry {
    pub fn parse<T: FromStr>(&self) -> Result<T>
    where
        T::Err: Display,
    {
        self.value
            .parse()
            .map_err(|e| Error::Config(format!("line {}: bad value for {}: {e}", self.line, self.key)))
    }

    /// `lo..hi` or a single value meaning `lo == hi`.
    pub fn parse_range<T: FromStr + Copy + PartialOrd>(&self) -> Result<(T, T)>
    where
        T::Err: Display,
    {
        let bad = |e: String| Error::Config(format!("line {}: bad range for {}: {e}", self.line, self.key));
        let (lo, hi) = match self.value.split_once("..") {
            Some((a, b)) => (
                a.trim().parse::<T>().map_err(|e| bad(e.to_string()))?,
                b.trim().parse::<T>().map_err(|e| bad(e.to_string()))?,
            ),
            None => {
                let v = self.value.parse::<T>().map_err(|e| bad(e.to_string()))?;
                (v, v)
            }
        };
        if lo > hi {
            return Err(bad("lower bound exceeds upper bound".into()));
        }
        Ok((lo, hi))
    }

    pub fn unknown(&self) -> Error {
        Error::Config(format!("line {}: unknown key {:?}", self.line, self.key))
    }
}
