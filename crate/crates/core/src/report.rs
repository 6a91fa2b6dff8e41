//! Deterministic report output.
//!
//! JSON goes through `serde_json::Value`, whose maps are ordered, so keys come
//! out sorted and the bytes depend only on the data. Run metadata such as
//! wall-clock time is kept out of reports and written to a separate file.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Pretty JSON (2-space indent) with sorted keys and a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json_string(value)?)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// A CSV table of numbers and short labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<S: ToString>(&mut self, row: impl IntoIterator<Item = S>) {
        let row: Vec<String> = row.into_iter().map(|c| c.to_string()).collect();
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.render())
    }
}

/// Shortest round-trip formatting for CSV cells.
pub fn num(v: f64) -> String {
    let mut s = String::new();
    let _ = write!(s, "{v:?}");
    s
}

/// Seconds since the Unix epoch, for metadata files only.
pub fn timestamp() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    command: &'a str,
    unix_time: u64,
    version: &'a str,
}

/// Writes `<stem>.meta.json` beside a report.
pub fn write_metadata(dir: &Path, stem: &str, command: &str) -> Result<()> {
    let meta = RunMetadata {
        command,
        unix_time: timestamp(),
        version: env!("CARGO_PKG_VERSION"),
    };
    write_json(&dir.join(format!("{stem}.meta.json")), &meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Sample {
        zeta: f64,
        alpha: Vec<u32>,
    }

    #[test]
    fn json_keys_are_sorted() {
        let s = to_json_string(&Sample {
            zeta: 0.5,
            alpha: vec![1],
        })
        .unwrap();
        assert_eq!(s, "{\n  \"alpha\": [\n    1\n  ],\n  \"zeta\": 0.5\n}\n");
    }

    #[test]
    fn csv_render() {
        let mut c = Csv::new(["h", "error"]);
        c.push([num(0.125), num(1e-3)]);
        assert_eq!(c.render(), "h,error\n0.125,0.001\n");
    }
}
