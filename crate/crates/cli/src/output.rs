use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::NaiveDate;

use epistate::io::{self, RunMetadata};

pub const COMPARTMENTS: [&str; 5] = ["D", "S", "I", "R", "beta"];

/// Creates `dir` and returns it.
pub fn out_dir(dir: &Path) -> Result<&Path> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

/// Writes `name` under `dir` with its metadata sidecar; returns the path.
pub fn emit(dir: &Path, name: &str, contents: &str, meta: &RunMetadata) -> Result<PathBuf> {
    let path = dir.join(name);
    io::write_with_metadata(&path, contents.as_bytes(), meta)?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

/// CSV text with a fixed header; cells are written with `Display`.
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            text: format!("{}\n", header.join(",")),
        }
    }

    pub fn row(&mut self, cells: &[&dyn std::fmt::Display]) {
        let mut first = true;
        for c in cells {
            if !first {
                self.text.push(',');
            }
            first = false;
            write!(self.text, "{c}").expect("writing to a String");
        }
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

/// Empty string for `None`.
pub fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Quotes a free-text cell if it needs it.
pub fn text_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn date_list(dates: &[NaiveDate]) -> String {
    match (dates.first(), dates.last()) {
        (Some(a), Some(b)) => format!("{a}..{b} ({} days)", dates.len()),
        _ => "no dates".into(),
    }
}
