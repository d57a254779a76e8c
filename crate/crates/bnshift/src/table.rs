//! Tab-separated numeric tables. The first line is a header such as
//! `# seed=42 columns: x<TAB>empirical<TAB>normal<TAB>edgeworth`, followed by
//! one tab-separated line per row.
//!
//! Values are written with 17 significant digits so they round-trip exactly.
//! The `rows` format writes one `column=value` record per line instead.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Table,
    Rows,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub seed: Option<u64>,
}

/// Round-trip formatting: 17 significant digits.
pub fn fmt_exact(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

/// Human formatting: 6 significant digits.
pub fn fmt_short(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        let decimals = (5 - mag).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.5e}")
    }
}

impl Table {
    pub fn new(columns: &[&str], seed: Option<u64>) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            seed,
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> String {
        let mut out = String::new();
        match self.seed {
            Some(seed) => out.push_str(&format!("# seed={seed} columns: ")),
            None => out.push_str("# columns: "),
        }
        out.push_str(&self.columns.join("\t"));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = match format {
                Format::Table => row.iter().map(|&v| fmt_exact(v)).collect(),
                Format::Rows => self
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(c, &v)| format!("{c}={}", fmt_exact(v)))
                    .collect(),
            };
            out.push_str(&cells.join(if format == Format::Table { "\t" } else { " " }));
            out.push('\n');
        }
        out
    }

    /// Parses the `table` format back; the inverse of [`Table::render`].
    pub fn parse(text: &str) -> Result<Table> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .and_then(|h| h.strip_prefix("# "))
            .ok_or_else(|| Error::config("table header must start with '# '"))?;
        let (seed, cols) = match header.strip_prefix("seed=") {
            Some(rest) => {
                let (s, cols) = rest
                    .split_once(" columns: ")
                    .ok_or_else(|| Error::config("malformed table header"))?;
                let seed = s
                    .parse()
                    .map_err(|_| Error::config(format!("bad seed in header: {s}")))?;
                (Some(seed), cols)
            }
            None => (
                None,
                header
                    .strip_prefix("columns: ")
                    .ok_or_else(|| Error::config("malformed table header"))?,
            ),
        };
        let columns: Vec<String> = cols.split('\t').map(str::to_string).collect();
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let row = line
                .split('\t')
                .map(|c| {
                    c.parse::<f64>()
                        .map_err(|_| Error::config(format!("bad table cell: {c}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != columns.len() {
                return Err(Error::config("table row width differs from header"));
            }
            rows.push(row);
        }
        Ok(Table {
            columns,
            rows,
            seed,
        })
    }
}

/// Writes `contents` to a temporary file beside `path`, then renames it over
/// `path`, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().ok_or_else(|| {
        Error::config(format!("output path has no file name: {}", path.display()))
    })?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}
