use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sample::Sample;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("cannot write {path}: {message}")]
    Write { path: PathBuf, message: String },
    #[error("{0}")]
    Config(String),
    #[error("no valid values in {path} ({rejected} rows rejected)")]
    EmptyDataset { path: PathBuf, rejected: usize },
}

/// Which CSV column holds the sizes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnSelector {
    Index(usize),
    Name(String),
}

impl Default for ColumnSelector {
    fn default() -> Self {
        ColumnSelector::Index(0)
    }
}

impl FromStr for ColumnSelector {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().parse::<usize>() {
            Ok(i) => ColumnSelector::Index(i),
            Err(_) => ColumnSelector::Name(s.trim().to_string()),
        })
    }
}

impl fmt::Display for ColumnSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnSelector::Index(i) => write!(f, "{i}"),
            ColumnSelector::Name(n) => f.write_str(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowReject {
    /// 1-based line number in the file.
    pub line: usize,
    pub raw: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSample {
    pub sample: Sample,
    pub rejects: Vec<RowReject>,
    pub rows_read: usize,
}

/// Reads one column of sizes. A column chosen by name implies a header row;
/// a column chosen by index has a header only when `header` is set. Blank,
/// non-numeric and non-positive values are rejected row by row.
pub fn load_csv(
    path: &Path,
    column: &ColumnSelector,
    header: bool,
) -> Result<LoadedSample, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::Read {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let has_header = header || matches!(column, ColumnSelector::Name(_));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut records = reader.records();
    let index = if has_header {
        let first = records
            .next()
            .ok_or_else(|| IoError::Config(format!("{} has no header row", path.display())))?
            .map_err(|e| IoError::Config(format!("unreadable header: {e}")))?;
        match column {
            ColumnSelector::Index(i) if *i < first.len() => *i,
            ColumnSelector::Index(i) => {
                return Err(IoError::Config(format!(
                    "column index {i} out of range; header has {} columns",
                    first.len()
                )))
            }
            ColumnSelector::Name(name) => {
                first.iter().position(|h| h == name).ok_or_else(|| {
                    IoError::Config(format!(
                        "column {name:?} not in header [{}]",
                        first.iter().collect::<Vec<_>>().join(", ")
                    ))
                })?
            }
        }
    } else {
        match column {
            ColumnSelector::Index(i) => *i,
            ColumnSelector::Name(_) => unreachable!("names imply a header"),
        }
    };

    let mut values = Vec::new();
    let mut rejects = Vec::new();
    let mut rows_read = 0;
    for record in records {
        rows_read += 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                rejects.push(RowReject {
                    line,
                    raw: String::new(),
                    reason: format!("malformed row: {e}"),
                });
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line() as usize);
        let raw = record.get(index).unwrap_or("");
        let reject = |reason: &str| RowReject {
            line,
            raw: raw.to_string(),
            reason: reason.to_string(),
        };
        if record.len() <= index {
            rejects.push(reject("missing column"));
            continue;
        }
        if raw.is_empty() {
            rejects.push(reject("blank value"));
            continue;
        }
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => values.push(v),
            Ok(_) => rejects.push(reject("value is not a finite positive number")),
            Err(_) => rejects.push(reject("not a number")),
        }
    }
    if values.is_empty() {
        return Err(IoError::EmptyDataset {
            path: path.to_path_buf(),
            rejected: rejects.len(),
        });
    }
    let sample = Sample::new(values).expect("values validated above");
    Ok(LoadedSample {
        sample,
        rejects,
        rows_read,
    })
}

/// Writes the sample as a one-column CSV, optionally under a header.
pub fn write_csv(path: &Path, sample: &Sample, header: Option<&str>) -> Result<(), IoError> {
    let mut text = String::with_capacity(sample.len() * 12);
    if let Some(h) = header {
        text.push_str(h);
        text.push('\n');
    }
    for v in sample.values() {
        text.push_str(&format!("{v}\n"));
    }
    write_atomic(path, text.as_bytes())
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let fail = |e: &dyn fmt::Display| IoError::Write {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| fail(&e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| fail(&e))?;
    tmp.write_all(bytes).map_err(|e| fail(&e))?;
    tmp.flush().map_err(|e| fail(&e))?;
    tmp.persist(path).map_err(|e| fail(&e.error))?;
    Ok(())
}
