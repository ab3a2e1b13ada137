//! CSV and JSON writers with matching readers. Floats are written in their
//! shortest round-trip form, so reading back is lossless.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PRow {
    pub i: u32,
    pub j: u32,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiRow {
    pub k: u32,
    pub l: u32,
    pub xi: f64,
}

/// One entry of the window matrix: row target `(i,j)`, column `(k,l)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiMatrixRow {
    pub i: u32,
    pub j: u32,
    pub k: u32,
    pub l: u32,
    pub xi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimRow {
    pub checkpoint_n: u64,
    pub i: u32,
    pub j: u32,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqCsvRow {
    pub i: u32,
    pub j: u32,
    pub rank: usize,
    pub standardized: f64,
    pub normal_quantile: f64,
}

/// One state of the exact law: nonzero cells `[i, j, count]` and probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactRecord {
    pub state: Vec<(u32, u32, u64)>,
    pub prob: f64,
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|source| CliError::Io {
                path: dir.to_path_buf(),
                source,
            })
        }
        _ => Ok(()),
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    ensure_parent(path)?;
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(csv_err)
}

pub fn to_json_string<T: Serialize>(path: &Path, value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|source| CliError::Json {
            path: path.to_path_buf(),
            source,
        })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = to_json_string(path, value)?;
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}
