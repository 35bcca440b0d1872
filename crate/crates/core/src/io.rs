//! Plain-text persistence: dense matrix CSV and flat `key=value` manifests.
//!
//! Matrices are written row-major with a one-line header holding the
//! dimension: `n` for square matrices, `rows,cols` otherwise. Floats use the
//! shortest representation that round-trips exactly.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ini::Ini;
use nalgebra::DMatrix;

use crate::{Error, Result};

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = if m.nrows() == m.ncols() {
        vec![m.nrows().to_string()]
    } else {
        vec![m.nrows().to_string(), m.ncols().to_string()]
    };
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut records = r.records();
    let header = records
        .next()
        .ok_or_else(|| Error::parse(path, "missing dimension header"))?
        .map_err(|e| csv_error(path, e))?;
    let dims: Vec<usize> = header
        .iter()
        .map(|f| f.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::parse(path, format!("bad dimension header: {e}")))?;
    let (rows, cols) = match dims[..] {
        [n] => (n, n),
        [r, c] => (r, c),
        _ => return Err(Error::parse(path, "header must be `n` or `rows,cols`")),
    };
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (line, rec) in records.enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != cols {
            return Err(Error::parse(
                path,
                format!("row {line} has {} entries, expected {cols}", rec.len()),
            ));
        }
        for f in rec.iter() {
            data.push(
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(path, format!("row {line}: {e}")))?,
            );
        }
        seen += 1;
    }
    if seen != rows {
        return Err(Error::parse(path, format!("found {seen} rows, expected {rows}")));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::parse(path, e.to_string())
    }
}

/// Flat `key=value` metadata file; keys are kept sorted on write.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.entries.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Parses a required key, naming `path` in the error.
    pub fn parse<T>(&self, key: &str, path: &Path) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::parse(path, format!("missing key `{key}`")))?;
        raw.parse::<T>()
            .map_err(|e| Error::parse(path, format!("key `{key}` = `{raw}`: {e}")))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            s.push_str(k);
            s.push('=');
            s.push_str(v);
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ini = Ini::load_from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        let mut entries = BTreeMap::new();
        for (section, props) in ini.iter() {
            for (k, v) in props.iter() {
                let key = match section {
                    Some(s) => format!("{s}.{k}"),
                    None => k.to_string(),
                };
                entries.insert(key, v.to_string());
            }
        }
        Ok(Self { entries })
    }
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Kind of value a CSV column holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    /// Nonnegative integer.
    Index,
    /// Any float, including `NaN` and `inf`.
    Float,
    /// A float or an empty field.
    OptionalFloat,
    Bool,
    Text,
}

/// Header and column kinds of an emitted CSV file.
#[derive(Debug, Clone, Copy)]
pub struct CsvSchema {
    pub columns: &'static [(&'static str, ColumnKind)],
}

/// Per-iteration run trace.
pub const TRACE_SCHEMA: CsvSchema = CsvSchema {
    columns: &[
        ("iter", ColumnKind::Index),
        ("residual", ColumnKind::Float),
        ("consensus_spread", ColumnKind::Float),
        ("conservation_defect", ColumnKind::Float),
    ],
};

/// Step-size sweep, one row per step size.
pub const SWEEP_SCHEMA: CsvSchema = CsvSchema {
    columns: &[
        ("alpha", ColumnKind::Float),
        ("outcome", ColumnKind::Text),
        ("convergent", ColumnKind::Bool),
        ("iterations", ColumnKind::Index),
        ("final_residual", ColumnKind::Float),
        ("tau", ColumnKind::OptionalFloat),
        ("r_squared", ColumnKind::OptionalFloat),
    ],
};

/// Lyapunov series.
pub const LYAPUNOV_SCHEMA: CsvSchema = CsvSchema {
    columns: &[
        ("iter", ColumnKind::Index),
        ("g_seminorm", ColumnKind::Float),
        ("dz_error_sq", ColumnKind::Float),
    ],
};

/// Certificate constants.
pub const CONSTANTS_SCHEMA: CsvSchema = CsvSchema {
    columns: &[("name", ColumnKind::Text), ("value", ColumnKind::Float)],
};

impl CsvSchema {
    pub fn header(&self) -> Vec<&'static str> {
        self.columns.iter().map(|c| c.0).collect()
    }

    /// Checks the header and every field; returns the number of data rows.
    pub fn validate(&self, text: &str) -> std::result::Result<usize, String> {
        let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| e.to_string())?;
        let got: Vec<&str> = header.iter().collect();
        if got != self.header() {
            return Err(format!("header {got:?}, expected {:?}", self.header()));
        }
        let mut rows = 0;
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| format!("row {}: {e}", line + 1))?;
            for ((name, kind), field) in self.columns.iter().zip(rec.iter()) {
                let ok = match kind {
                    ColumnKind::Index => field.parse::<usize>().is_ok(),
                    ColumnKind::Float => field.parse::<f64>().is_ok(),
                    ColumnKind::OptionalFloat => field.is_empty() || field.parse::<f64>().is_ok(),
                    ColumnKind::Bool => field.parse::<bool>().is_ok(),
                    ColumnKind::Text => !field.is_empty(),
                };
                if !ok {
                    return Err(format!("row {}: column `{name}` has bad value `{field}`", line + 1));
                }
            }
            rows += 1;
        }
        Ok(rows)
    }
}
