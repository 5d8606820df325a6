//! Numeric CSV tables.

use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use lazykrr::PointSet;

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub delimiter: u8,
    pub header: bool,
    /// Integer label column, by name (or zero-based position without a header).
    pub label_column: Option<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            header: true,
            label_column: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub data: PointSet,
    pub labels: Option<Vec<usize>>,
}

fn parse_cell(text: &str, line: u64, column: &str) -> Result<f64, TableError> {
    let v: f64 = text.trim().parse().map_err(|_| TableError::Parse {
        line,
        message: format!("column '{column}': '{text}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(TableError::Parse {
            line,
            message: format!("column '{column}': non-finite value '{text}'"),
        });
    }
    Ok(v)
}

fn parse_label(text: &str, line: u64) -> Result<usize, TableError> {
    text.trim().parse().map_err(|_| TableError::Parse {
        line,
        message: format!("label '{text}' is not a non-negative integer"),
    })
}

pub fn load_table(path: &Path, options: &LoadOptions) -> Result<Table, TableError> {
    let file = File::open(path).map_err(|source| TableError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut records = reader.records();
    let parse_err = |e: csv::Error| TableError::Parse {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    };

    let mut first: Option<csv::StringRecord> = None;
    let names: Vec<String> = if options.header {
        let head = match records.next() {
            Some(r) => r.map_err(parse_err)?,
            None => return Err(TableError::Invalid(format!("{}: empty file", path.display()))),
        };
        head.iter().map(|s| s.trim().to_string()).collect()
    } else {
        match records.next() {
            Some(r) => {
                let r = r.map_err(parse_err)?;
                let names = (0..r.len()).map(|j| format!("c{j}")).collect();
                first = Some(r);
                names
            }
            None => Vec::new(),
        }
    };
    let mut seen = HashSet::new();
    if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
        return Err(TableError::Parse {
            line: 1,
            message: format!("duplicate column name '{dup}'"),
        });
    }
    let label_idx = match &options.label_column {
        None => None,
        Some(name) => Some(
            names
                .iter()
                .position(|n| n == name)
                .or_else(|| if options.header { None } else { name.parse().ok().filter(|&i| i < names.len()) })
                .ok_or_else(|| TableError::Parse {
                    line: 1,
                    message: format!("label column '{name}' not found"),
                })?,
        ),
    };
    let columns: Vec<String> = names
        .iter()
        .enumerate()
        .filter(|&(j, _)| Some(j) != label_idx)
        .map(|(_, n)| n.clone())
        .collect();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for record in first.into_iter().map(Ok).chain(records) {
        let record = record.map_err(parse_err)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if record.len() != names.len() {
            return Err(TableError::Parse {
                line,
                message: format!("expected {} fields, found {}", names.len(), record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            if Some(j) == label_idx {
                labels.push(parse_label(cell, line)?);
            } else {
                values.push(parse_cell(cell, line, &names[j])?);
            }
        }
        rows += 1;
    }
    let data = PointSet::new(rows, columns.len(), values).map_err(|e| TableError::Invalid(e.to_string()))?;
    Ok(Table {
        columns,
        data,
        labels: label_idx.map(|_| labels),
    })
}

impl Table {
    pub fn new(columns: Vec<String>, data: PointSet) -> Self {
        Self {
            columns,
            data,
            labels: None,
        }
    }

    /// Column positions of `names`, in that order.
    pub fn positions(&self, names: &[String]) -> Result<Vec<usize>, TableError> {
        names
            .iter()
            .map(|n| {
                self.columns
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| TableError::Invalid(format!("column '{n}' not found")))
            })
            .collect()
    }

    /// Copies the given columns into a new point set.
    pub fn select(&self, positions: &[usize]) -> PointSet {
        PointSet::from_fn(self.data.nrows(), positions.len(), |i, j| self.data[(i, positions[j])])
    }

    /// Splits into (remaining columns, named columns).
    pub fn split_off(&self, names: &[String]) -> Result<(Table, PointSet), TableError> {
        let taken = self.positions(names)?;
        let kept: Vec<usize> = (0..self.columns.len()).filter(|j| !taken.contains(j)).collect();
        let rest = Table {
            columns: kept.iter().map(|&j| self.columns[j].clone()).collect(),
            data: self.select(&kept),
            labels: self.labels.clone(),
        };
        Ok((rest, self.select(&taken)))
    }
}

/// Writes a header line and one row per data row with 17 significant digits.
pub fn save_table(path: &Path, columns: &[String], data: &PointSet, delimiter: u8) -> Result<(), TableError> {
    if columns.len() != data.ncols() {
        return Err(TableError::Invalid(format!(
            "{} column names for {} columns",
            columns.len(),
            data.ncols()
        )));
    }
    let io = |source| TableError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = std::io::BufWriter::new(File::create(path).map_err(io)?);
    let sep = (delimiter as char).to_string();
    writeln!(out, "{}", columns.join(&sep)).map_err(io)?;
    for row in data.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", cells.join(&sep)).map_err(io)?;
    }
    out.flush().map_err(io)
}
