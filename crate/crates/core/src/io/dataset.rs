use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisKind, BasisSystem, Grid, DEFAULT_SPLINE_ORDER};
use crate::data::{Dataset, FunctionalCovariate, LabelMap};
use crate::error::{Error, Result};

/// Basis used to smooth a functional covariate, written `kind:n_basis[:order]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub n_basis: usize,
    pub order: usize,
}

impl BasisSpec {
    pub fn build(&self, grid: &Grid) -> Result<BasisSystem> {
        BasisSystem::new(self.kind, grid.span(), self.n_basis, self.order)
    }
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self {
            kind: BasisKind::Fourier,
            n_basis: 35,
            order: DEFAULT_SPLINE_ORDER,
        }
    }
}

impl std::str::FromStr for BasisSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let number = |p: &str| {
            p.parse::<usize>()
                .map_err(|_| Error::InvalidBasis(format!("'{p}' is not a count in basis '{s}'")))
        };
        match parts.as_slice() {
            [kind, n] => Ok(Self {
                kind: kind.parse()?,
                n_basis: number(n)?,
                order: DEFAULT_SPLINE_ORDER,
            }),
            [kind, n, order] => Ok(Self {
                kind: kind.parse()?,
                n_basis: number(n)?,
                order: number(order)?,
            }),
            _ => Err(Error::InvalidBasis(format!("expected kind:n_basis[:order], got '{s}'"))),
        }
    }
}

impl std::fmt::Display for BasisSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.kind == BasisKind::BSpline {
            write!(f, "{}:{}:{}", self.kind, self.n_basis, self.order)
        } else {
            write!(f, "{}:{}", self.kind, self.n_basis)
        }
    }
}

/// Which CSV columns hold a functional covariate's samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnSpec {
    /// Every column not claimed by the label, the scalars or another covariate.
    Remaining,
    /// Columns from `first` to `last` inclusive, in file order.
    Range { first: String, last: String },
    /// Columns whose header starts with the prefix.
    Prefix(String),
}

impl std::str::FromStr for ColumnSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "*" || s.is_empty() {
            Ok(Self::Remaining)
        } else if let Some((first, last)) = s.split_once("..") {
            Ok(Self::Range {
                first: first.trim().to_string(),
                last: last.trim().to_string(),
            })
        } else if let Some(prefix) = s.strip_suffix('*') {
            Ok(Self::Prefix(prefix.to_string()))
        } else {
            Err(Error::InvalidArgument(format!(
                "column selection must be '*', 'FIRST..LAST' or 'PREFIX*', got '{s}'"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSchema {
    pub name: String,
    pub columns: ColumnSpec,
    /// One-column CSV of continuum values; without it the column headers must be
    /// numeric (optionally prefixed by `name@`).
    pub grid: Option<PathBuf>,
    pub basis: BasisSpec,
}

/// How to read a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub label: String,
    pub scalars: Vec<String>,
    pub functional: Vec<CovariateSchema>,
}

impl DatasetSchema {
    /// A label column and one functional covariate `x` spanning every other column.
    pub fn single_curve(label: impl Into<String>, basis: BasisSpec) -> Self {
        Self {
            label: label.into(),
            scalars: Vec::new(),
            functional: vec![CovariateSchema {
                name: "x".into(),
                columns: ColumnSpec::Remaining,
                grid: None,
                basis,
            }],
        }
    }
}

fn parse_grid_header(header: &str, covariate: &str) -> Option<f64> {
    let h = header.trim();
    let h = h
        .strip_prefix(covariate)
        .and_then(|rest| rest.strip_prefix('@'))
        .unwrap_or(h);
    h.parse::<f64>().ok()
}

/// Reads a one-column grid file; a non-numeric first row is taken as a header.
pub fn read_grid(path: &Path) -> Result<Grid> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let cell = record.get(0).unwrap_or("").trim();
        match cell.parse::<f64>() {
            Ok(v) => points.push(v),
            Err(_) if i == 0 => {}
            Err(_) => {
                return Err(Error::Data(format!(
                    "{}: line {} holds non-numeric grid value '{cell}'",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Grid::new(points)
}

/// Loads a CSV with a header row according to `schema`.
///
/// Labels are mapped to `0..H-1` (numerically sorted when every label is a number,
/// lexicographically otherwise); the mapping is kept in the dataset's [`LabelMap`].
pub fn load_dataset(path: &Path, schema: &DatasetSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    read_dataset(file, schema, &path.display().to_string())
}

/// [`load_dataset`] over any reader; `source` names it in error messages.
pub fn read_dataset(input: impl std::io::Read, schema: &DatasetSchema, source: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    let find = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Data(format!("{source}: column '{name}' not found")))
    };
    let label_col = find(&schema.label)?;
    let scalar_cols: Vec<usize> = schema.scalars.iter().map(|s| find(s)).collect::<Result<_>>()?;

    let mut claimed = vec![false; headers.len()];
    claimed[label_col] = true;
    for &c in &scalar_cols {
        claimed[c] = true;
    }
    let mut curve_cols: Vec<Vec<usize>> = Vec::new();
    for cov in &schema.functional {
        let cols: Vec<usize> = match &cov.columns {
            ColumnSpec::Range { first, last } => {
                let (a, b) = (find(first)?, find(last)?);
                if a > b {
                    return Err(Error::Data(format!("{source}: column '{first}' comes after '{last}'")));
                }
                (a..=b).collect()
            }
            ColumnSpec::Prefix(prefix) => (0..headers.len())
                .filter(|&c| !claimed[c] && headers[c].starts_with(prefix.as_str()))
                .collect(),
            ColumnSpec::Remaining => (0..headers.len()).filter(|&c| !claimed[c]).collect(),
        };
        if cols.is_empty() {
            return Err(Error::Data(format!("{source}: no columns selected for covariate '{}'", cov.name)));
        }
        for &c in &cols {
            claimed[c] = true;
        }
        curve_cols.push(cols);
    }

    let mut raw_labels = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    let numeric_cols: Vec<usize> = scalar_cols.iter().chain(curve_cols.iter().flatten()).copied().collect();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(Error::Data(format!(
                "{source}: line {line} has {} fields, the header has {}",
                record.len(),
                headers.len()
            )));
        }
        let label = record[label_col].trim();
        if label.is_empty() {
            return Err(Error::Data(format!("{source}: line {line}: missing value in column '{}'", schema.label)));
        }
        raw_labels.push(label.to_string());
        let mut row = vec![0.0; headers.len()];
        for &c in &numeric_cols {
            let cell = record[c].trim();
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                return Err(Error::Data(format!("{source}: line {line}: missing value in column '{}'", headers[c])));
            }
            row[c] = cell.parse::<f64>().map_err(|_| {
                Error::Data(format!("{source}: line {line}: non-numeric value '{cell}' in column '{}'", headers[c]))
            })?;
            if !row[c].is_finite() {
                return Err(Error::Data(format!("{source}: line {line}: non-finite value in column '{}'", headers[c])));
            }
        }
        values.push(row);
    }
    let n = values.len();
    if n == 0 {
        return Err(Error::Data(format!("{source}: no data rows")));
    }
    if n == 1 {
        return Err(Error::Data(format!(
            "{source}: a single observation cannot be split into training and test folds"
        )));
    }

    let (label_map, labels) = LabelMap::from_raw(&raw_labels);
    let scalars = DMatrix::from_fn(n, scalar_cols.len(), |i, j| values[i][scalar_cols[j]]);
    let mut functional = Vec::with_capacity(schema.functional.len());
    for (cov, cols) in schema.functional.iter().zip(&curve_cols) {
        let grid = match &cov.grid {
            Some(path) => read_grid(path)?,
            None => {
                let points = cols
                    .iter()
                    .map(|&c| {
                        parse_grid_header(&headers[c], &cov.name).ok_or_else(|| {
                            Error::Data(format!(
                                "{source}: header '{}' of covariate '{}' is not numeric; supply a grid file",
                                headers[c], cov.name
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Grid::new(points)?
            }
        };
        if grid.len() != cols.len() {
            return Err(Error::Data(format!(
                "{source}: covariate '{}' has {} columns but its grid has {} points",
                cov.name,
                cols.len(),
                grid.len()
            )));
        }
        let raw = DMatrix::from_fn(n, cols.len(), |i, p| values[i][cols[p]]);
        let basis = cov.basis.build(&grid)?;
        functional.push(FunctionalCovariate::from_raw(cov.name.clone(), grid, raw, basis)?);
    }
    Dataset::new(functional, scalars, schema.scalars.clone(), labels, label_map)
}

/// Writes `data` as CSV: the label column, the scalar columns, then every functional
/// covariate's raw samples headed by their grid values (prefixed by `name@` when there
/// is more than one covariate).
pub fn write_dataset(out: impl Write, data: &Dataset, label: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let prefix = data.n_functional() > 1;
    let mut header = vec![label.to_string()];
    header.extend(data.scalar_names().iter().cloned());
    for cov in data.functional() {
        for t in cov.grid().points() {
            header.push(if prefix { format!("{}@{t}", cov.name()) } else { t.to_string() });
        }
    }
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut row = vec![data.label_map().name(data.labels()[i]).to_string()];
        row.extend(data.scalars().row(i).iter().map(f64::to_string));
        for cov in data.functional() {
            row.extend(cov.raw().row(i).iter().map(f64::to_string));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
