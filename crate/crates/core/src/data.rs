//! In-memory datasets: functional covariates sampled on a shared grid, scalar
//! covariates and integer class labels.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSystem, FunctionalObservation, Grid, Smoother};
use crate::error::{Error, Result};

/// One functional covariate across all observations.
///
/// Keeps both the raw samples (`N × P`) and their least-squares coefficients
/// (`N × M`) against `basis`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalCovariate {
    name: String,
    grid: Grid,
    raw: DMatrix<f64>,
    basis: BasisSystem,
    coefficients: DMatrix<f64>,
}

impl FunctionalCovariate {
    /// Smooths every row of `raw` onto `basis`.
    pub fn from_raw(
        name: impl Into<String>,
        grid: Grid,
        raw: DMatrix<f64>,
        basis: BasisSystem,
    ) -> Result<Self> {
        let coefficients = Smoother::new(&grid, &basis)?.smooth_rows(&raw)?;
        Ok(Self {
            name: name.into(),
            grid,
            raw,
            basis,
            coefficients,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn raw(&self) -> &DMatrix<f64> {
        &self.raw
    }

    pub fn basis(&self) -> &BasisSystem {
        &self.basis
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn observation(&self, i: usize) -> FunctionalObservation {
        let c = self.coefficients.row(i).iter().copied().collect();
        FunctionalObservation::new(self.basis.clone(), c).expect("coefficients match basis")
    }

    fn subset(&self, indices: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            grid: self.grid.clone(),
            raw: self.raw.select_rows(indices),
            basis: self.basis.clone(),
            coefficients: self.coefficients.select_rows(indices),
        }
    }

    /// The derivative of order `q` of every smoothed curve as a new covariate,
    /// with raw samples taken from the derivative on the same grid.
    pub fn derivative(&self, q: usize) -> Result<Self> {
        let (basis, map) = self.basis.derivative_map(q)?;
        let coefficients = &self.coefficients * map.transpose();
        let raw = &coefficients * basis.eval(&self.grid)?.transpose();
        Ok(Self {
            name: format!("{}_d{q}", self.name),
            grid: self.grid.clone(),
            raw,
            basis,
            coefficients,
        })
    }
}

/// Human-readable names of the contiguous class indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    names: Vec<String>,
}

impl LabelMap {
    pub fn new(names: Vec<String>) -> Self {
        Self { names }
    }

    /// `"0", "1", …, "H−1"`.
    pub fn numeric(n_classes: usize) -> Self {
        Self::new((0..n_classes).map(|h| h.to_string()).collect())
    }

    /// Sorts distinct labels (numerically when every label parses as a number) and
    /// maps each raw label to its rank.
    pub fn from_raw(raw: &[String]) -> (Self, Vec<usize>) {
        let mut distinct: Vec<String> = raw.to_vec();
        distinct.sort();
        distinct.dedup();
        let numeric: Option<Vec<f64>> = distinct.iter().map(|s| s.trim().parse().ok()).collect();
        if let Some(values) = numeric {
            let mut pairs: Vec<(f64, String)> = values.into_iter().zip(distinct).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            distinct = pairs.into_iter().map(|p| p.1).collect();
        }
        let labels = raw
            .iter()
            .map(|r| distinct.iter().position(|d| d == r).expect("label present"))
            .collect();
        (Self::new(distinct), labels)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, h: usize) -> &str {
        &self.names[h]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// `N` observations with `K` functional covariates, `J` scalar covariates and labels
/// in `0..H`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    functional: Vec<FunctionalCovariate>,
    scalars: DMatrix<f64>,
    scalar_names: Vec<String>,
    labels: Vec<usize>,
    label_map: LabelMap,
}

impl Dataset {
    pub fn new(
        functional: Vec<FunctionalCovariate>,
        scalars: DMatrix<f64>,
        scalar_names: Vec<String>,
        labels: Vec<usize>,
        label_map: LabelMap,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Data("dataset has no observations".into()));
        }
        for cov in &functional {
            if cov.raw.nrows() != n || cov.coefficients.nrows() != n {
                return Err(Error::DimensionMismatch(format!(
                    "covariate '{}' has {} rows, expected {n}",
                    cov.name,
                    cov.raw.nrows()
                )));
            }
        }
        if scalars.nrows() != n || scalars.ncols() != scalar_names.len() {
            return Err(Error::DimensionMismatch(format!(
                "scalar block is {}x{}, expected {n}x{}",
                scalars.nrows(),
                scalars.ncols(),
                scalar_names.len()
            )));
        }
        if scalars.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scalar covariates".into()));
        }
        let n_classes = label_map.len();
        if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidLabel { label, n_classes });
        }
        Ok(Self {
            functional,
            scalars,
            scalar_names,
            labels,
            label_map,
        })
    }

    /// Functional covariates only, with numeric label names.
    pub fn functional_only(
        functional: Vec<FunctionalCovariate>,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        let n = labels.len();
        Self::new(
            functional,
            DMatrix::zeros(n, 0),
            Vec::new(),
            labels,
            LabelMap::numeric(n_classes),
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn functional(&self) -> &[FunctionalCovariate] {
        &self.functional
    }

    pub fn n_functional(&self) -> usize {
        self.functional.len()
    }

    pub fn scalars(&self) -> &DMatrix<f64> {
        &self.scalars
    }

    pub fn scalar_names(&self) -> &[String] {
        &self.scalar_names
    }

    pub fn n_scalar(&self) -> usize {
        self.scalars.ncols()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.label_map.len()
    }

    pub fn label_map(&self) -> &LabelMap {
        &self.label_map
    }

    /// Observations at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidArgument(format!(
                "index {bad} out of range for {} observations",
                self.len()
            )));
        }
        Self::new(
            self.functional.iter().map(|c| c.subset(indices)).collect(),
            self.scalars.select_rows(indices),
            self.scalar_names.clone(),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.label_map.clone(),
        )
    }

    /// Appends a functional covariate.
    pub fn with_functional(mut self, covariate: FunctionalCovariate) -> Result<Self> {
        if covariate.raw.nrows() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "covariate '{}' has {} rows, expected {}",
                covariate.name,
                covariate.raw.nrows(),
                self.len()
            )));
        }
        self.functional.push(covariate);
        Ok(self)
    }

    /// Per-class observation counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}
