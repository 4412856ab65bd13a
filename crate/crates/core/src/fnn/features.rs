use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::InputLayout;
use crate::basis::{BasisKind, BasisSystem, DEFAULT_SPLINE_ORDER};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::quadrature::{FeatureTables, QuadratureRule};

/// Functional-weight basis and quadrature rule for one functional covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateInput {
    pub name: String,
    /// Basis the covariate's curves are expressed in.
    pub curve_basis: BasisSystem,
    /// Basis of the functional weights `β_ik`.
    pub weight_basis: BasisSystem,
    pub rule: QuadratureRule,
}

/// Turns a [`Dataset`] into the network's input matrix: the integral features of every
/// functional covariate followed by the scalar covariates, one column per observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractor {
    covariates: Vec<CovariateInput>,
    scalar_names: Vec<String>,
    n_classes: usize,
}

impl FeatureExtractor {
    /// Builds weight bases of `sizes[k]` functions of `kind` on each covariate's domain.
    pub fn new(data: &Dataset, sizes: &[usize], kind: BasisKind) -> Result<Self> {
        if sizes.len() != data.n_functional() {
            return Err(Error::DimensionMismatch(format!(
                "{} weight basis sizes for {} functional covariates",
                sizes.len(),
                data.n_functional()
            )));
        }
        let covariates = data
            .functional()
            .iter()
            .zip(sizes)
            .map(|(cov, &m)| {
                let domain = cov.basis().domain();
                Ok(CovariateInput {
                    name: cov.name().to_string(),
                    curve_basis: cov.basis().clone(),
                    weight_basis: BasisSystem::new(kind, domain, m, DEFAULT_SPLINE_ORDER)?,
                    rule: QuadratureRule::for_grid(domain, cov.grid())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            covariates,
            scalar_names: data.scalar_names().to_vec(),
            n_classes: data.n_classes(),
        })
    }

    pub fn covariates(&self) -> &[CovariateInput] {
        &self.covariates
    }

    pub fn layout(&self) -> InputLayout {
        InputLayout {
            functional: self.covariates.iter().map(|c| c.weight_basis.n_basis()).collect(),
            n_scalar: self.scalar_names.len(),
            n_classes: self.n_classes,
        }
    }

    /// The `(Σ M_k + J) × N` input matrix.
    pub fn extract(&self, data: &Dataset) -> Result<DMatrix<f64>> {
        self.check(data)?;
        let layout = self.layout();
        let n = data.len();
        let mut out = DMatrix::zeros(layout.n_inputs(), n);
        for (k, (input, cov)) in self.covariates.iter().zip(data.functional()).enumerate() {
            let tables = FeatureTables::new(&input.curve_basis, &input.weight_basis, &input.rule)?;
            let coefs = cov.coefficients();
            let columns: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let c: Vec<f64> = coefs.row(i).iter().copied().collect();
                    tables.features(&c)
                })
                .collect();
            let start = layout.functional_range(k).start;
            for (i, col) in columns.into_iter().enumerate() {
                for (m, v) in col.into_iter().enumerate() {
                    out[(start + m, i)] = v;
                }
            }
        }
        let start = layout.scalar_range().start;
        for i in 0..n {
            for j in 0..layout.n_scalar {
                out[(start + j, i)] = data.scalars()[(i, j)];
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("integral features".into()));
        }
        Ok(out)
    }

    fn check(&self, data: &Dataset) -> Result<()> {
        if data.n_functional() != self.covariates.len() || data.n_scalar() != self.scalar_names.len() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} functional and {} scalar covariates, data has {} and {}",
                self.covariates.len(),
                self.scalar_names.len(),
                data.n_functional(),
                data.n_scalar()
            )));
        }
        for (input, cov) in self.covariates.iter().zip(data.functional()) {
            if &input.curve_basis != cov.basis() {
                return Err(Error::DimensionMismatch(format!(
                    "covariate '{}' is expressed in a different basis than at training time",
                    cov.name()
                )));
            }
        }
        if data.n_classes() != self.n_classes {
            return Err(Error::DimensionMismatch(format!(
                "model has {} classes, data has {}",
                self.n_classes,
                data.n_classes()
            )));
        }
        Ok(())
    }
}
