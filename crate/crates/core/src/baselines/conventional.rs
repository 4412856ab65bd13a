use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Treats every sampled grid point of every functional covariate as a separate scalar
/// covariate, ahead of any existing scalars. The result has no functional covariates,
/// so a network trained on it performs no quadrature.
pub fn make_conventional_nn_dataset(data: &Dataset) -> Result<Dataset> {
    let n = data.len();
    let widths: Vec<usize> = data.functional().iter().map(|c| c.raw().ncols()).collect();
    let total = widths.iter().sum::<usize>() + data.n_scalar();
    let mut scalars = DMatrix::zeros(n, total);
    let mut names = Vec::with_capacity(total);
    let mut col = 0;
    for cov in data.functional() {
        for (p, t) in cov.grid().points().iter().enumerate() {
            scalars.set_column(col, &cov.raw().column(p));
            names.push(format!("{}@{t}", cov.name()));
            col += 1;
        }
    }
    for j in 0..data.n_scalar() {
        scalars.set_column(col, &data.scalars().column(j));
        names.push(data.scalar_names()[j].clone());
        col += 1;
    }
    Dataset::new(
        Vec::new(),
        scalars,
        names,
        data.labels().to_vec(),
        data.label_map().clone(),
    )
}

/// Builds a dataset straight from a rectangular matrix of raw grid values.
pub fn raw_matrix_dataset(
    rows: &[Vec<f64>],
    labels: Vec<usize>,
    n_classes: usize,
) -> Result<Dataset> {
    let width = rows.first().map(Vec::len).unwrap_or(0);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
        return Err(Error::Data(format!(
            "ragged input: row {i} has {} values, expected {width}",
            r.len()
        )));
    }
    let scalars = DMatrix::from_fn(rows.len(), width, |i, p| rows[i][p]);
    Dataset::new(
        Vec::new(),
        scalars,
        (0..width).map(|p| format!("x{p}")).collect(),
        labels,
        crate::data::LabelMap::numeric(n_classes),
    )
}
