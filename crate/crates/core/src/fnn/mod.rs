//! Functional neural networks.
//!
//! A [`FnnModel`] couples a [`FeatureExtractor`] (integral features of each functional
//! covariate against its functional-weight basis) with a [`Network`] whose first layer
//! consumes those features together with any scalar covariates.

mod config;
mod features;
mod network;
mod train;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use config::{Activation, NetworkConfig, Optimizer};
pub use features::{CovariateInput, FeatureExtractor};
pub use network::{
    cross_entropy, mean_cross_entropy, softmax_columns, BlockDocument, ForwardPass, InputLayout, LayerCache,
    LayerDocument, Network, NetworkDocument, OptimizerState, PROBABILITY_FLOOR,
};
pub use train::{argmax, train_network, EarlyStopping, StopDecision, TrainHistory};

use crate::basis::Grid;
use crate::data::{Dataset, LabelMap};
use crate::error::{Error, Result};

/// Predicted labels and the `N × H` class-probability matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<usize>,
    pub probabilities: DMatrix<f64>,
}

impl Prediction {
    /// Labels by argmax, ties to the lowest class index.
    pub fn from_probabilities(probabilities: DMatrix<f64>) -> Self {
        let labels = probabilities
            .row_iter()
            .map(|r| argmax(r.iter().copied()))
            .collect();
        Self {
            labels,
            probabilities,
        }
    }
}

/// Per-input centering and scaling fitted on training inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Means and sample standard deviations of each row of a `d × N` input matrix.
    /// Rows that are (numerically) constant keep a scale of 1.
    pub fn fit(inputs: &DMatrix<f64>) -> Self {
        let n = inputs.ncols() as f64;
        let (mean, scale) = inputs
            .row_iter()
            .map(|row| {
                let mean = row.sum() / n;
                let var = if n > 1.0 {
                    row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                let sd = var.sqrt();
                (mean, if sd > 1e-12 * mean.abs().max(1.0) { sd } else { 1.0 })
            })
            .unzip();
        Self { mean, scale }
    }

    pub fn apply(&self, inputs: &mut DMatrix<f64>) -> Result<()> {
        if inputs.nrows() != self.mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "standardizer has {} inputs, data has {}",
                self.mean.len(),
                inputs.nrows()
            )));
        }
        for (r, mut row) in inputs.row_iter_mut().enumerate() {
            row.apply(|v| *v = (*v - self.mean[r]) / self.scale[r]);
        }
        Ok(())
    }
}

/// A trained functional neural network together with its input pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FnnModel {
    pub extractor: FeatureExtractor,
    /// Present when the network was trained on standardized inputs.
    #[serde(default)]
    pub scaler: Option<Standardizer>,
    pub network: Network,
    pub label_map: LabelMap,
}

impl FnnModel {
    /// Randomly initialized (untrained) model for `data`'s layout.
    pub fn init(data: &Dataset, config: &NetworkConfig, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        let sizes = config.weight_basis_sizes(data.n_functional())?;
        let extractor = FeatureExtractor::new(data, &sizes, config.weight_basis_kind)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let network = Network::init(config, extractor.layout(), &mut rng)?;
        Ok(Self {
            extractor,
            scaler: None,
            network,
            label_map: data.label_map().clone(),
        })
    }

    /// The network's input matrix for `data`, standardized if the model was.
    pub fn inputs(&self, data: &Dataset) -> Result<DMatrix<f64>> {
        let mut inputs = self.extractor.extract(data)?;
        if let Some(scaler) = &self.scaler {
            scaler.apply(&mut inputs)?;
        }
        Ok(inputs)
    }

    pub fn predict(&self, data: &Dataset) -> Result<Prediction> {
        let inputs = self.inputs(data)?;
        let pass = self.network.forward(&inputs)?;
        Ok(Prediction::from_probabilities(pass.probabilities().transpose()))
    }

    /// `β̂_k(t) = (1/n₁) Σ_i Σ_m c_ikm φ_km(t)` on `grid`, with coefficients mapped back
    /// to the unstandardized feature scale.
    pub fn functional_weight(&self, k: usize, grid: &Grid) -> Result<Vec<f64>> {
        let input = self.extractor.covariates().get(k).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "functional covariate {k} does not exist (K = {})",
                self.extractor.covariates().len()
            ))
        })?;
        let coefs = self.network.functional_coefficients(k)?;
        let n1 = coefs.nrows() as f64;
        let mut mean: Vec<f64> = coefs.row_sum().iter().map(|s| s / n1).collect();
        if let Some(scaler) = &self.scaler {
            let start = self.extractor.layout().functional_range(k).start;
            for (m, c) in mean.iter_mut().enumerate() {
                *c /= scaler.scale[start + m];
            }
        }
        let phi = input.weight_basis.eval(grid)?;
        Ok(phi
            .row_iter()
            .map(|row| row.iter().zip(&mean).map(|(p, c)| p * c).sum())
            .collect())
    }
}

/// Extracts features from `data`, trains a network and returns the model with its history.
pub fn train(data: &Dataset, config: &NetworkConfig) -> Result<(FnnModel, TrainHistory)> {
    config.validate()?;
    let sizes = config.weight_basis_sizes(data.n_functional())?;
    let extractor = FeatureExtractor::new(data, &sizes, config.weight_basis_kind)?;
    let mut inputs = extractor.extract(data)?;
    let scaler = config.standardize.then(|| Standardizer::fit(&inputs));
    if let Some(scaler) = &scaler {
        scaler.apply(&mut inputs)?;
    }
    let (network, history) = train_network(&inputs, data.labels(), extractor.layout(), config)?;
    Ok((
        FnnModel {
            extractor,
            scaler,
            network,
            label_map: data.label_map().clone(),
        },
        history,
    ))
}

/// Free-function form of [`FnnModel::predict`].
pub fn predict(model: &FnnModel, data: &Dataset) -> Result<Prediction> {
    model.predict(data)
}

/// Free-function form of [`FnnModel::functional_weight`].
pub fn extract_functional_weights(model: &FnnModel, k: usize, grid: &Grid) -> Result<Vec<f64>> {
    model.functional_weight(k, grid)
}
