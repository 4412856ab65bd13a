//! Model specifications, fitted models and the versioned model file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{fit_flm, make_conventional_nn_dataset, FlmConfig, FlmModel};
use crate::data::{Dataset, LabelMap};
use crate::error::{Error, Result};
use crate::eval::{grid_search, Selection};
use crate::fnn::{self, FnnModel, NetworkConfig, Prediction, TrainHistory};

/// Identifier written into every model file.
pub const MODEL_FORMAT: &str = "funcnn-model";
/// Current model file version.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// What to fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "config", rename_all = "snake_case")]
pub enum ModelSpec {
    /// Functional network on integral features.
    Fnn(NetworkConfig),
    /// Conventional network on the raw grid values.
    Nn(NetworkConfig),
    /// Penalized functional multinomial regression with a fixed penalty.
    Flm(FlmConfig),
    /// Penalized functional regression with the penalty chosen by inner cross-validation.
    FlmTuned {
        config: FlmConfig,
        lambdas: Vec<f64>,
        folds: usize,
    },
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Fnn(_) => "fnn",
            Self::Nn(_) => "nn",
            Self::Flm(_) | Self::FlmTuned { .. } => "flm",
        }
    }

    /// The same specification with every seed replaced by `seed`.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut out = self.clone();
        match &mut out {
            Self::Fnn(c) | Self::Nn(c) => c.seed = seed,
            Self::Flm(c) | Self::FlmTuned { config: c, .. } => c.seed = seed,
        }
        out
    }

    /// Number of trainable parameters for `data`'s layout.
    pub fn n_params(&self, data: &Dataset) -> Result<usize> {
        match self {
            Self::Fnn(c) => Ok(FnnModel::init(data, c, c.seed)?.network.n_params()),
            Self::Nn(c) => {
                let conv = make_conventional_nn_dataset(data)?;
                Ok(FnnModel::init(&conv, c, c.seed)?.network.n_params())
            }
            Self::Flm(c) | Self::FlmTuned { config: c, .. } => {
                let per_class: usize = match c.weight_basis.len() {
                    1 => c.weight_basis[0] * data.n_functional(),
                    _ => c.weight_basis.iter().sum(),
                };
                Ok(data.n_classes() * (1 + per_class + data.n_scalar()))
            }
        }
    }

    /// Fits on all of `data`. Networks also return their training history.
    pub fn fit(&self, data: &Dataset) -> Result<(FittedModel, Option<TrainHistory>)> {
        match self {
            Self::Fnn(c) => {
                let (model, history) = fnn::train(data, c)?;
                Ok((FittedModel::Fnn(model), Some(history)))
            }
            Self::Nn(c) => {
                let conv = make_conventional_nn_dataset(data)?;
                let (model, history) = fnn::train(&conv, c)?;
                Ok((FittedModel::Nn(model), Some(history)))
            }
            Self::Flm(c) => Ok((FittedModel::Flm(fit_flm(data, c)?), None)),
            Self::FlmTuned {
                config,
                lambdas,
                folds,
            } => {
                let lambda = tune_lambda(data, config, lambdas, *folds)?;
                let tuned = FlmConfig {
                    lambda,
                    ..config.clone()
                };
                Ok((FittedModel::Flm(fit_flm(data, &tuned)?), None))
            }
        }
    }
}

fn tune_lambda(data: &Dataset, config: &FlmConfig, lambdas: &[f64], folds: usize) -> Result<f64> {
    if lambdas.is_empty() {
        return Err(Error::InvalidConfig("the penalty grid is empty".into()));
    }
    if lambdas.len() == 1 {
        return Ok(lambdas[0]);
    }
    let grid: Vec<ModelSpec> = lambdas
        .iter()
        .map(|&lambda| {
            ModelSpec::Flm(FlmConfig {
                lambda,
                ..config.clone()
            })
        })
        .collect();
    let result = grid_search(data, &grid, Selection::KFold(folds), config.seed)?;
    Ok(lambdas[result.best])
}

/// A trained model of any kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum FittedModel {
    Fnn(FnnModel),
    /// Network trained on the raw grid values of every functional covariate.
    Nn(FnnModel),
    Flm(FlmModel),
}

impl FittedModel {
    pub fn predict(&self, data: &Dataset) -> Result<Prediction> {
        match self {
            Self::Fnn(m) => m.predict(data),
            Self::Nn(m) => m.predict(&make_conventional_nn_dataset(data)?),
            Self::Flm(m) => m.predict(data),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Self::Fnn(m) | Self::Nn(m) => m.network.n_params(),
            Self::Flm(m) => m.n_params(),
        }
    }

    pub fn label_map(&self) -> &LabelMap {
        match self {
            Self::Fnn(m) | Self::Nn(m) => &m.label_map,
            Self::Flm(m) => &m.label_map,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Fnn(_) => "fnn",
            Self::Nn(_) => "nn",
            Self::Flm(_) => "flm",
        }
    }
}

/// On-disk form of a [`FittedModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub format_version: u32,
    #[serde(flatten)]
    pub model: FittedModel,
}

impl ModelFile {
    pub fn new(model: FittedModel) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            format_version: MODEL_FORMAT_VERSION,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let header: serde_json::Value = serde_json::from_str(text)?;
        let format = header.get("format").and_then(|v| v.as_str());
        if format != Some(MODEL_FORMAT) {
            return Err(Error::ModelFormat(format!(
                "not a model file (format {:?})",
                format.unwrap_or("missing")
            )));
        }
        let version = header.get("format_version").and_then(|v| v.as_u64());
        if version != Some(u64::from(MODEL_FORMAT_VERSION)) {
            return Err(Error::ModelFormat(format!(
                "unsupported model file version {:?}, expected {MODEL_FORMAT_VERSION}",
                version
            )));
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
