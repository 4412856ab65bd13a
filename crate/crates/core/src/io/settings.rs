use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{FlmConfig, FlmSolver, DEFAULT_LAMBDA_GRID};
use crate::basis::BasisKind;
use crate::error::{Error, Result};
use crate::fnn::{Activation, NetworkConfig, Optimizer};
use crate::model::ModelSpec;

use super::dataset::{BasisSpec, ColumnSpec, CovariateSchema, DatasetSchema};

/// Hidden widths used when `neurons` is not given: 64 for the first hidden layer, 32 after.
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 32];
pub const DEFAULT_ACTIVATION: Activation = Activation::Relu;
pub const DEFAULT_LEARN_RATE: f64 = 0.01;
pub const DEFAULT_VALIDATION_SPLIT: f64 = 0.2;
pub const DEFAULT_WEIGHT_BASIS: usize = 11;
pub const DEFAULT_EPOCHS: usize = 500;
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_PATIENCE: usize = 30;
pub const DEFAULT_DROPOUT: f64 = 0.3;
pub const DEFAULT_INNER_FOLDS: usize = 5;
pub const DEFAULT_LABEL: &str = "label";
pub const DEFAULT_SMOOTHING: &str = "fourier:35";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Fnn,
    Nn,
    Flm,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fnn" => Ok(Self::Fnn),
            "nn" => Ok(Self::Nn),
            "flm" => Ok(Self::Flm),
            other => Err(Error::InvalidConfig(format!("unknown model '{other}', expected fnn, nn or flm"))),
        }
    }
}

/// A value written either once or as a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn len(&self) -> Option<usize> {
        match self {
            Self::One(_) => None,
            Self::Many(v) => Some(v.len()),
        }
    }

    fn expand(&self, n: usize, key: &str) -> Result<Vec<T>> {
        match self {
            Self::One(v) => Ok(vec![v.clone(); n]),
            Self::Many(v) if v.len() == n => Ok(v.clone()),
            Self::Many(v) => Err(Error::InvalidConfig(format!(
                "'{key}' has {} entries but there are {n} hidden layers",
                v.len()
            ))),
        }
    }
}

/// A functional covariate described in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateSettings {
    pub name: String,
    /// `*`, `FIRST..LAST` or `PREFIX*`.
    #[serde(default)]
    pub columns: Option<String>,
    #[serde(default)]
    pub continuum: Option<PathBuf>,
    #[serde(default)]
    pub basis: Option<String>,
}

/// Run settings as read from a config file or flags. Every key is optional; unset
/// keys fall back to the defaults above.
///
/// `layers` counts hidden layers. `neurons`, `activations` and `dropout` describe the
/// hidden layers only (a single value applies to all of them); the softmax output
/// layer is appended with one unit per class and no dropout. `patience = 0` turns
/// early stopping off.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub model: Option<ModelKind>,
    pub layers: Option<usize>,
    pub neurons: Option<OneOrMany<usize>>,
    pub activations: Option<OneOrMany<Activation>>,
    pub learn_rate: Option<f64>,
    pub decay_rate: Option<f64>,
    pub validation_split: Option<f64>,
    pub weight_basis: Option<OneOrMany<usize>>,
    pub weight_basis_kind: Option<BasisKind>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
    pub dropout: Option<OneOrMany<f64>>,
    pub optimizer: Option<Optimizer>,
    pub standardize: Option<bool>,
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
    pub lambdas: Option<Vec<f64>>,
    pub folds: Option<usize>,
    pub solver: Option<FlmSolver>,
    pub max_iter: Option<usize>,
    pub tolerance: Option<f64>,
    pub label: Option<String>,
    pub scalars: Option<Vec<String>>,
    pub columns: Option<String>,
    /// One-column CSV of continuum values for the single covariate.
    pub continuum: Option<PathBuf>,
    pub basis: Option<String>,
    pub covariate: Option<Vec<CovariateSettings>>,
}

macro_rules! overlay {
    ($base:expr, $over:expr, $($field:ident),* $(,)?) => {
        Settings { $($field: $over.$field.or($base.$field)),* }
    };
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    /// Keys set in `over` replace those in `self`.
    pub fn overlay(self, over: Settings) -> Settings {
        overlay!(
            self,
            over,
            model,
            layers,
            neurons,
            activations,
            learn_rate,
            decay_rate,
            validation_split,
            weight_basis,
            weight_basis_kind,
            epochs,
            batch_size,
            patience,
            dropout,
            optimizer,
            standardize,
            seed,
            lambda,
            lambdas,
            folds,
            solver,
            max_iter,
            tolerance,
            label,
            scalars,
            columns,
            continuum,
            basis,
            covariate,
        )
    }

    pub fn model_kind(&self) -> ModelKind {
        self.model.unwrap_or(ModelKind::Fnn)
    }

    fn weight_basis_vec(&self) -> Vec<usize> {
        match &self.weight_basis {
            None => vec![DEFAULT_WEIGHT_BASIS],
            Some(OneOrMany::One(m)) => vec![*m],
            Some(OneOrMany::Many(v)) => v.clone(),
        }
    }

    /// Network hyperparameters for a problem with `n_classes` classes.
    pub fn network(&self, n_classes: usize) -> Result<NetworkConfig> {
        let lengths = [
            self.neurons.as_ref().and_then(OneOrMany::len),
            self.activations.as_ref().and_then(OneOrMany::len),
            self.dropout.as_ref().and_then(OneOrMany::len),
        ];
        let hidden = match self.layers {
            Some(u) => u,
            None => lengths.iter().flatten().copied().next().unwrap_or(DEFAULT_HIDDEN.len()),
        };
        if hidden == 0 {
            return Err(Error::InvalidConfig("layers must be at least 1".into()));
        }
        let mut neurons = match &self.neurons {
            Some(n) => n.expand(hidden, "neurons")?,
            None => (0..hidden).map(|i| DEFAULT_HIDDEN[i.min(1)]).collect(),
        };
        let mut activations = match &self.activations {
            Some(a) => a.expand(hidden, "activations")?,
            None => vec![DEFAULT_ACTIVATION; hidden],
        };
        let mut dropout = match &self.dropout {
            Some(d) => d.expand(hidden, "dropout")?,
            None => vec![DEFAULT_DROPOUT; hidden],
        };
        neurons.push(n_classes);
        activations.push(Activation::Softmax);
        dropout.push(0.0);
        let config = NetworkConfig {
            neurons,
            activations,
            learn_rate: self.learn_rate.unwrap_or(DEFAULT_LEARN_RATE),
            decay_rate: self.decay_rate.unwrap_or(0.0),
            validation_split: self.validation_split.unwrap_or(DEFAULT_VALIDATION_SPLIT),
            weight_basis: self.weight_basis_vec(),
            weight_basis_kind: self.weight_basis_kind.unwrap_or(BasisKind::Fourier),
            epochs: self.epochs.unwrap_or(DEFAULT_EPOCHS),
            batch_size: self.batch_size.unwrap_or(DEFAULT_BATCH_SIZE),
            patience: match self.patience {
                Some(0) => None,
                Some(p) => Some(p),
                None => Some(DEFAULT_PATIENCE),
            },
            dropout,
            optimizer: self.optimizer.unwrap_or(Optimizer::Adam),
            seed: self.seed.unwrap_or(0),
            standardize: self.standardize.unwrap_or(true),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn flm(&self) -> FlmConfig {
        let defaults = FlmConfig::default();
        FlmConfig {
            weight_basis: self.weight_basis_vec(),
            weight_basis_kind: self.weight_basis_kind.unwrap_or(defaults.weight_basis_kind),
            lambda: self.lambda.unwrap_or(0.0),
            max_iter: self.max_iter.unwrap_or(defaults.max_iter),
            tolerance: self.tolerance.unwrap_or(defaults.tolerance),
            solver: self.solver.unwrap_or(defaults.solver),
            seed: self.seed.unwrap_or(0),
        }
    }

    /// The fully resolved model. An FLM with a fixed `lambda` is fitted directly;
    /// otherwise its penalty is tuned by inner cross-validation over `lambdas`
    /// (default grid when unset).
    pub fn model_spec(&self, n_classes: usize) -> Result<ModelSpec> {
        Ok(match self.model_kind() {
            ModelKind::Fnn => ModelSpec::Fnn(self.network(n_classes)?),
            ModelKind::Nn => ModelSpec::Nn(self.network(n_classes)?),
            ModelKind::Flm if self.lambda.is_some() => ModelSpec::Flm(self.flm()),
            ModelKind::Flm => ModelSpec::FlmTuned {
                config: self.flm(),
                lambdas: self.lambdas.clone().unwrap_or_else(|| DEFAULT_LAMBDA_GRID.to_vec()),
                folds: self.folds.unwrap_or(DEFAULT_INNER_FOLDS),
            },
        })
    }

    /// How to read the dataset. Without `covariate` tables, one covariate `x` is
    /// built from `columns`, `continuum` and `basis`.
    pub fn schema(&self) -> Result<DatasetSchema> {
        let basis = |b: &Option<String>| -> Result<BasisSpec> {
            b.as_deref().unwrap_or(DEFAULT_SMOOTHING).parse()
        };
        let columns = |c: &Option<String>| -> Result<ColumnSpec> { c.as_deref().unwrap_or("*").parse() };
        let functional = match &self.covariate {
            Some(covs) if !covs.is_empty() => covs
                .iter()
                .map(|c| {
                    Ok(CovariateSchema {
                        name: c.name.clone(),
                        columns: columns(&c.columns)?,
                        grid: c.continuum.clone(),
                        basis: basis(&c.basis)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
            _ => vec![CovariateSchema {
                name: "x".into(),
                columns: columns(&self.columns)?,
                grid: self.continuum.clone(),
                basis: basis(&self.basis)?,
            }],
        };
        Ok(DatasetSchema {
            label: self.label.clone().unwrap_or_else(|| DEFAULT_LABEL.to_string()),
            scalars: self.scalars.clone().unwrap_or_default(),
            functional,
        })
    }
}

/// A tuning grid: base settings plus a `[grid]` table mapping keys to candidate lists.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GridFile {
    #[serde(flatten)]
    pub base: toml::Table,
    #[serde(default)]
    pub grid: BTreeMap<String, Vec<toml::Value>>,
}

impl GridFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    /// Cartesian product of the grid, keys in sorted order with the last key varying
    /// fastest. Each point is the base settings with the point's values set on top.
    pub fn expand(&self) -> Result<Vec<Settings>> {
        self.product(self.base.clone())
    }

    /// Like [`GridFile::expand`] but without the base settings.
    pub fn points(&self) -> Result<Vec<Settings>> {
        self.product(toml::Table::new())
    }

    pub fn base_settings(&self) -> Result<Settings> {
        Settings::deserialize(toml::Value::Table(self.base.clone()))
            .map_err(|e| Error::InvalidConfig(e.message().to_string()))
    }

    fn product(&self, start: toml::Table) -> Result<Vec<Settings>> {
        if let Some((key, _)) = self.grid.iter().find(|(_, v)| v.is_empty()) {
            return Err(Error::InvalidConfig(format!("grid key '{key}' has no candidates")));
        }
        let mut points = vec![start];
        for (key, values) in &self.grid {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.insert(key.clone(), v.clone());
                        q
                    })
                })
                .collect();
        }
        points
            .into_iter()
            .map(|table| {
                Settings::deserialize(toml::Value::Table(table))
                    .map_err(|e| Error::InvalidConfig(format!("grid point: {}", e.message())))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_to_a_valid_network() {
        let c = Settings::default().network(3).unwrap();
        assert_eq!(c.neurons, vec![64, 32, 3]);
        assert_eq!(c.activations.last(), Some(&Activation::Softmax));
        assert_eq!(c.dropout, vec![0.3, 0.3, 0.0]);
        assert_eq!(c.patience, Some(30));
        assert_eq!(c.weight_basis, vec![11]);
    }

    #[test]
    fn table_six_keys_parse() {
        let s = Settings::from_toml(
            "layers = 3\nneurons = [16, 8, 4]\nlearn_rate = 0.001\ndecay_rate = 0.01\n\
             validation_split = 0.1\nweight_basis = [5, 7]\nepochs = 20\nbatch_size = 16\n\
             activations = \"tanh\"\npatience = 0\ndropout = 0.1\n",
        )
        .unwrap();
        let c = s.network(2).unwrap();
        assert_eq!(c.neurons, vec![16, 8, 4, 2]);
        assert_eq!(c.activations, vec![Activation::Tanh, Activation::Tanh, Activation::Tanh, Activation::Softmax]);
        assert_eq!(c.weight_basis, vec![5, 7]);
        assert_eq!(c.patience, None);
        assert_eq!((c.epochs, c.batch_size, c.learn_rate, c.decay_rate), (20, 16, 0.001, 0.01));
    }

    #[test]
    fn unknown_keys_and_length_conflicts_fail() {
        assert!(Settings::from_toml("neurns = 4").is_err());
        let s = Settings::from_toml("layers = 2\nneurons = [4, 4, 4]").unwrap();
        assert!(s.network(2).is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = Settings::from_toml("epochs = 20\nseed = 3\nlearn_rate = 0.5").unwrap();
        let flags = Settings {
            seed: Some(9),
            ..Default::default()
        };
        let merged = file.overlay(flags);
        assert_eq!((merged.epochs, merged.seed, merged.learn_rate), (Some(20), Some(9), Some(0.5)));
    }

    #[test]
    fn flm_resolution() {
        let fixed = Settings::from_toml("model = \"flm\"\nlambda = 0.1").unwrap();
        assert!(matches!(fixed.model_spec(2).unwrap(), ModelSpec::Flm(c) if c.lambda == 0.1));
        let tuned = Settings::from_toml("model = \"flm\"").unwrap();
        match tuned.model_spec(2).unwrap() {
            ModelSpec::FlmTuned { lambdas, folds, .. } => {
                assert_eq!(lambdas, DEFAULT_LAMBDA_GRID.to_vec());
                assert_eq!(folds, 5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_from_covariate_tables() {
        let s = Settings::from_toml(
            "label = \"class\"\nscalars = [\"age\"]\n[[covariate]]\nname = \"a\"\ncolumns = \"a*\"\n\
             basis = \"bspline:10:4\"\n[[covariate]]\nname = \"b\"\ncolumns = \"b0..b9\"\n",
        )
        .unwrap();
        let schema = s.schema().unwrap();
        assert_eq!(schema.label, "class");
        assert_eq!(schema.functional.len(), 2);
        assert_eq!(schema.functional[0].columns, ColumnSpec::Prefix("a".into()));
        assert_eq!(schema.functional[1].basis.to_string(), "fourier:35");
    }

    #[test]
    fn grid_expands_in_sorted_key_order() {
        let g = GridFile::from_toml(
            "epochs = 5\n[grid]\nneurons = [[8], [16, 8]]\nlearn_rate = [0.1, 0.01, 0.001]\n",
        )
        .unwrap();
        let points = g.expand().unwrap();
        assert_eq!(points.len(), 6);
        assert!(points.iter().all(|p| p.epochs == Some(5)));
        assert_eq!(points[0].learn_rate, Some(0.1));
        assert_eq!(points[0].neurons, Some(OneOrMany::Many(vec![8])));
        assert_eq!(points[1].neurons, Some(OneOrMany::Many(vec![16, 8])));
        assert_eq!(points[2].learn_rate, Some(0.01));
        assert_eq!(g.points().unwrap()[0].epochs, None);
        assert_eq!(g.base_settings().unwrap().epochs, Some(5));
        assert!(GridFile::from_toml("[grid]\nepochs = []").unwrap().expand().is_err());
    }
}
