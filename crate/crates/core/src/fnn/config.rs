use serde::{Deserialize, Serialize};

use crate::basis::BasisKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Linear,
    Softmax,
}

impl Activation {
    /// Elementwise activation; softmax is handled column-wise by the network.
    pub(crate) fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => {
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Linear | Activation::Softmax => z,
        }
    }

    /// Derivative in terms of the preactivation `z` and activation `a = g(z)`.
    pub(crate) fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
            Activation::Linear | Activation::Softmax => 1.0,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "linear" | "identity" => Ok(Activation::Linear),
            "softmax" => Ok(Activation::Softmax),
            other => Err(Error::InvalidConfig(format!("unknown activation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(Error::InvalidConfig(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// Hyperparameters of a functional neural network.
///
/// Per-layer fields (`neurons`, `activations`, `dropout`) have one entry per layer
/// including the output layer, whose width is the number of classes and whose
/// activation is softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub neurons: Vec<usize>,
    pub activations: Vec<Activation>,
    pub learn_rate: f64,
    pub decay_rate: f64,
    pub validation_split: f64,
    /// Number of basis functions `M_k` for each functional weight. A single entry is
    /// shared by every functional covariate.
    pub weight_basis: Vec<usize>,
    pub weight_basis_kind: BasisKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: Option<usize>,
    pub dropout: Vec<f64>,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Center and scale every network input by its training mean and standard deviation.
    #[serde(default = "default_standardize")]
    pub standardize: bool,
}

fn default_standardize() -> bool {
    true
}

impl NetworkConfig {
    /// One hidden layer of `hidden` units feeding a softmax over `n_classes`.
    pub fn single_hidden(hidden: usize, activation: Activation, n_classes: usize) -> Self {
        Self {
            neurons: vec![hidden, n_classes],
            activations: vec![activation, Activation::Softmax],
            learn_rate: 0.01,
            decay_rate: 0.0,
            validation_split: 0.0,
            weight_basis: vec![5],
            weight_basis_kind: BasisKind::Fourier,
            epochs: 100,
            batch_size: 32,
            patience: None,
            dropout: vec![0.0, 0.0],
            optimizer: Optimizer::Adam,
            seed: 0,
            standardize: true,
        }
    }

    pub fn n_layers(&self) -> usize {
        self.neurons.len()
    }

    /// Checks the structural invariants that do not depend on the data.
    pub fn validate(&self) -> Result<()> {
        let u = self.neurons.len();
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if u == 0 {
            return bad("at least one layer is required".into());
        }
        if self.activations.len() != u || self.dropout.len() != u {
            return bad(format!(
                "{u} layers but {} activations and {} dropout rates",
                self.activations.len(),
                self.dropout.len()
            ));
        }
        if self.neurons.contains(&0) {
            return bad("every layer needs at least one neuron".into());
        }
        if self.activations[u - 1] != Activation::Softmax {
            return bad("the final activation must be softmax".into());
        }
        if self.activations[..u - 1].contains(&Activation::Softmax) {
            return bad("softmax is only allowed on the output layer".into());
        }
        if !(self.learn_rate.is_finite() && self.learn_rate > 0.0) {
            return bad(format!("learn_rate must be positive, got {}", self.learn_rate));
        }
        if !(self.decay_rate.is_finite() && self.decay_rate >= 0.0) {
            return bad(format!("decay_rate must be >= 0, got {}", self.decay_rate));
        }
        if !(0.0..1.0).contains(&self.validation_split) {
            return bad(format!(
                "validation_split must lie in [0, 1), got {}",
                self.validation_split
            ));
        }
        if self.weight_basis.contains(&0) {
            return bad("every functional weight needs at least one basis function".into());
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be at least 1".into());
        }
        if self.patience == Some(0) {
            return bad("patience must be positive when set".into());
        }
        if let Some(r) = self.dropout.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return bad(format!("dropout rates must lie in [0, 1), got {r}"));
        }
        if self.dropout[u - 1] != 0.0 {
            return bad("dropout cannot be applied to the output layer".into());
        }
        Ok(())
    }

    /// `M_k` for each of `k` functional covariates.
    pub fn weight_basis_sizes(&self, k: usize) -> Result<Vec<usize>> {
        match self.weight_basis.len() {
            _ if k == 0 => Ok(Vec::new()),
            1 => Ok(vec![self.weight_basis[0]; k]),
            n if n == k => Ok(self.weight_basis.clone()),
            n => Err(Error::InvalidConfig(format!(
                "{n} weight basis sizes for {k} functional covariates"
            ))),
        }
    }
}
