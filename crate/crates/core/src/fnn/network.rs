//! Parameter storage, forward and backward passes, and optimizer updates.
//!
//! The first layer receives, for every observation, the integral features
//! `J_km = ∫ φ_km(t) x_k(t) dt` of each functional covariate followed by the scalar
//! covariates. Neuron `i` of that layer computes
//! `g(Σ_k Σ_m c_ikm J_km + Σ_j w_ij z_j + b_i)`, so the functional weights enter only
//! through their basis coefficients `c_ikm`.
//!
//! All parameters live in one flat vector. Each layer owns a list of weight blocks
//! (one per functional covariate plus one for the scalar covariates in the first
//! layer, a single block afterwards) and a bias vector. Blocks are stored column-major.

use nalgebra::{DMatrix, DMatrixView};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::config::{Activation, NetworkConfig, Optimizer};
use crate::error::{Error, Result};

/// Probability floor used by the cross-entropy loss.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPSILON: f64 = 1e-8;

/// Widths of the network inputs: `M_k` per functional covariate, `J` scalars, `H` classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputLayout {
    pub functional: Vec<usize>,
    pub n_scalar: usize,
    pub n_classes: usize,
}

impl InputLayout {
    pub fn n_inputs(&self) -> usize {
        self.functional.iter().sum::<usize>() + self.n_scalar
    }

    /// Row range of covariate `k`'s integral features in an input column.
    pub fn functional_range(&self, k: usize) -> std::ops::Range<usize> {
        let start: usize = self.functional[..k].iter().sum();
        start..start + self.functional[k]
    }

    pub fn scalar_range(&self) -> std::ops::Range<usize> {
        let start: usize = self.functional.iter().sum();
        start..start + self.n_scalar
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Block {
    input_start: usize,
    input_len: usize,
    offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct LayerShape {
    n_in: usize,
    n_out: usize,
    blocks: Vec<Block>,
    bias_offset: usize,
    activation: Activation,
    dropout: f64,
}

fn build_shapes(config: &NetworkConfig, layout: &InputLayout) -> (Vec<LayerShape>, usize) {
    let mut offset = 0;
    let mut shapes = Vec::with_capacity(config.n_layers());
    let mut n_in = layout.n_inputs();
    for (u, &n_out) in config.neurons.iter().enumerate() {
        let mut blocks = Vec::new();
        let widths: Vec<usize> = if u == 0 {
            let mut w = layout.functional.clone();
            w.push(layout.n_scalar);
            w
        } else {
            vec![n_in]
        };
        let mut input_start = 0;
        for width in widths {
            blocks.push(Block {
                input_start,
                input_len: width,
                offset,
            });
            input_start += width;
            offset += n_out * width;
        }
        shapes.push(LayerShape {
            n_in,
            n_out,
            blocks,
            bias_offset: offset,
            activation: config.activations[u],
            dropout: config.dropout[u],
        });
        offset += n_out;
        n_in = n_out;
    }
    (shapes, offset)
}

/// Adam moments (empty for SGD) and the number of updates applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

/// A functional neural network's parameters together with its configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "NetworkDocument", try_from = "NetworkDocument")]
pub struct Network {
    config: NetworkConfig,
    layout: InputLayout,
    shapes: Vec<LayerShape>,
    params: Vec<f64>,
    optimizer: OptimizerState,
}

/// Cached quantities of one layer from a forward pass.
#[derive(Debug, Clone)]
pub struct LayerCache {
    pre: DMatrix<f64>,
    activated: DMatrix<f64>,
    output: DMatrix<f64>,
    mask: Option<DMatrix<f64>>,
}

impl LayerCache {
    /// Preactivations, one column per observation.
    pub fn preactivations(&self) -> &DMatrix<f64> {
        &self.pre
    }

    /// Layer outputs after activation and (when training) dropout.
    pub fn outputs(&self) -> &DMatrix<f64> {
        &self.output
    }
}

/// The result of [`Network::forward`]: per-layer caches and class probabilities.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    inputs: DMatrix<f64>,
    layers: Vec<LayerCache>,
}

impl ForwardPass {
    /// `H × B` class probabilities.
    pub fn probabilities(&self) -> &DMatrix<f64> {
        &self.layers.last().expect("at least one layer").output
    }

    pub fn layers(&self) -> &[LayerCache] {
        &self.layers
    }
}

/// Cross-entropy `−log(max(p_label, floor))`.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    let p = probs.get(label).ok_or(Error::InvalidLabel {
        label,
        n_classes: probs.len(),
    })?;
    Ok(-p.max(PROBABILITY_FLOOR).ln())
}

/// Mean cross-entropy over the columns of an `H × B` probability matrix.
pub fn mean_cross_entropy(probs: &DMatrix<f64>, labels: &[usize]) -> Result<f64> {
    if probs.ncols() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} probability columns for {} labels",
            probs.ncols(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (j, &label) in labels.iter().enumerate() {
        let col: Vec<f64> = probs.column(j).iter().copied().collect();
        total += cross_entropy(&col, label)?;
    }
    Ok(total / labels.len() as f64)
}

/// Column-wise softmax with max-subtraction.
pub fn softmax_columns(z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = z.clone();
    for mut col in out.column_iter_mut() {
        let max = col.max();
        col.apply(|v| *v = (*v - max).exp());
        let sum = col.sum();
        col /= sum;
    }
    out
}

impl Network {
    /// Glorot-uniform weights and zero biases drawn from `rng`.
    pub fn init(config: &NetworkConfig, layout: InputLayout, rng: &mut impl RngCore) -> Result<Self> {
        config.validate()?;
        if layout.n_inputs() == 0 {
            return Err(Error::InvalidConfig("the network has no inputs".into()));
        }
        let sizes = config.weight_basis_sizes(layout.functional.len())?;
        if sizes != layout.functional {
            return Err(Error::DimensionMismatch(format!(
                "weight basis sizes {:?} do not match input layout {:?}",
                sizes, layout.functional
            )));
        }
        let n_out = *config.neurons.last().expect("validated");
        if n_out != layout.n_classes {
            return Err(Error::InvalidConfig(format!(
                "the output layer has {n_out} neurons but there are {} classes",
                layout.n_classes
            )));
        }
        let (shapes, n_params) = build_shapes(config, &layout);
        let mut params = vec![0.0; n_params];
        for shape in &shapes {
            let bound = (6.0 / (shape.n_in + shape.n_out) as f64).sqrt();
            for block in &shape.blocks {
                let len = block.input_len * shape.n_out;
                for p in &mut params[block.offset..block.offset + len] {
                    *p = rng.random_range(-bound..=bound);
                }
            }
        }
        let optimizer = OptimizerState {
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        };
        Ok(Self {
            config: config.clone(),
            layout,
            shapes,
            params,
            optimizer,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layout(&self) -> &InputLayout {
        &self.layout
    }

    /// Flat parameter vector.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn optimizer_state(&self) -> &OptimizerState {
        &self.optimizer
    }

    /// Parameters of the first layer: `n₁ · (Σ_k M_k + J + 1)`.
    pub fn first_layer_param_count(&self) -> usize {
        let s = &self.shapes[0];
        s.n_out * (s.n_in + 1)
    }

    fn block_view(&self, layer: usize, block: usize) -> DMatrixView<'_, f64> {
        let shape = &self.shapes[layer];
        let b = shape.blocks[block];
        let len = shape.n_out * b.input_len;
        DMatrixView::from_slice(&self.params[b.offset..b.offset + len], shape.n_out, b.input_len)
    }

    /// `n₁ × M_k` matrix of the coefficients `c_ikm` of covariate `k`'s functional weights.
    pub fn functional_coefficients(&self, k: usize) -> Result<DMatrix<f64>> {
        self.check_functional_index(k)?;
        Ok(self.block_view(0, k).into_owned())
    }

    pub fn set_functional_coefficients(&mut self, k: usize, coefs: &DMatrix<f64>) -> Result<()> {
        self.check_functional_index(k)?;
        let shape = &self.shapes[0];
        let b = shape.blocks[k];
        if coefs.shape() != (shape.n_out, b.input_len) {
            return Err(Error::DimensionMismatch(format!(
                "expected a {}x{} coefficient matrix, got {:?}",
                shape.n_out,
                b.input_len,
                coefs.shape()
            )));
        }
        self.params[b.offset..b.offset + coefs.len()].copy_from_slice(coefs.as_slice());
        Ok(())
    }

    fn check_functional_index(&self, k: usize) -> Result<()> {
        if k >= self.layout.functional.len() {
            return Err(Error::InvalidArgument(format!(
                "functional covariate {k} does not exist (K = {})",
                self.layout.functional.len()
            )));
        }
        Ok(())
    }

    /// `n₁ × J` first-layer scalar weights.
    pub fn scalar_weights(&self) -> DMatrix<f64> {
        self.block_view(0, self.layout.functional.len()).into_owned()
    }

    /// Weight matrices of each layer's blocks concatenated along the input axis.
    pub fn layer_weights(&self, layer: usize) -> DMatrix<f64> {
        let shape = &self.shapes[layer];
        let mut w = DMatrix::zeros(shape.n_out, shape.n_in);
        for (bi, b) in shape.blocks.iter().enumerate() {
            w.columns_mut(b.input_start, b.input_len)
                .copy_from(&self.block_view(layer, bi));
        }
        w
    }

    pub fn layer_bias(&self, layer: usize) -> Vec<f64> {
        let shape = &self.shapes[layer];
        self.params[shape.bias_offset..shape.bias_offset + shape.n_out].to_vec()
    }

    /// Inference-mode forward pass over an `(Σ M_k + J) × B` input matrix.
    pub fn forward(&self, inputs: &DMatrix<f64>) -> Result<ForwardPass> {
        self.forward_with(inputs, None)
    }

    /// Training-mode forward pass with fresh inverted-dropout masks drawn from `rng`.
    pub fn forward_train(&self, inputs: &DMatrix<f64>, rng: &mut impl RngCore) -> Result<ForwardPass> {
        let masks: Vec<Option<DMatrix<f64>>> = self
            .shapes
            .iter()
            .map(|s| {
                (s.dropout > 0.0).then(|| {
                    let keep = 1.0 - s.dropout;
                    DMatrix::from_fn(s.n_out, inputs.ncols(), |_, _| {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                })
            })
            .collect();
        self.forward_with(inputs, Some(&masks))
    }

    pub(crate) fn forward_with(
        &self,
        inputs: &DMatrix<f64>,
        masks: Option<&[Option<DMatrix<f64>>]>,
    ) -> Result<ForwardPass> {
        if inputs.nrows() != self.layout.n_inputs() {
            return Err(Error::DimensionMismatch(format!(
                "inputs have {} rows, the network expects {}",
                inputs.nrows(),
                self.layout.n_inputs()
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network inputs".into()));
        }
        let batch = inputs.ncols();
        let mut layers: Vec<LayerCache> = Vec::with_capacity(self.shapes.len());
        for (u, shape) in self.shapes.iter().enumerate() {
            let prev = if u == 0 { inputs } else { &layers[u - 1].output };
            let mut pre = DMatrix::zeros(shape.n_out, batch);
            for (bi, b) in shape.blocks.iter().enumerate() {
                if b.input_len > 0 {
                    pre += self.block_view(u, bi) * prev.rows(b.input_start, b.input_len);
                }
            }
            let bias = &self.params[shape.bias_offset..shape.bias_offset + shape.n_out];
            for mut col in pre.column_iter_mut() {
                for (v, b) in col.iter_mut().zip(bias) {
                    *v += b;
                }
            }
            let activated = if shape.activation == Activation::Softmax {
                softmax_columns(&pre)
            } else {
                pre.map(|z| shape.activation.apply(z))
            };
            let mask = masks.and_then(|m| m[u].clone());
            let output = match &mask {
                Some(m) => activated.component_mul(m),
                None => activated.clone(),
            };
            layers.push(LayerCache {
                pre,
                activated,
                output,
                mask,
            });
        }
        Ok(ForwardPass {
            inputs: inputs.clone(),
            layers,
        })
    }

    /// Exact gradients of the mean batch cross-entropy with respect to every parameter,
    /// in the layout of [`Network::params`].
    pub fn backward(&self, pass: &ForwardPass, labels: &[usize]) -> Result<Vec<f64>> {
        let probs = pass.probabilities();
        let batch = probs.ncols();
        if labels.len() != batch {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for a batch of {batch}",
                labels.len()
            )));
        }
        let mut delta = probs.clone();
        for (j, &label) in labels.iter().enumerate() {
            if label >= self.layout.n_classes {
                return Err(Error::InvalidLabel {
                    label,
                    n_classes: self.layout.n_classes,
                });
            }
            if probs[(label, j)] < PROBABILITY_FLOOR {
                // The clamped loss is flat here.
                delta.column_mut(j).fill(0.0);
            } else {
                delta[(label, j)] -= 1.0;
            }
        }
        delta /= batch as f64;

        let mut grads = vec![0.0; self.params.len()];
        for u in (0..self.shapes.len()).rev() {
            let shape = &self.shapes[u];
            let prev = if u == 0 { &pass.inputs } else { &pass.layers[u - 1].output };
            for b in &shape.blocks {
                if b.input_len == 0 {
                    continue;
                }
                let g = &delta * prev.rows(b.input_start, b.input_len).transpose();
                grads[b.offset..b.offset + g.len()].copy_from_slice(g.as_slice());
            }
            for i in 0..shape.n_out {
                grads[shape.bias_offset + i] = delta.row(i).sum();
            }
            if u > 0 {
                let mut back = DMatrix::zeros(shape.n_in, batch);
                for (bi, b) in shape.blocks.iter().enumerate() {
                    back.rows_mut(b.input_start, b.input_len)
                        .gemm_tr(1.0, &self.block_view(u, bi), &delta, 1.0);
                }
                let below = &pass.layers[u - 1];
                let act = self.shapes[u - 1].activation;
                for ((d, z), a) in back
                    .iter_mut()
                    .zip(below.pre.iter())
                    .zip(below.activated.iter())
                {
                    *d *= act.derivative(*z, *a);
                }
                if let Some(mask) = &below.mask {
                    back.component_mul_assign(mask);
                }
                delta = back;
            }
        }
        Ok(grads)
    }

    /// Learning rate after inverse-time decay: `γ / (1 + decay · epoch)`.
    pub fn effective_learn_rate(&self, epoch: usize) -> f64 {
        self.config.learn_rate / (1.0 + self.config.decay_rate * epoch as f64)
    }

    /// Applies one SGD or Adam update.
    pub fn step(&mut self, grads: &[f64], epoch: usize) -> Result<()> {
        if grads.len() != self.params.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.params.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of parameter {i} at epoch {epoch} (value {})",
                grads[i]
            )));
        }
        let lr = self.effective_learn_rate(epoch);
        self.optimizer.step += 1;
        match self.config.optimizer {
            Optimizer::Sgd => {
                for (p, g) in self.params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            Optimizer::Adam => {
                let n = self.params.len();
                if self.optimizer.first_moment.len() != n {
                    self.optimizer.first_moment = vec![0.0; n];
                    self.optimizer.second_moment = vec![0.0; n];
                }
                let t = self.optimizer.step as i32;
                let c1 = 1.0 - ADAM_BETA1.powi(t);
                let c2 = 1.0 - ADAM_BETA2.powi(t);
                let state = &mut self.optimizer;
                for (((p, g), m), v) in self
                    .params
                    .iter_mut()
                    .zip(grads)
                    .zip(state.first_moment.iter_mut())
                    .zip(state.second_moment.iter_mut())
                {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPSILON);
                }
            }
        }
        Ok(())
    }

    pub(crate) fn replace_params(&mut self, params: Vec<f64>) {
        debug_assert_eq!(params.len(), self.params.len());
        self.params = params;
    }
}

/// Structured, human-readable form of a [`Network`] used for persistence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkDocument {
    pub config: NetworkConfig,
    pub layout: InputLayout,
    pub layers: Vec<LayerDocument>,
    pub optimizer: OptimizerState,
}

/// One layer's weight blocks (rows = neurons) and biases.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerDocument {
    pub blocks: Vec<BlockDocument>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockDocument {
    /// `functional:<k>`, `scalar`, or `previous`.
    pub input: String,
    pub weights: Vec<Vec<f64>>,
}

impl From<Network> for NetworkDocument {
    fn from(net: Network) -> Self {
        let k = net.layout.functional.len();
        let layers = net
            .shapes
            .iter()
            .enumerate()
            .map(|(u, shape)| LayerDocument {
                blocks: (0..shape.blocks.len())
                    .map(|bi| {
                        let view = net.block_view(u, bi);
                        BlockDocument {
                            input: match (u, bi) {
                                (0, bi) if bi < k => format!("functional:{bi}"),
                                (0, _) => "scalar".to_string(),
                                _ => "previous".to_string(),
                            },
                            weights: view
                                .row_iter()
                                .map(|r| r.iter().copied().collect())
                                .collect(),
                        }
                    })
                    .collect(),
                bias: net.layer_bias(u),
            })
            .collect();
        NetworkDocument {
            config: net.config,
            layout: net.layout,
            layers,
            optimizer: net.optimizer,
        }
    }
}

impl TryFrom<NetworkDocument> for Network {
    type Error = Error;

    fn try_from(doc: NetworkDocument) -> Result<Self> {
        doc.config.validate()?;
        let (shapes, n_params) = build_shapes(&doc.config, &doc.layout);
        if doc.layers.len() != shapes.len() {
            return Err(Error::ModelFormat(format!(
                "{} layers stored, configuration has {}",
                doc.layers.len(),
                shapes.len()
            )));
        }
        let mut params = vec![0.0; n_params];
        for (shape, layer) in shapes.iter().zip(&doc.layers) {
            if layer.blocks.len() != shape.blocks.len() || layer.bias.len() != shape.n_out {
                return Err(Error::ModelFormat("layer shape does not match configuration".into()));
            }
            for (b, stored) in shape.blocks.iter().zip(&layer.blocks) {
                if stored.weights.len() != shape.n_out
                    || stored.weights.iter().any(|r| r.len() != b.input_len)
                {
                    return Err(Error::ModelFormat(format!(
                        "block '{}' has the wrong shape",
                        stored.input
                    )));
                }
                for (i, row) in stored.weights.iter().enumerate() {
                    for (j, &w) in row.iter().enumerate() {
                        params[b.offset + j * shape.n_out + i] = w;
                    }
                }
            }
            params[shape.bias_offset..shape.bias_offset + shape.n_out].copy_from_slice(&layer.bias);
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::ModelFormat("non-finite parameter".into()));
        }
        Ok(Self {
            config: doc.config,
            layout: doc.layout,
            shapes,
            params,
            optimizer: doc.optimizer,
        })
    }
}
