use log::warn;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;
use super::network::{mean_cross_entropy, InputLayout, Network};
use crate::error::{Error, Result};

/// Per-epoch record of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean cross-entropy on the training split after each epoch (inference mode).
    pub train_loss: Vec<f64>,
    pub train_accuracy: Vec<f64>,
    /// `None` when no validation split was held out.
    pub val_loss: Vec<Option<f64>>,
    pub val_accuracy: Vec<Option<f64>>,
    pub stopped_early: bool,
    /// Number of epochs actually run.
    pub stopped_epoch: usize,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn epochs_run(&self) -> usize {
        self.train_loss.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops once the monitored loss has failed to improve for `patience` epochs.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            wait: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.wait = 0;
            StopDecision::Improved
        } else {
            self.wait += 1;
            if self.wait >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Fraction of columns whose argmax matches the label.
pub(crate) fn accuracy(probs: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(j, &l)| argmax(probs.column(j).iter().copied()) == l)
        .count();
    hits as f64 / labels.len() as f64
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (h, v) in values.into_iter().enumerate() {
        if v > best_value {
            best = h;
            best_value = v;
        }
    }
    best
}

/// Trains a freshly initialized network on an `inputs` matrix (one column per
/// observation).
///
/// The data are shuffled under `config.seed`; the last `validation_split` fraction is
/// held out and scored after every epoch. Early stopping monitors validation loss
/// (training loss when nothing is held out) and restores the best parameters when it
/// triggers.
pub fn train_network(
    inputs: &DMatrix<f64>,
    labels: &[usize],
    layout: InputLayout,
    config: &NetworkConfig,
) -> Result<(Network, TrainHistory)> {
    config.validate()?;
    let n = labels.len();
    if inputs.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} input columns for {n} labels",
            inputs.ncols()
        )));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= layout.n_classes) {
        return Err(Error::InvalidLabel {
            label,
            n_classes: layout.n_classes,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut network = Network::init(config, layout, &mut rng)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = (config.validation_split * n as f64).floor() as usize;
    let n_train = n - n_val;
    if n_train == 0 {
        return Err(Error::Data("the training split is empty".into()));
    }
    let (mut train_idx, val_idx) = {
        let (t, v) = order.split_at(n_train);
        (t.to_vec(), v.to_vec())
    };
    let batch_size = if config.batch_size > n_train {
        warn!(
            "batch size {} exceeds the {n_train} training observations; using {n_train}",
            config.batch_size
        );
        n_train
    } else {
        config.batch_size
    };

    let gather = |idx: &[usize]| -> (DMatrix<f64>, Vec<usize>) {
        (inputs.select_columns(idx), idx.iter().map(|&i| labels[i]).collect())
    };
    let (train_x, train_y) = gather(&train_idx);
    let (val_x, val_y) = gather(&val_idx);

    let mut history = TrainHistory {
        train_loss: Vec::new(),
        train_accuracy: Vec::new(),
        val_loss: Vec::new(),
        val_accuracy: Vec::new(),
        stopped_early: false,
        stopped_epoch: 0,
        best_epoch: 0,
    };
    let mut stopper = config.patience.map(EarlyStopping::new);
    let mut best_params: Option<Vec<f64>> = None;

    for epoch in 0..config.epochs {
        train_idx.shuffle(&mut rng);
        for batch in train_idx.chunks(batch_size) {
            let (x, y) = gather(batch);
            let pass = network.forward_train(&x, &mut rng)?;
            let grads = network.backward(&pass, &y)?;
            network.step(&grads, epoch)?;
        }

        let train_probs = network.forward(&train_x)?.probabilities().clone();
        let train_loss = mean_cross_entropy(&train_probs, &train_y)?;
        history.train_loss.push(train_loss);
        history.train_accuracy.push(accuracy(&train_probs, &train_y));
        let monitored = if val_y.is_empty() {
            history.val_loss.push(None);
            history.val_accuracy.push(None);
            train_loss
        } else {
            let val_probs = network.forward(&val_x)?.probabilities().clone();
            let val_loss = mean_cross_entropy(&val_probs, &val_y)?;
            history.val_loss.push(Some(val_loss));
            history.val_accuracy.push(Some(accuracy(&val_probs, &val_y)));
            val_loss
        };
        history.stopped_epoch = epoch + 1;
        history.best_epoch = epoch + 1;

        if let Some(stopper) = stopper.as_mut() {
            match stopper.observe(epoch + 1, monitored) {
                StopDecision::Improved => best_params = Some(network.params().to_vec()),
                StopDecision::Continue => {}
                StopDecision::Stop => {
                    history.stopped_early = true;
                    history.best_epoch = stopper.best_epoch();
                    if let Some(best) = best_params.take() {
                        network.replace_params(best);
                    }
                    break;
                }
            }
        }
    }
    Ok((network, history))
}
