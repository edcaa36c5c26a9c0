//! Loss, optimizer, and the per-sample training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{shape_err, Error, Result};
use crate::network::{Mode, Network};

/// Lower bound applied to the true-class probability before the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// `-ln p[label]`, with `p[label]` floored at [`PROB_FLOOR`].
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    let p = *probs.get(label).ok_or(Error::Index {
        index: label,
        limit: probs.len(),
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// RMSProp with a squared-gradient moving average.
///
/// The first step seeds the average with `g^2` and then still applies the
/// blend, so step one sees `alpha * g^2 + (1 - alpha) * g^2 = g^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub eta: f64,
    pub alpha: f64,
    pub epsilon: f64,
    sq_avg: Vec<f64>,
    step_count: u64,
}

impl RmsProp {
    pub const DEFAULT_ETA: f64 = 0.01;
    pub const DEFAULT_ALPHA: f64 = 0.99;
    pub const DEFAULT_EPSILON: f64 = 1e-8;

    /// Optimizer for `len` parameters with the default hyperparameters.
    pub fn new(len: usize) -> Self {
        Self::with_hyperparams(len, Self::DEFAULT_ETA, Self::DEFAULT_ALPHA, Self::DEFAULT_EPSILON)
    }

    pub fn with_hyperparams(len: usize, eta: f64, alpha: f64, epsilon: f64) -> Self {
        Self {
            eta,
            alpha,
            epsilon,
            sq_avg: vec![0.0; len],
            step_count: 0,
        }
    }

    /// Restores a saved optimizer.
    pub fn from_state(eta: f64, alpha: f64, epsilon: f64, sq_avg: Vec<f64>, step_count: u64) -> Result<Self> {
        if sq_avg.iter().any(|&v| v.is_nan() || v < 0.0) {
            return Err(Error::Argument("squared-gradient average must be non-negative".into()));
        }
        Ok(Self {
            eta,
            alpha,
            epsilon,
            sq_avg,
            step_count,
        })
    }

    pub fn sq_avg(&self) -> &[f64] {
        &self.sq_avg
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.sq_avg.len() || grads.len() != self.sq_avg.len() {
            return Err(shape_err(format!(
                "optimizer tracks {} parameters, got {} parameters and {} gradients",
                self.sq_avg.len(),
                params.len(),
                grads.len()
            )));
        }
        if self.step_count == 0 {
            for (s, g) in self.sq_avg.iter_mut().zip(grads) {
                *s = g * g;
            }
        }
        for ((theta, s), &g) in params.iter_mut().zip(&mut self.sq_avg).zip(grads) {
            *s = self.alpha * *s + (1.0 - self.alpha) * g * g;
            *theta -= self.eta * g / (s.sqrt() + self.epsilon);
        }
        self.step_count += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub seed: u64,
    /// Overrides the network's dropout rate when set.
    pub dropout_rate: Option<f64>,
    pub shuffle: bool,
    /// Evaluate and report every this many epochs (the last epoch always
    /// reports).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            seed: 0,
            dropout_rate: None,
            shuffle: true,
            eval_every: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

/// Mean loss and accuracy in eval mode. Samples are evaluated in parallel
/// and reduced in index order.
pub fn evaluate(network: &Network, dataset: &Dataset) -> Result<(f64, f64)> {
    if dataset.is_empty() {
        return Err(Error::Argument("cannot evaluate on an empty dataset".into()));
    }
    let per_sample = (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let probs = network.predict(&dataset.image(i))?;
            let label = dataset.label(i);
            Ok((cross_entropy(&probs, label)?, argmax(&probs) == label))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_sample.len() as f64;
    let loss = per_sample.iter().map(|(l, _)| l).sum::<f64>() / n;
    let correct = per_sample.iter().filter(|(_, ok)| *ok).count() as f64;
    Ok((loss, correct / n))
}

/// One forward/backward pass. Returns the loss and the parameter gradient.
pub fn loss_and_gradient(
    network: &mut Network,
    dataset: &Dataset,
    index: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<f64>)> {
    let label = dataset.label(index);
    let probs = network.forward(&dataset.image(index), Mode::Train, rng)?;
    let loss = cross_entropy(&probs, label)?;
    Ok((loss, network.backward(label)?))
}

/// Per-sample RMSProp training. `on_epoch` sees each reported epoch's
/// metrics together with the updated model and optimizer.
pub fn train<F>(
    network: &mut Network,
    optimizer: &mut RmsProp,
    train_set: &Dataset,
    test_set: &Dataset,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<Vec<EpochMetrics>>
where
    F: FnMut(&EpochMetrics, &Network, &RmsProp) -> Result<()>,
{
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::Argument("training needs non-empty train and test splits".into()));
    }
    if config.epochs == 0 || config.eval_every == 0 {
        return Err(Error::Argument("epochs and eval_every must be at least 1".into()));
    }
    if optimizer.sq_avg().len() != network.param_count() {
        return Err(shape_err(format!(
            "optimizer tracks {} parameters, network has {}",
            optimizer.sq_avg().len(),
            network.param_count()
        )));
    }
    if let Some(rate) = config.dropout_rate {
        network.set_dropout(rate)?;
    }

    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    order_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(2);

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut params = network.params();
    let mut history = Vec::new();
    for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut order_rng);
        }
        for &i in &order {
            let (_, grads) = loss_and_gradient(network, train_set, i, &mut dropout_rng)?;
            optimizer.step(&mut params, &grads)?;
            network.set_params(&params)?;
        }
        if epoch % config.eval_every == 0 || epoch == config.epochs {
            let (train_loss, train_accuracy) = evaluate(network, train_set)?;
            let (test_loss, test_accuracy) = evaluate(network, test_set)?;
            let metrics = EpochMetrics {
                epoch,
                train_loss,
                train_accuracy,
                test_loss,
                test_accuracy,
            };
            on_epoch(&metrics, network, optimizer)?;
            history.push(metrics);
        }
    }
    Ok(history)
}
